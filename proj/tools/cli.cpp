// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "arrn/autodiff.hpp"
#include "arrn/config.hpp"
#include "arrn/gradcheck.hpp"
#include "arrn/model.hpp"
#include "arrn/random.hpp"
#include "arrn/skeleton.hpp"
#include "arrn/trainer.hpp"

namespace arrn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A check or validation failure; maps to exit code 1.
struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Failure(std::string(what) + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure("cannot write " + path.string());
  out << text;
  if (!out) throw Failure("write failed for " + path.string());
}

std::string fmt_acc(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void print_accuracy_table(std::ostream& out, const std::optional<double>& joint, const std::optional<double>& line,
                          double fused) {
  out << std::left << std::setw(10) << "stream" << "accuracy\n";
  out << std::setw(10) << "joint" << fmt_acc(joint) << '\n';
  out << std::setw(10) << "line" << fmt_acc(line) << '\n';
  out << std::setw(10) << "fused" << fmt_acc(fused) << '\n';
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t classes = 2;
  std::size_t samples = 20;
  std::size_t joints = 5;
  std::size_t min_frames = 6;
  std::size_t max_frames = 12;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.joints < 2) throw Failure("--joints must be at least 2 (line features need two joints)");
  if (a.classes < 2) throw Failure("--classes must be at least 2");
  if (a.samples < 1) throw Failure("--samples must be at least 1");
  if (a.min_frames < 1 || a.min_frames > a.max_frames) throw Failure("need 1 <= --min-frames <= --max-frames");
  const auto data = generate_synthetic({a.classes, a.samples, a.joints, a.min_frames, a.max_frames, a.noise, a.seed});
  write_text(a.out, serialize_dataset(data));
  out << data.size() << " sequences written to " << a.out << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string train;
  std::string val;
  std::string out;
  std::string stream = "both";
  bool no_attention = false;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_file(a.config, "config");
  require_file(a.train, "training data");
  require_file(a.val, "validation data");
  ModelConfig config = load_config(a.config);
  if (a.no_attention) config.attention = false;
  if (a.seed) config.rng_seed = *a.seed;
  const auto train_set = load_dataset(a.train, config.dataset_spec());
  const auto val_set = load_dataset(a.val, config.dataset_spec());
  if (train_set.empty()) throw Failure("training data is empty: " + a.train);
  if (val_set.empty()) throw Failure("validation data is empty: " + a.val);
  fs::create_directories(a.out);

  TrainOptions options;
  options.train_joint = a.stream != "line";
  options.train_line = a.stream != "joint";
  options.threads = a.threads;
  TrainResult result = train(train_set, val_set, config, options);

  json fusion = nullptr;
  if (result.model.joint && result.model.line) {
    const EvalResult val = evaluate(result.model, val_set, config.alpha, config.beta, a.threads);
    const FusionWeights w = tune_fusion_weights(val.joint_probs, val.line_probs, val.labels);
    result.model.config.alpha = w.alpha;
    result.model.config.beta = w.beta;
    fusion = {{"alpha", w.alpha}, {"beta", w.beta}, {"val_accuracy", w.accuracy}};
  }
  const EvalResult final_val =
      evaluate(result.model, val_set, result.model.config.alpha, result.model.config.beta, a.threads);

  json report = result.report.to_json();
  report["attention"] = result.model.config.attention;
  report["fusion"] = fusion;
  report["final"] = {{"joint_val_accuracy", opt_json(final_val.joint_accuracy)},
                     {"line_val_accuracy", opt_json(final_val.line_accuracy)},
                     {"fused_val_accuracy", final_val.fused_accuracy}};
  write_text(fs::path(a.out) / "report.json", report.dump(2) + "\n");
  save_model(fs::path(a.out) / "model.json", result.model);

  out << "trained " << (a.stream == "both" ? "joint+line" : a.stream) << " stream"
      << (a.stream == "both" ? "s" : "") << " for " << result.report.epochs.size() << " epochs"
      << (config.attention ? "" : " (attention mask frozen)") << '\n';
  if (!fusion.is_null()) {
    out << "tuned fusion weights: alpha=" << result.model.config.alpha << " beta=" << result.model.config.beta << '\n';
  }
  out << "validation:\n";
  print_accuracy_table(out, final_val.joint_accuracy, final_val.line_accuracy, final_val.fused_accuracy);
  out << "model: " << (fs::path(a.out) / "model.json").string() << '\n';
  out << "report: " << (fs::path(a.out) / "report.json").string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- eval / predict

struct EvalArgs {
  std::string model;
  std::string data;
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.model, "model");
  require_file(a.data, "data");
  const TwoStreamModel model = load_model(a.model);
  const auto data = load_dataset(a.data, model.config.dataset_spec());
  if (data.empty()) throw Failure("no sequences in " + a.data);
  const EvalResult r = evaluate(model, data, model.config.alpha, model.config.beta, a.threads);
  json doc = {{"format_version", kReportFormatVersion},
              {"samples", data.size()},
              {"alpha", model.config.alpha},
              {"beta", model.config.beta},
              {"joint_accuracy", opt_json(r.joint_accuracy)},
              {"line_accuracy", opt_json(r.line_accuracy)},
              {"fused_accuracy", r.fused_accuracy}};
  out << doc.dump() << '\n';
  print_accuracy_table(out, r.joint_accuracy, r.line_accuracy, r.fused_accuracy);
  return kSuccess;
}

int cmd_predict(const EvalArgs& a, std::ostream& out) {
  require_file(a.model, "model");
  require_file(a.data, "input");
  const TwoStreamModel model = load_model(a.model);
  const auto data = load_dataset(a.data, model.config.dataset_spec());
  if (data.empty()) throw Failure("no sequences in " + a.data);
  const EvalResult r = evaluate(model, data, model.config.alpha, model.config.beta, a.threads);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor& y = r.fused_probs[i];
    json doc = {{"index", i}, {"probabilities", y.storage()}, {"argmax", argmax(y)}};
    out << doc.dump() << '\n';
  }
  return kSuccess;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig config = a.config.empty() ? preset_config("gradcheck_tiny") : (require_file(a.config, "config"), load_config(a.config));
  config.rng_seed = a.seed;
  const auto samples = generate_synthetic({config.K, 1, config.J, 1, 2 * config.T, 0.05, derive_seed(a.seed, {1})});
  const auto prepared = prepare_for_eval(samples, config);
  const SkeletonSequence& sample = prepared[a.seed % prepared.size()];

  TwoStreamModel model = init_model(config);
  struct FaultGuard {
    explicit FaultGuard(bool on) { debug::set_tanh_gradient_fault(on); }
    ~FaultGuard() { debug::set_tanh_gradient_fault(false); }
  } guard(a.inject_fault);

  const GradCheckOptions options{a.epsilon, 1e-5};
  bool passed = true;
  double worst = 0.0;
  for (auto* stream : {&*model.joint, &*model.line}) {
    if (stream->parameter_count() > 10000) {
      err << "warning: " << to_string(stream->kind) << " stream has " << stream->parameter_count()
          << " parameters; the finite-difference check will be slow\n";
    }
    const GradCheckReport r = check_stream_gradients(*stream, config, sample, options);
    out << to_string(stream->kind) << " stream\n";
    out << "  " << std::left << std::setw(26) << "parameter" << std::right << std::setw(7) << "size" << std::setw(14)
        << "rel_error" << std::setw(14) << "abs_error" << '\n';
    for (const auto& p : r.parameters) {
      out << "  " << std::left << std::setw(26) << p.name << std::right << std::setw(7) << p.count
          << std::scientific << std::setprecision(3) << std::setw(14) << p.relative_error << std::setw(14)
          << p.max_absolute_error << std::defaultfloat << '\n';
    }
    passed = passed && r.passed;
    worst = std::max(worst, r.max_relative_error);
  }
  out << "epsilon " << a.epsilon << ", max relative error " << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat << " (tolerance 1e-05): " << (passed ? "PASS" : "FAIL") << '\n';
  return passed ? kSuccess : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stream attentional recurrent relational network for skeleton action recognition"};
  app.name("arrn");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* sc_synth = app.add_subcommand("synth", "Write a synthetic JSON-lines skeleton dataset");
  sc_synth->add_option("--out", synth.out, "Output path")->required();
  sc_synth->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
  sc_synth->add_option("--samples", synth.samples, "Samples per class")->capture_default_str();
  sc_synth->add_option("--joints", synth.joints, "Joints per skeleton")->capture_default_str();
  sc_synth->add_option("--min-frames", synth.min_frames, "Shortest sequence")->capture_default_str();
  sc_synth->add_option("--max-frames", synth.max_frames, "Longest sequence")->capture_default_str();
  sc_synth->add_option("--noise", synth.noise, "Gaussian noise scale")->capture_default_str();
  sc_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* sc_train = app.add_subcommand("train", "Train one or both streams");
  sc_train->add_option("--config", tr.config, "Model config JSON")->required();
  sc_train->add_option("--train", tr.train, "Training dataset")->required();
  sc_train->add_option("--val", tr.val, "Validation dataset")->required();
  sc_train->add_option("--out", tr.out, "Output directory")->required();
  sc_train->add_option("--stream", tr.stream, "joint, line or both")
      ->check(CLI::IsMember({"joint", "line", "both"}))
      ->capture_default_str();
  sc_train->add_flag("--no-attention", tr.no_attention, "Freeze the attention mask at ones");
  sc_train->add_option("--seed", tr.seed, "Override the config's rng_seed");
  sc_train->add_option("--threads", tr.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  EvalArgs ev;
  auto* sc_eval = app.add_subcommand("eval", "Per-stream and fused accuracy on a dataset");
  sc_eval->add_option("--model", ev.model, "Model file")->required();
  sc_eval->add_option("--data", ev.data, "Dataset")->required();
  sc_eval->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs pr;
  auto* sc_predict = app.add_subcommand("predict", "Class probabilities for each input sequence");
  sc_predict->add_option("--model", pr.model, "Model file")->required();
  sc_predict->add_option("--input", pr.data, "Input sequences")->required();

  GradcheckArgs gc;
  auto* sc_grad = app.add_subcommand("gradcheck", "Finite-difference check of both streams' gradients");
  sc_grad->add_option("--config", gc.config, "Model config JSON (default: built-in tiny config)");
  sc_grad->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  sc_grad->add_option("--epsilon", gc.epsilon, "Central-difference step")->capture_default_str();
  sc_grad->add_flag("--inject-fault", gc.inject_fault, "Corrupt the tanh gradient (negative control)")
      ->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*sc_synth) return cmd_synth(synth, out);
    if (*sc_train) return cmd_train(tr, out);
    if (*sc_eval) return cmd_eval(ev, out);
    if (*sc_predict) return cmd_predict(pr, out);
    if (*sc_grad) return cmd_gradcheck(gc, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace arrn::cli
