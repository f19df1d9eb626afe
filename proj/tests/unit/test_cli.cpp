// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arrn/config.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = arrn::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Scratch directory with a tiny config and two small synthetic datasets.
struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "arrn_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    arrn::ModelConfig c = arrn::preset_config("gradcheck_tiny");
    c.K = 2;
    c.epochs = 2;
    c.batch_size = 4;
    c.rng_seed = 3;
    arrn::save_config(dir / "config.json", c);
    REQUIRE(run({"synth", "--out", path("train.jsonl"), "--samples", "4", "--joints", "4", "--min-frames", "2",
                 "--max-frames", "5", "--seed", "1"})
                .code == 0);
    REQUIRE(run({"synth", "--out", path("val.jsonl"), "--samples", "3", "--joints", "4", "--min-frames", "2",
                 "--max-frames", "5", "--seed", "2"})
                .code == 0);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  Run train(const std::string& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{"train", "--config", path("config.json"), "--train", path("train.jsonl"),
                                  "--val", path("val.jsonl"), "--out", path(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }
};

}  // namespace

TEST_CASE("synth writes the requested dataset") {
  Workspace ws;
  const auto a = run({"synth", "--out", ws.path("a.jsonl"), "--classes", "2", "--samples", "20", "--seed", "9"});
  CHECK(a.code == 0);
  CHECK(a.out.find("40 sequences") != std::string::npos);
  CHECK(lines_of(slurp(ws.path("a.jsonl"))).size() == 40);
  run({"synth", "--out", ws.path("b.jsonl"), "--classes", "2", "--samples", "20", "--seed", "9"});
  CHECK(slurp(ws.path("a.jsonl")) == slurp(ws.path("b.jsonl")));

  const auto bad = run({"synth", "--out", ws.path("c.jsonl"), "--joints", "1"});
  CHECK(bad.code == 1);
  CHECK_FALSE(bad.err.empty());
  CHECK(run({"synth", "--out", "/nonexistent/dir/x.jsonl"}).code == 1);
}

TEST_CASE("train with one stream reports only that stream") {
  Workspace ws;
  const auto r = ws.train("joint", {"--stream", "joint"});
  REQUIRE(r.code == 0);
  const json report = json::parse(slurp(ws.path("joint/report.json")));
  CHECK(report["streams"] == json::array({"joint"}));
  CHECK(report["epochs"].size() == 2);
  for (const auto& e : report["epochs"]) {
    CHECK(e.contains("joint"));
    CHECK_FALSE(e.contains("line"));
  }
  CHECK(report["fusion"].is_null());
  CHECK(report["final"]["line_val_accuracy"].is_null());
  CHECK(r.out.find("alpha") == std::string::npos);
}

TEST_CASE("train with both streams tunes the fusion weights") {
  Workspace ws;
  const auto r = ws.train("both");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("alpha=") != std::string::npos);
  CHECK(r.out.find("beta=") != std::string::npos);
  const json report = json::parse(slurp(ws.path("both/report.json")));
  CHECK(report["format_version"] == 1);
  const double alpha = report["fusion"]["alpha"], beta = report["fusion"]["beta"];
  CHECK(std::abs(alpha + beta - 1.0) <= 1e-12);
  CHECK(report["attention"] == true);

  // The same seed reproduces the report byte for byte.
  REQUIRE(ws.train("again").code == 0);
  CHECK(slurp(ws.path("both/report.json")) == slurp(ws.path("again/report.json")));
  CHECK(slurp(ws.path("both/model.json")) == slurp(ws.path("again/model.json")));
}

TEST_CASE("train --seed overrides the config seed") {
  Workspace ws;
  REQUIRE(ws.train("s1", {"--stream", "line", "--seed", "11"}).code == 0);
  REQUIRE(ws.train("s2", {"--stream", "line", "--seed", "11"}).code == 0);
  REQUIRE(ws.train("s3", {"--stream", "line", "--seed", "12"}).code == 0);
  CHECK(slurp(ws.path("s1/report.json")) == slurp(ws.path("s2/report.json")));
  CHECK(slurp(ws.path("s1/model.json")) != slurp(ws.path("s3/model.json")));
  CHECK(json::parse(slurp(ws.path("s1/model.json")))["config"]["rng_seed"] == 11);
}

TEST_CASE("train --no-attention freezes the mask") {
  Workspace ws;
  REQUIRE(ws.train("frozen", {"--stream", "joint", "--no-attention"}).code == 0);
  const json report = json::parse(slurp(ws.path("frozen/report.json")));
  CHECK(report["attention"] == false);
  const json model = json::parse(slurp(ws.path("frozen/model.json")));
  for (const auto& t : model["tensors"]) {
    if (t["name"] == "joint/attention.mask") CHECK(t["data"] == json::array({1.0, 1.0, 1.0, 1.0}));
  }
}

TEST_CASE("train rejects a broken config before training") {
  Workspace ws;
  json cfg = json::parse(slurp(ws.path("config.json")));
  cfg["alpha"] = 0.9;
  std::ofstream(ws.path("bad.json")) << cfg.dump();
  const auto r = run({"train", "--config", ws.path("bad.json"), "--train", ws.path("train.jsonl"), "--val",
                      ws.path("val.jsonl"), "--out", ws.path("bad")});
  CHECK(r.code == 1);
  CHECK(r.err.find("alpha") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.path("bad/report.json")));
}

TEST_CASE("eval and predict") {
  Workspace ws;
  REQUIRE(ws.train("m").code == 0);
  const auto e = run({"eval", "--model", ws.path("m/model.json"), "--data", ws.path("val.jsonl")});
  REQUIRE(e.code == 0);
  const json doc = json::parse(lines_of(e.out).front());
  CHECK(doc["samples"] == 6);
  CHECK(doc["fused_accuracy"].is_number());
  CHECK(doc["joint_accuracy"].is_number());
  CHECK(e.out.find("fused") != std::string::npos);

  std::ofstream(ws.path("empty.jsonl")).close();
  CHECK(run({"eval", "--model", ws.path("m/model.json"), "--data", ws.path("empty.jsonl")}).code != 0);

  const auto p = run({"predict", "--model", ws.path("m/model.json"), "--input", ws.path("val.jsonl")});
  REQUIRE(p.code == 0);
  const auto rows = lines_of(p.out);
  CHECK(rows.size() == 6);
  for (const auto& row : rows) {
    const json r = json::parse(row);
    double total = 0.0;
    for (double v : r["probabilities"]) total += v;
    CHECK(r["probabilities"].size() == 2);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(r["argmax"].get<int>() < 2);
  }

  // A dataset with the wrong joint count names the problem.
  run({"synth", "--out", ws.path("j5.jsonl"), "--joints", "5", "--samples", "1"});
  const auto mismatch = run({"eval", "--model", ws.path("m/model.json"), "--data", ws.path("j5.jsonl")});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("expected 4 joints") != std::string::npos);
}

TEST_CASE("gradcheck exit codes") {
  const auto ok = run({"gradcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(ok.out.find("node.update.w") != std::string::npos);

  const auto loose = run({"gradcheck", "--epsilon", "1e-3"});
  CHECK(loose.code == 0);
  CHECK(loose.out.find("epsilon 0.001") != std::string::npos);

  const auto faulty = run({"gradcheck", "--inject-fault"});
  CHECK(faulty.code == 1);
  CHECK(faulty.out.find("FAIL") != std::string::npos);

  // The fault switch must not leak into later checks.
  CHECK(run({"gradcheck", "--seed", "2"}).code == 0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"synth"}).code == 2);
  CHECK(run({"train", "--config", "x"}).code == 2);
  CHECK(run({"synth", "--out", "x", "--classes", "two"}).code == 2);
  CHECK(run({"train", "--config", "a", "--train", "b", "--val", "c", "--out", "d", "--stream", "skeleton"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("missing input files fail with 1") {
  CHECK(run({"eval", "--model", "/nonexistent/model.json", "--data", "/nonexistent/data.jsonl"}).code == 1);
  CHECK(run({"gradcheck", "--config", "/nonexistent/config.json"}).code == 1);
}
