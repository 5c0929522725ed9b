#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <variant>

#include "doctest.h"
#include "falldef/cli.hpp"
#include "falldef/error.hpp"
#include "falldef/metrics.hpp"

using namespace falldef;
using namespace falldef::cli;
namespace fs = std::filesystem;

namespace {

struct Parsed {
  ParseOutcome outcome;
  std::string out, err;
};

Parsed parse(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Parsed p{parse_args(args, out, err), {}, {}};
  p.out = out.str();
  p.err = err.str();
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = main_entry(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("falldef_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("parse_args") {
  TEST_CASE("no arguments prints usage and fails") {
    Parsed p = parse({});
    CHECK_FALSE(p.outcome.command.has_value());
    CHECK(p.outcome.exit_code == kExitUsage);
    CHECK(p.err.find("train") != std::string::npos);
  }

  TEST_CASE("train flags override only what is given") {
    Parsed p = parse({"train", "--data", "d/", "--lr", "0.0001", "--batch", "128"});
    REQUIRE(p.outcome.command.has_value());
    const Command& c = *p.outcome.command;
    CHECK(c.name == "train");
    CHECK(c.train.data == "d/");
    CHECK(c.train.train.learning_rate == 0.0001);
    CHECK(c.train.train.batch_size == 128);
    const TrainConfig defaults;
    CHECK(c.train.train.max_epochs == defaults.max_epochs);
    CHECK(c.train.train.patience == defaults.patience);
    CHECK(c.train.arch == DgruArch{});
    CHECK(c.train.normalize);
    CHECK(c.config_json().find("\"command\":\"train\"") != std::string::npos);
  }

  TEST_CASE("invalid values exit 1 naming the flag") {
    Parsed p = parse({"train", "--data", "d/", "--lr", "-1"});
    CHECK_FALSE(p.outcome.command.has_value());
    CHECK(p.outcome.exit_code == kExitUsage);
    CHECK(p.err.find("--lr") != std::string::npos);
    Parsed t = parse({"serve", "--model", "m.json", "--threshold", "1.5"});
    CHECK(t.outcome.exit_code == kExitUsage);
    CHECK(t.err.find("--threshold") != std::string::npos);
  }

  TEST_CASE("unknown flags and commands are rejected") {
    CHECK(parse({"train", "--data", "d/", "--learning-rate", "1"}).outcome.exit_code == kExitUsage);
    CHECK(parse({"frobnicate"}).outcome.exit_code == kExitUsage);
    CHECK(parse({"train"}).outcome.exit_code == kExitUsage);
  }

  TEST_CASE("help succeeds") {
    Parsed p = parse({"--help"});
    CHECK_FALSE(p.outcome.command.has_value());
    CHECK(p.outcome.exit_code == kExitOk);
  }

  TEST_CASE("seed is accepted by every subcommand that uses randomness") {
    CHECK(parse({"train", "--data", "d", "--seed", "42"}).outcome.command->seed == 42);
    CHECK(parse({"prepare", "--train", "a.csv", "--out", "o", "--seed", "7"}).outcome.command->prepare.prepare.seed == 7);
    CHECK(parse({"synth", "--out", "s.csv", "--seed", "3"}).outcome.command->synth.synthetic.seed == 3);
  }

  TEST_CASE("environment sits between flags and defaults") {
    ::setenv("FALLDEF_THRESHOLD", "0.8", 1);
    Parsed env = parse({"serve", "--model", "m.json"});
    Parsed flag = parse({"serve", "--model", "m.json", "--threshold", "0.6"});
    ::unsetenv("FALLDEF_THRESHOLD");
    Parsed none = parse({"serve", "--model", "m.json"});
    REQUIRE(env.outcome.command.has_value());
    CHECK(env.outcome.command->serve.serve.alert_threshold == 0.8);
    CHECK(flag.outcome.command->serve.serve.alert_threshold == 0.6);
    CHECK(none.outcome.command->serve.serve.alert_threshold == 0.5);
    ::setenv("FALLDEF_MODEL", "env_model.json", 1);
    Parsed model = parse({"serve"});
    ::unsetenv("FALLDEF_MODEL");
    REQUIRE(model.outcome.command.has_value());
    CHECK(model.outcome.command->serve.serve.model_path == "env_model.json");
  }

  TEST_CASE("replay speedup accepts inf and zero") {
    auto a = parse({"replay", "--file", "r.csv", "--speedup", "inf"});
    auto b = parse({"replay", "--file", "r.csv", "--speedup", "0", "--target", "localhost:9000"});
    CHECK(std::isinf(a.outcome.command->replay.replay.speedup));
    CHECK(std::isinf(b.outcome.command->replay.replay.speedup));
    CHECK(b.outcome.command->replay.replay.target.port == 9000);
    CHECK(parse({"replay", "--file", "r.csv", "--speedup", "-2"}).outcome.exit_code == kExitUsage);
  }

  TEST_CASE("sweep lists") {
    auto p = parse({"sweep", "--data", "d", "--out", "o", "--lr", "0.001,0.0001", "--hidden", "8,16"});
    REQUIRE(p.outcome.command.has_value());
    CHECK(p.outcome.command->sweep.lrs == std::vector<double>{0.001, 0.0001});
    CHECK(p.outcome.command->sweep.hiddens == std::vector<std::size_t>{8, 16});
    CHECK(parse({"sweep", "--data", "d", "--out", "o", "--lr", "0.1,x"}).outcome.exit_code == kExitUsage);
  }
}

TEST_SUITE("helpers") {
  TEST_CASE("exit code mapping") {
    CHECK(exit_code_for(ErrorKind::InvalidArgument) == kExitUsage);
    CHECK(exit_code_for(ErrorKind::Divergence) == kExitDivergence);
    CHECK(exit_code_for(ErrorKind::Io) == kExitIo);
    CHECK(exit_code_for(ErrorKind::Network) == kExitIo);
    CHECK(exit_code_for(ErrorKind::Parse) == kExitData);
    CHECK(exit_code_for(ErrorKind::Version) == kExitData);
  }

  TEST_CASE("lists and columns") {
    CHECK(parse_double_list("1, 2.5,3", "lr") == std::vector<double>{1, 2.5, 3});
    CHECK_THROWS_AS(parse_double_list("", "lr"), Error);
    CHECK_THROWS_AS(parse_count_list("2,-1", "batch"), Error);
    CHECK(std::holds_alternative<std::monostate>(parse_column("none")));
    CHECK(std::get<std::size_t>(parse_column("3")) == 3);
    CHECK(std::get<std::string>(parse_column("acc_x")) == "acc_x");
    const fs::path dir = fresh_dir("dataset_path");
    CHECK(dataset_path(dir.string()) == (dir / "dataset.json").string());
    CHECK(dataset_path("file.json") == "file.json");
  }
}

TEST_SUITE("end to end") {
  TEST_CASE("synth, prepare, train and eval") {
    const fs::path dir = fresh_dir("e2e");
    const std::string csv = (dir / "rec.csv").string();
    const std::string data = (dir / "data").string();
    const std::string model_dir = (dir / "model").string();
    Run s = run_cli({"synth", "--out", csv, "--segments", "8", "--segment-length", "400", "--bursts", "2"});
    REQUIRE(s.code == 0);
    Run p = run_cli({"prepare", "--train", csv, "--test", csv, "--out", data});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    CHECK(fs::exists(dir / "data" / "dataset.json"));
    CHECK(fs::exists(dir / "data" / "manifest.json"));
    Run t = run_cli({"train", "--data", data, "--out", model_dir, "--hidden", "4", "--layers", "1",
                     "--epochs", "2", "--batch", "32", "--lr", "0.01"});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    CHECK(fs::exists(dir / "model" / "model.json"));
    CHECK(fs::exists(dir / "model" / "epoch_log.csv"));
    const std::string report = (dir / "report.json").string();
    Run e = run_cli({"eval", "--model", model_dir + "/model.json", "--data", data, "--out", report});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    std::ifstream f(report);
    EmittedReport r = parse_report(f);
    CHECK(r.epoch_log.size() == 2);
    CHECK(r.report.confusion.total() > 0);
    CHECK(r.config.find("model_provenance") != std::string::npos);
  }

  TEST_CASE("data and I/O failures map to their exit codes") {
    const fs::path dir = fresh_dir("errors");
    CHECK(run_cli({"prepare", "--train", (dir / "missing.csv").string(), "--out", (dir / "o").string()}).code == kExitIo);
    std::ofstream(dir / "bad.csv") << "t,ax,ay,az,label\n0,1,2,oops,0\n";
    Run bad = run_cli({"prepare", "--train", (dir / "bad.csv").string(), "--out", (dir / "o").string()});
    CHECK(bad.code == kExitData);
    CHECK(bad.err.find("bad.csv:2") != std::string::npos);
    std::ofstream(dir / "model.json") << "{\"format\": \"nope\"}";
    CHECK(run_cli({"eval", "--model", (dir / "model.json").string(), "--data", dir.string()}).code != kExitOk);
  }
}
