#pragma once

// Command-line front end. parse_args never exits the process; it returns
// either a validated Command or the exit status to use.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence,
// 4 I/O or network error.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "falldef/dataset.hpp"
#include "falldef/dataset_artifact.hpp"
#include "falldef/dgru.hpp"
#include "falldef/edge/replay.hpp"
#include "falldef/edge/session.hpp"
#include "falldef/synthetic.hpp"
#include "falldef/training.hpp"

namespace falldef::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
  kExitIo = 4,
};

struct PrepareOptions {
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
  std::string out_dir;
  CsvSchema schema;
  PrepareConfig prepare;
};

struct SynthOptions {
  std::string out;
  SyntheticConfig synthetic;
  /// When non-empty: one recording of `length` samples with bursts here.
  std::vector<std::size_t> burst_at;
  std::size_t length = 0;
};

struct TrainOptions {
  std::string data;
  std::string out_dir;
  DgruArch arch;
  TrainConfig train;
  bool normalize = true;
};

struct EvalOptions {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string out;
};

struct ServeOptions {
  edge::ServeConfig serve;
};

struct ReplayOptions {
  std::string file;
  std::string target = "127.0.0.1:7878";
  CsvSchema schema;
  edge::ReplayConfig replay;
};

struct SweepOptions {
  std::string data;
  std::string out_dir;
  std::vector<double> lrs;
  std::vector<std::size_t> hiddens;
  std::vector<std::size_t> batches;
  std::vector<std::size_t> patiences;
  TrainOptions base;
};

struct Command {
  std::string name;  // prepare, synth, train, eval, serve, replay, sweep
  std::uint64_t seed = 0;
  PrepareOptions prepare;
  SynthOptions synth;
  TrainOptions train;
  EvalOptions eval;
  ServeOptions serve;
  ReplayOptions replay;
  SweepOptions sweep;

  /// Resolved configuration of the selected subcommand as JSON text.
  std::string config_json() const;
};

struct ParseOutcome {
  std::optional<Command> command;
  int exit_code = kExitOk;  // meaningful when command is empty
};

/// `args` excludes the program name. Help and errors go to `out` / `err`.
ParseOutcome parse_args(const std::vector<std::string>& args, std::ostream& out,
                        std::ostream& err);

int run(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args followed by run.
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Maps an error kind to the documented exit code.
int exit_code_for(ErrorKind kind);

/// Parses "a,b,c" into numbers; throws Error(InvalidArgument) naming `flag`.
std::vector<double> parse_double_list(const std::string& text, const std::string& flag);
std::vector<std::size_t> parse_count_list(const std::string& text, const std::string& flag);

/// Column selector: "none" (absent), a zero-based index, or a header name.
ColumnRef parse_column(const std::string& text);

/// Resolves the dataset artifact path from a directory or file argument.
std::string dataset_path(const std::string& data);

}  // namespace falldef::cli
