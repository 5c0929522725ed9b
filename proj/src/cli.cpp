#include "falldef/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "falldef/edge/server.hpp"
#include "falldef/error.hpp"
#include "falldef/metrics.hpp"
#include "falldef/text_format.hpp"
#include "json.hpp"

namespace falldef::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return kExitUsage;
    case ErrorKind::Divergence:
      return kExitDivergence;
    case ErrorKind::Io:
    case ErrorKind::Network:
      return kExitIo;
    default:
      return kExitData;
  }
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.emplace_back(trim(item));
  return out;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    auto v = parse_double(item);
    if (!v || !std::isfinite(*v)) {
      throw Error(ErrorKind::InvalidArgument, "'" + item + "' is not a number", flag);
    }
    out.push_back(*v);
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "empty list", flag);
  return out;
}

std::vector<std::size_t> parse_count_list(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    auto v = parse_double(item);
    if (!v || *v < 1 || *v != std::floor(*v) || *v > 1e9) {
      throw Error(ErrorKind::InvalidArgument, "'" + item + "' is not a positive integer", flag);
    }
    out.push_back(static_cast<std::size_t>(*v));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "empty list", flag);
  return out;
}

ColumnRef parse_column(const std::string& text) {
  if (text == "none" || text.empty()) return std::monostate{};
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return static_cast<std::size_t>(std::stoull(text));
  }
  return text;
}

std::string dataset_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) return (p / "dataset.json").string();
  return p.string();
}

namespace {

// ---------------------------------------------------------------------------
// Config rendering

json column_json(const ColumnRef& c) {
  if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
  if (std::holds_alternative<std::size_t>(c)) return std::get<std::size_t>(c);
  return nullptr;
}

json schema_json(const CsvSchema& s) {
  json enc = json::object();
  for (const auto& [token, label] : s.label_encoding) enc[token] = code_of(label);
  return {{"delimiter", std::string(1, s.delimiter)},
          {"has_header", s.has_header},
          {"t", column_json(s.t)},
          {"ax", column_json(s.ax)},
          {"ay", column_json(s.ay)},
          {"az", column_json(s.az)},
          {"label", column_json(s.label)},
          {"segment", column_json(s.segment)},
          {"label_encoding", enc}};
}

json window_json(const WindowConfig& w) {
  return {{"window_size", w.window_size},
          {"fall_point_threshold", w.fall_point_threshold},
          {"stride", w.stride}};
}

json train_json(const TrainOptions& t, std::uint64_t seed) {
  return {{"data", t.data},
          {"hidden_dims", t.arch.hidden_dims},
          {"head_dim", t.arch.head_dim},
          {"learning_rate", t.train.learning_rate},
          {"batch_size", t.train.batch_size},
          {"max_epochs", t.train.max_epochs},
          {"patience", t.train.patience},
          {"grad_clip_norm", t.train.grad_clip_norm},
          {"optimizer", t.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"normalize", t.normalize},
          {"seed", seed},
          {"init_seed", mix_seed(seed, 4)},
          {"shuffle_seed", mix_seed(seed, 3)}};
}

}  // namespace

std::string Command::config_json() const {
  json c;
  if (name == "prepare") {
    c = {{"train_files", prepare.train_files},
         {"test_files", prepare.test_files},
         {"schema", schema_json(prepare.schema)},
         {"window", window_json(prepare.prepare.window)},
         {"val_fraction", prepare.prepare.val_fraction},
         {"balance", prepare.prepare.balance},
         {"seed", seed}};
  } else if (name == "synth") {
    const auto& s = synth.synthetic;
    c = {{"segments", s.segments},
         {"segment_length", s.segment_length},
         {"bursts_per_segment", s.bursts_per_segment},
         {"burst_length", s.burst_length},
         {"rate_hz", s.rate_hz},
         {"burst_at", synth.burst_at},
         {"length", synth.length},
         {"seed", seed}};
  } else if (name == "train") {
    c = train_json(train, seed);
  } else if (name == "eval") {
    c = {{"model", eval.model}, {"data", eval.data}, {"split", eval.split}, {"seed", seed}};
  } else if (name == "serve") {
    const auto& s = serve.serve;
    c = {{"bind", s.bind},
         {"model", s.model_path},
         {"alert_threshold", s.alert_threshold},
         {"cooldown_s", s.cooldown_s},
         {"stride", s.stride},
         {"webhook", s.webhook},
         {"retries", s.retry.retries},
         {"backoff_base_s", s.retry.backoff_base_s},
         {"alert_log", s.alert_log},
         {"queue_capacity", s.queue_capacity}};
  } else if (name == "replay") {
    c = {{"file", replay.file},
         {"target", replay.target},
         {"schema", schema_json(replay.schema)},
         {"rate_hz", replay.replay.rate_hz},
         {"speedup", std::isfinite(replay.replay.speedup) ? json(replay.replay.speedup) : json("inf")},
         {"seed", seed}};
  } else if (name == "sweep") {
    c = {{"base", train_json(sweep.base, seed)},
         {"lr", sweep.lrs},
         {"hidden", sweep.hiddens},
         {"batch", sweep.batches},
         {"patience", sweep.patiences}};
  }
  json doc = {{"command", name}, {"config", c}};
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct SchemaFlags {
  std::string delimiter = ",";
  bool no_header = false;
  std::string t = "t", ax = "ax", ay = "ay", az = "az", label = "label", segment = "none";
  std::string labels;

  void add_to(CLI::App* app) {
    app->add_option("--delimiter", delimiter, "Field delimiter (single character, or 'tab')")
        ->capture_default_str();
    app->add_flag("--no-header", no_header, "Input has no header row; columns are indices");
    app->add_option("--col-t", t, "Time column (name, index or 'none')")->capture_default_str();
    app->add_option("--col-ax", ax, "x acceleration column")->capture_default_str();
    app->add_option("--col-ay", ay, "y acceleration column")->capture_default_str();
    app->add_option("--col-az", az, "z acceleration column")->capture_default_str();
    app->add_option("--col-label", label, "Point label column (or 'none')")->capture_default_str();
    app->add_option("--col-segment", segment, "Column whose changes start a new recording")
        ->capture_default_str();
    app->add_option("--labels", labels, "Label encoding, e.g. 'Fall=1,ADL=0' (default 1=fall, 0=non-fall)");
  }

  CsvSchema resolve() const {
    CsvSchema s;
    if (delimiter == "tab" || delimiter == "\\t") s.delimiter = '\t';
    else if (delimiter.size() == 1) s.delimiter = delimiter[0];
    else throw Error(ErrorKind::InvalidArgument, "delimiter must be one character", "delimiter");
    s.has_header = !no_header;
    s.t = parse_column(t);
    s.ax = parse_column(ax);
    s.ay = parse_column(ay);
    s.az = parse_column(az);
    s.label = parse_column(label);
    s.segment = parse_column(segment);
    if (!labels.empty()) {
      try {
        s.label_encoding = parse_label_encoding(labels);
      } catch (const Error& e) {
        throw Error(ErrorKind::InvalidArgument, e.what(), "labels");
      }
    }
    try {
      s.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidArgument, e.what(), e.field().empty() ? "col-ax" : e.field());
    }
    return s;
  }
};

struct ModelFlags {
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t head_dim = 0;
  std::string optimizer = "adam";
  bool no_norm = false;

  void add_to(CLI::App* app, TrainOptions& t, bool with_hidden = true) {
    if (with_hidden) {
      app->add_option("--hidden", hidden, "Hidden units per recurrent layer")->capture_default_str();
    }
    app->add_option("--layers", layers, "Stacked recurrent layers")->capture_default_str();
    app->add_option("--head-dim", head_dim, "Width of the extra output matrix (0 = hidden)");
    app->add_option("--epochs", t.train.max_epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--clip", t.train.grad_clip_norm, "Gradient L2 clip norm (0 disables)")
        ->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
    app->add_flag("--no-norm", no_norm, "Disable per-channel input standardization");
  }

  void resolve(TrainOptions& t) const {
    if (layers < 1) throw Error(ErrorKind::InvalidArgument, "need at least one layer", "layers");
    if (hidden < 1) throw Error(ErrorKind::InvalidArgument, "hidden size must be >= 1", "hidden");
    t.arch.hidden_dims.assign(layers, hidden);
    t.arch.head_dim = head_dim == 0 ? hidden : head_dim;
    if (optimizer == "adam") t.train.optimizer = OptimizerKind::Adam;
    else if (optimizer == "sgd") t.train.optimizer = OptimizerKind::Sgd;
    else throw Error(ErrorKind::InvalidArgument, "unknown optimizer '" + optimizer + "'", "optimizer");
    t.normalize = !no_norm;
  }
};

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "validation fraction must be in (0, 1)", "val-fraction");
  }
}

}  // namespace

ParseOutcome parse_args(const std::vector<std::string>& args, std::ostream& out,
                        std::ostream& err) {
  Command cmd;
  CLI::App app{"Fall detection with a deep GRU classifier: data preparation, training, "
               "evaluation and a streaming alert service.",
               "falldef"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cmd.seed, "Base random seed")->capture_default_str();
  };

  // prepare
  SchemaFlags prep_schema;
  auto* prep = app.add_subcommand("prepare", "Window, balance and split recordings into a dataset artifact");
  prep->add_option("--train", cmd.prepare.train_files, "Training recording(s)")->required();
  prep->add_option("--test", cmd.prepare.test_files, "Test recording(s)");
  prep->add_option("--out", cmd.prepare.out_dir, "Output directory")->required();
  prep->add_option("--window", cmd.prepare.prepare.window.window_size, "Window length in samples")
      ->capture_default_str();
  prep->add_option("--fall-points", cmd.prepare.prepare.window.fall_point_threshold,
                   "Fall points needed to label a window fall")
      ->capture_default_str();
  prep->add_option("--stride", cmd.prepare.prepare.window.stride, "Window stride")->capture_default_str();
  prep->add_option("--val-fraction", cmd.prepare.prepare.val_fraction, "Validation share of training windows")
      ->capture_default_str();
  bool no_balance = false;
  prep->add_flag("--no-balance", no_balance, "Keep the class imbalance");
  prep_schema.add_to(prep);
  add_seed(prep);

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic labeled accelerometer recording set");
  std::string burst_at;
  syn->add_option("--out", cmd.synth.out, "Output CSV file")->required();
  syn->add_option("--segments", cmd.synth.synthetic.segments, "Number of recordings")->capture_default_str();
  syn->add_option("--segment-length", cmd.synth.synthetic.segment_length, "Samples per recording")
      ->capture_default_str();
  syn->add_option("--bursts", cmd.synth.synthetic.bursts_per_segment, "Fall bursts per recording")
      ->capture_default_str();
  syn->add_option("--burst-at", burst_at, "Single recording with bursts at these sample indices (a,b,...)");
  syn->add_option("--length", cmd.synth.length, "Length of the --burst-at recording");
  add_seed(syn);

  // train
  ModelFlags train_model;
  cmd.train.out_dir = ".";
  auto* tr = app.add_subcommand("train", "Train a model on a prepared dataset");
  tr->add_option("--data", cmd.train.data, "Dataset directory or file")->required();
  tr->add_option("--out", cmd.train.out_dir, "Output directory")->capture_default_str();
  tr->add_option("--lr", cmd.train.train.learning_rate, "Learning rate")->capture_default_str();
  tr->add_option("--batch", cmd.train.train.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--patience", cmd.train.train.patience, "Early-stopping patience")->capture_default_str();
  train_model.add_to(tr, cmd.train);
  add_seed(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model on a dataset split and write a report");
  ev->add_option("--model", cmd.eval.model, "Model file")->required();
  ev->add_option("--data", cmd.eval.data, "Dataset directory or file")->required();
  ev->add_option("--split", cmd.eval.split, "Split to score (train, val or test)")->capture_default_str();
  ev->add_option("--out", cmd.eval.out, "Report file (default: report.json)");
  add_seed(ev);

  // serve
  auto& sc = cmd.serve.serve;
  auto* srv = app.add_subcommand("serve", "Run the streaming inference service");
  srv->add_option("--model", sc.model_path, "Model file")->envname("FALLDEF_MODEL")->required();
  srv->add_option("--bind", sc.bind, "Listen address host:port")->envname("FALLDEF_BIND")->capture_default_str();
  srv->add_option("--threshold", sc.alert_threshold, "Alert threshold on p_fall")
      ->envname("FALLDEF_THRESHOLD")
      ->capture_default_str();
  srv->add_option("--cooldown", sc.cooldown_s, "Minimum event-time seconds between alerts")
      ->envname("FALLDEF_COOLDOWN")
      ->capture_default_str();
  srv->add_option("--webhook", sc.webhook, "http:// URL receiving alert POSTs")->envname("FALLDEF_WEBHOOK");
  srv->add_option("--stride", sc.stride, "Classify every N samples once the buffer is full")
      ->capture_default_str();
  srv->add_option("--alert-log", sc.alert_log, "Append-only alert log file")->capture_default_str();
  srv->add_option("--retries", sc.retry.retries, "Webhook retries after the first attempt")
      ->capture_default_str();
  srv->add_option("--backoff", sc.retry.backoff_base_s, "Initial retry delay in seconds (doubles)")
      ->capture_default_str();
  srv->add_option("--queue", sc.queue_capacity, "Pending webhook deliveries before dropping")
      ->capture_default_str();
  add_seed(srv);

  // replay
  SchemaFlags replay_schema;
  std::string speedup = "1";
  auto* rp = app.add_subcommand("replay", "Stream a recording to a running service");
  rp->add_option("--file", cmd.replay.file, "Recording (CSV)")->required();
  rp->add_option("--target", cmd.replay.target, "Service address host:port")->capture_default_str();
  rp->add_option("--rate", cmd.replay.replay.rate_hz, "Sampling rate in Hz")->capture_default_str();
  rp->add_option("--speedup", speedup, "Pacing multiplier ('inf' or 0 = unpaced)")->capture_default_str();
  replay_schema.add_to(rp);
  add_seed(rp);

  // sweep
  ModelFlags sweep_model;
  std::string lrs = "0.0001", hiddens = "256", batches = "128", patiences = "10";
  auto* sw = app.add_subcommand("sweep", "Grid search over training settings");
  sw->add_option("--data", cmd.sweep.base.data, "Dataset directory or file")->required();
  sw->add_option("--out", cmd.sweep.out_dir, "Output directory")->required();
  sw->add_option("--lr", lrs, "Learning rates (comma separated)")->capture_default_str();
  sw->add_option("--hidden", hiddens, "Hidden sizes (comma separated)")->capture_default_str();
  sw->add_option("--batch", batches, "Batch sizes (comma separated)")->capture_default_str();
  sw->add_option("--patience", patiences, "Patience values (comma separated)")->capture_default_str();
  sweep_model.add_to(sw, cmd.sweep.base, false);
  add_seed(sw);

  if (args.empty()) {
    err << app.help();
    return {std::nullopt, kExitUsage};
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return {std::nullopt, code == 0 ? kExitOk : kExitUsage};
  }

  try {
    for (auto* sub : app.get_subcommands()) cmd.name = sub->get_name();
    if (cmd.name == "prepare") {
      cmd.prepare.schema = prep_schema.resolve();
      cmd.prepare.prepare.balance = !no_balance;
      cmd.prepare.prepare.seed = cmd.seed;
      try {
        cmd.prepare.prepare.window.validate();
      } catch (const Error& e) {
        throw Error(ErrorKind::InvalidArgument, e.what(), "window");
      }
      check_fraction(cmd.prepare.prepare.val_fraction);
    } else if (cmd.name == "synth") {
      cmd.synth.synthetic.seed = cmd.seed;
      if (!burst_at.empty()) {
        for (double v : parse_double_list(burst_at, "burst-at")) {
          if (v < 0 || v != std::floor(v)) {
            throw Error(ErrorKind::InvalidArgument, "burst indices must be non-negative integers",
                        "burst-at");
          }
          cmd.synth.burst_at.push_back(static_cast<std::size_t>(v));
        }
        if (cmd.synth.length == 0) {
          throw Error(ErrorKind::InvalidArgument, "--burst-at needs --length", "length");
        }
      }
    } else if (cmd.name == "train") {
      train_model.resolve(cmd.train);
      cmd.train.train.seed = cmd.seed;
      cmd.train.train.validate();
    } else if (cmd.name == "eval") {
      if (cmd.eval.out.empty()) cmd.eval.out = "report.json";
      if (cmd.eval.split != "train" && cmd.eval.split != "val" && cmd.eval.split != "test") {
        throw Error(ErrorKind::InvalidArgument, "split must be train, val or test", "split");
      }
    } else if (cmd.name == "serve") {
      sc.validate();
      edge::parse_host_port(sc.bind);
      if (!sc.webhook.empty()) edge::parse_webhook_url(sc.webhook);
    } else if (cmd.name == "replay") {
      cmd.replay.schema = replay_schema.resolve();
      auto s = parse_double(speedup);
      if (!s || *s < 0) {
        throw Error(ErrorKind::InvalidArgument, "speedup must be >= 0 or 'inf'", "speedup");
      }
      cmd.replay.replay.speedup = *s == 0.0 ? std::numeric_limits<double>::infinity() : *s;
      if (!(cmd.replay.replay.rate_hz > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "rate must be > 0", "rate");
      }
      cmd.replay.replay.target = edge::parse_host_port(cmd.replay.target);
    } else if (cmd.name == "sweep") {
      cmd.sweep.lrs = parse_double_list(lrs, "lr");
      cmd.sweep.hiddens = parse_count_list(hiddens, "hidden");
      cmd.sweep.batches = parse_count_list(batches, "batch");
      cmd.sweep.patiences = parse_count_list(patiences, "patience");
      sweep_model.hidden = cmd.sweep.hiddens.front();
      sweep_model.resolve(cmd.sweep.base);
      cmd.sweep.base.train.seed = cmd.seed;
      for (double lr : cmd.sweep.lrs) {
        TrainConfig probe = cmd.sweep.base.train;
        probe.learning_rate = lr;
        probe.validate();
      }
      cmd.sweep.base.train.validate();
    }
  } catch (const Error& e) {
    err << "falldef " << cmd.name << ": ";
    if (!e.field().empty()) err << "--" << e.field() << ": ";
    err << e.what() << "\n";
    return {std::nullopt, kExitUsage};
  }
  return {std::move(cmd), kExitOk};
}

// ---------------------------------------------------------------------------
// Execution

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create directory " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

void write_epoch_log_file(const fs::path& path, std::span<const EpochRecord> records,
                          const std::string& config) {
  std::ostringstream buf;
  write_epoch_log(buf, records, config);
  write_text(path, buf.str());
}

int run_prepare(const Command& cmd, std::ostream& out) {
  const auto& p = cmd.prepare;
  std::vector<Segment> train_segs, test_segs;
  for (const auto& f : p.train_files) {
    auto segs = parse_csv_file(f, p.schema);
    train_segs.insert(train_segs.end(), std::make_move_iterator(segs.begin()),
                      std::make_move_iterator(segs.end()));
  }
  for (const auto& f : p.test_files) {
    auto segs = parse_csv_file(f, p.schema);
    test_segs.insert(test_segs.end(), std::make_move_iterator(segs.begin()),
                     std::make_move_iterator(segs.end()));
  }
  PreparedDataset ds = prepare_dataset(std::move(train_segs), std::move(test_segs), p.prepare,
                                       cmd.config_json());
  ensure_dir(p.out_dir);
  save_dataset(ds, fs::path(p.out_dir) / "dataset.json");
  write_text(fs::path(p.out_dir) / "manifest.json", json::parse(ds.manifest).dump(2) + "\n");
  for (const char* split : {"train", "val", "test"}) {
    std::size_t fall = 0, total = 0;
    if (auto it = ds.splits.find(split); it != ds.splits.end()) {
      total = it->second.size();
      for (const auto& r : it->second) fall += r.label == Label::Fall;
    }
    out << split << ": " << fall << " fall, " << (total - fall) << " non-fall\n";
  }
  out << "wrote " << (fs::path(p.out_dir) / "dataset.json").string() << "\n";
  return kExitOk;
}

void write_csv(const fs::path& path, const std::vector<Segment>& segs) {
  std::ostringstream buf;
  buf << "segment,t,ax,ay,az,label\n";
  for (const auto& seg : segs) {
    for (const auto& s : seg.samples) {
      buf << seg.id << ',' << (s.t ? format_double(*s.t) : std::string()) << ','
          << format_double(s.ax) << ',' << format_double(s.ay) << ',' << format_double(s.az) << ','
          << (s.point_label ? std::to_string(code_of(*s.point_label)) : std::string()) << '\n';
    }
  }
  write_text(path, buf.str());
}

int run_synth(const Command& cmd, std::ostream& out) {
  const auto& s = cmd.synth;
  std::vector<Segment> segs;
  if (!s.burst_at.empty()) {
    Rng rng(s.synthetic.seed);
    segs.push_back(synthetic_recording(s.length, s.burst_at, s.synthetic, rng, "recording"));
  } else {
    segs = generate_synthetic(s.synthetic);
  }
  write_csv(s.out, segs);
  std::size_t n = 0;
  for (const auto& seg : segs) n += seg.samples.size();
  out << "wrote " << segs.size() << " recording(s), " << n << " samples to " << s.out << "\n";
  return kExitOk;
}

struct TrainedRun {
  TrainResult result;
  std::string config;
};

TrainedRun train_once(const TrainOptions& opts, std::uint64_t seed, const PreparedDataset& ds,
                      const std::string& config, std::ostream& out) {
  auto train_set = ds.materialize("train");
  auto val_set = ds.materialize("val");
  DgruArch arch = opts.arch;
  arch.window_size = ds.window.window_size;
  arch.input_dim = kAccelChannels;
  Rng init(mix_seed(seed, 4));
  DgruModel model = make_model(arch, init);
  if (opts.normalize) model.norm = compute_norm_stats(train_set);
  model.provenance = config;
  TrainConfig tc = opts.train;
  tc.seed = seed;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const DgruModel&) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %3zu  train_loss %.5f  val_loss %.5f  val_acc %.4f\n",
                  r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
    out << buf << std::flush;
  };
  return {train(std::move(model), train_set, val_set, tc, hooks), config};
}

int run_train(const Command& cmd, std::ostream& out) {
  const auto& t = cmd.train;
  PreparedDataset ds = load_dataset(dataset_path(t.data));
  const std::string config = cmd.config_json();
  ensure_dir(t.out_dir);
  const fs::path dir(t.out_dir);
  try {
    TrainedRun run = train_once(t, cmd.seed, ds, config, out);
    save_model(run.result.model, dir / "model.json");
    write_epoch_log_file(dir / "epoch_log.csv", run.result.report.records, config);
    out << "best epoch " << run.result.report.best_epoch << ", stopped at epoch "
        << run.result.report.stopped_epoch << (run.result.report.stopped_early ? " (early stop)" : "")
        << "\nwrote " << (dir / "model.json").string() << "\n";
  } catch (const TrainingDiverged& e) {
    write_epoch_log_file(dir / "epoch_log.csv", e.report().records, config);
    throw;
  }
  return kExitOk;
}

int run_eval(const Command& cmd, std::ostream& out) {
  const auto& e = cmd.eval;
  DgruModel model = load_model(e.model);
  PreparedDataset ds = load_dataset(dataset_path(e.data));
  auto instances = ds.materialize(e.split);
  if (instances.empty()) {
    throw Error(ErrorKind::EmptyInput, "split '" + e.split + "' of " + e.data + " has no windows");
  }
  if (ds.window.window_size != model.arch.window_size) {
    throw Error(ErrorKind::Shape, "dataset window " + std::to_string(ds.window.window_size) +
                                      " does not match model window " +
                                      std::to_string(model.arch.window_size));
  }
  std::vector<Label> labels;
  labels.reserve(instances.size());
  for (const auto& w : instances) labels.push_back(w.label);
  const EvalReport rep = report(predict_all(model, instances), labels);

  // Epoch history comes from the training log next to the model, if any.
  std::vector<EpochRecord> history;
  const fs::path log_path = fs::path(e.model).parent_path() / "epoch_log.csv";
  if (fs::exists(log_path)) {
    std::ifstream f(log_path);
    history = read_epoch_log(f);
  }
  json config = json::parse(cmd.config_json());
  config["model_provenance"] = model.provenance.empty() ? json::object() : json::parse(model.provenance);
  emit_report(rep, history, fs::path(e.out), config.dump());
  out << format_report_table(rep) << "wrote " << e.out << "\n";
  return kExitOk;
}

int run_serve(const Command& cmd, std::ostream& out) {
  const auto& sc = cmd.serve.serve;
  DgruModel model = load_model(sc.model_path);
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  sigset_t old;
  pthread_sigmask(SIG_BLOCK, &sigs, &old);
  edge::Server server(std::move(model), sc);
  server.start();
  out << "listening on " << edge::parse_host_port(sc.bind).host << ":" << server.port() << "\n" << std::flush;
  int sig = 0;
  sigwait(&sigs, &sig);
  out << "shutting down\n";
  server.stop();
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  const auto st = server.stats();
  out << st.connections << " connection(s), " << st.events << " events, " << st.alerts
      << " alerts\n";
  return kExitOk;
}

int run_replay(const Command& cmd, std::ostream& out) {
  const auto summary = edge::replay_file(cmd.replay.file, cmd.replay.schema, cmd.replay.replay);
  out << edge::format_replay_summary(summary);
  return kExitOk;
}

int run_sweep(const Command& cmd, std::ostream& out) {
  const auto& sw = cmd.sweep;
  PreparedDataset ds = load_dataset(dataset_path(sw.base.data));
  ensure_dir(sw.out_dir);
  const fs::path dir(sw.out_dir);
  std::ostringstream table;
  table << "row,lr,hidden,batch,patience,seed,best_epoch,stopped_epoch,best_val_loss,"
           "best_val_accuracy,status\n";
  std::size_t row = 0;
  std::optional<std::size_t> best_row;
  double best_loss = std::numeric_limits<double>::infinity();
  std::optional<DgruModel> best_model;
  for (double lr : sw.lrs) {
    for (std::size_t hidden : sw.hiddens) {
      for (std::size_t batch : sw.batches) {
        for (std::size_t patience : sw.patiences) {
          TrainOptions opts = sw.base;
          opts.train.learning_rate = lr;
          opts.train.batch_size = batch;
          opts.train.patience = patience;
          const std::size_t layers = opts.arch.hidden_dims.size();
          const bool head_follows = opts.arch.head_dim == opts.arch.hidden_dims.front();
          opts.arch.hidden_dims.assign(layers, hidden);
          if (head_follows) opts.arch.head_dim = hidden;
          const std::uint64_t seed = mix_seed(cmd.seed, row);
          json config = {{"command", "sweep"}, {"row", row}, {"config", train_json(opts, seed)}};
          out << "row " << row << ": lr " << format_double(lr) << " hidden " << hidden << " batch "
              << batch << " patience " << patience << "\n";
          table << row << ',' << format_double(lr) << ',' << hidden << ',' << batch << ','
                << patience << ',' << seed << ',';
          try {
            TrainedRun run = train_once(opts, seed, ds, config.dump(), out);
            const auto& rep = run.result.report;
            const EpochRecord& best = rep.records.at(rep.best_epoch - 1);
            table << rep.best_epoch << ',' << rep.stopped_epoch << ',' << format_double(best.val_loss)
                  << ',' << format_double(best.val_accuracy) << ",ok\n";
            write_epoch_log_file(dir / ("row" + std::to_string(row) + "_epoch_log.csv"), rep.records,
                                 config.dump());
            if (best.val_loss < best_loss) {
              best_loss = best.val_loss;
              best_row = row;
              best_model = std::move(run.result.model);
            }
          } catch (const TrainingDiverged& e) {
            table << ",,,,diverged\n";
            out << "row " << row << " diverged: " << e.what() << "\n";
          }
          ++row;
        }
      }
    }
  }
  write_text(dir / "sweep.csv", table.str());
  if (!best_model) throw Error(ErrorKind::Divergence, "every sweep row diverged");
  save_model(*best_model, dir / "best_model.json");
  out << "selected row " << *best_row << " (val_loss " << format_double(best_loss) << ")\nwrote "
      << (dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const Command& cmd, std::ostream& out, std::ostream& err) {
  try {
    if (cmd.name == "prepare") return run_prepare(cmd, out);
    if (cmd.name == "synth") return run_synth(cmd, out);
    if (cmd.name == "train") return run_train(cmd, out);
    if (cmd.name == "eval") return run_eval(cmd, out);
    if (cmd.name == "serve") return run_serve(cmd, out);
    if (cmd.name == "replay") return run_replay(cmd, out);
    if (cmd.name == "sweep") return run_sweep(cmd, out);
    err << "falldef: unknown command '" << cmd.name << "'\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "falldef " << cmd.name << ": " << to_string(e.kind()) << " error: " << e.what();
    if (!e.field().empty()) err << " [" << e.field() << "]";
    err << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    err << "falldef " << cmd.name << ": parse error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "falldef " << cmd.name << ": I/O error: " << e.what() << "\n";
    return kExitIo;
  }
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  ParseOutcome parsed = parse_args(args, out, err);
  if (!parsed.command) return parsed.exit_code;
  return run(*parsed.command, out, err);
}

}  // namespace falldef::cli
