#include "falldef/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "falldef/text_format.hpp"

namespace falldef {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::InvalidArgument, "learning_rate must be > 0", "lr");
  }
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1", "batch");
  if (max_epochs < 1) throw Error(ErrorKind::InvalidArgument, "max_epochs must be >= 1", "epochs");
  if (patience < 1) throw Error(ErrorKind::InvalidArgument, "patience must be >= 1", "patience");
  if (!(grad_clip_norm >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "grad_clip_norm must be >= 0 (0 disables)", "clip");
  }
}

OptimizerState make_optimizer_state(const DgruParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

double gradient_norm(const Gradients& grads) {
  double ss = 0.0;
  for (const auto& ref : parameter_list(grads)) {
    for (double g : ref.values) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_gradients(Gradients& grads, double max_norm) {
  double ss = 0.0;
  auto refs = parameter_list(grads);
  for (const auto& ref : refs) {
    for (double g : ref.values) {
      if (!std::isfinite(g)) {
        throw Error(ErrorKind::Divergence, "non-finite gradient in parameter " + ref.name, ref.name);
      }
      ss += g * g;
    }
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& ref : refs) {
      for (double& g : ref.values) g *= scale;
    }
  }
  return norm;
}

namespace {

void check_congruent(const std::vector<ParamRef>& a, const std::vector<ParamRef>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch, "optimizer: parameter count mismatch");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].values.size() != b[i].values.size()) {
      throw Error(ErrorKind::DimensionMismatch, "optimizer: shape mismatch in " + a[i].name,
                  a[i].name);
    }
  }
}

}  // namespace

void adam_step(DgruParams& params, Gradients grads, OptimizerState& state, double lr,
               double clip_norm) {
  auto p = parameter_list(params);
  auto g = parameter_list(grads);
  auto m = parameter_list(state.m);
  auto v = parameter_list(state.v);
  check_congruent(p, g);
  check_congruent(p, m);
  check_congruent(p, v);
  clip_gradients(grads, clip_norm);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    double* pv = p[k].values.data();
    const double* gv = g[k].values.data();
    double* mv = m[k].values.data();
    double* vv = v[k].values.data();
    for (std::size_t i = 0; i < p[k].values.size(); ++i) {
      mv[i] = kAdamBeta1 * mv[i] + (1.0 - kAdamBeta1) * gv[i];
      vv[i] = kAdamBeta2 * vv[i] + (1.0 - kAdamBeta2) * gv[i] * gv[i];
      const double mhat = mv[i] / c1;
      const double vhat = vv[i] / c2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

void sgd_step(DgruParams& params, Gradients grads, double lr, double clip_norm) {
  auto p = parameter_list(params);
  auto g = parameter_list(grads);
  check_congruent(p, g);
  clip_gradients(grads, clip_norm);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].values.size(); ++i) p[k].values[i] -= lr * g[k].values[i];
  }
}

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename F>
void for_each_chunk(const DgruModel& model, std::span<const WindowInstance> instances, F&& f) {
  std::vector<const Matrix*> ptrs;
  for (std::size_t first = 0; first < instances.size(); first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, instances.size() - first);
    ptrs.clear();
    for (std::size_t i = 0; i < count; ++i) ptrs.push_back(&instances[first + i].values);
    ForwardTrace tr = forward_batch(model, ptrs);
    for (std::size_t i = 0; i < count; ++i) f(first + i, tr.probs_row(i));
  }
}

}  // namespace

SplitScore evaluate_split(const DgruModel& model, std::span<const WindowInstance> instances) {
  if (instances.empty()) throw Error(ErrorKind::EmptyInput, "evaluate_split on an empty set");
  double loss = 0.0;
  std::size_t correct = 0;
  for_each_chunk(model, instances, [&](std::size_t i, const Vector& probs) {
    loss += cross_entropy(probs, index_of(instances[i].label));
    if (decide(probs).label == instances[i].label) ++correct;
  });
  const double n = static_cast<double>(instances.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<Label> predict_all(const DgruModel& model, std::span<const WindowInstance> instances) {
  std::vector<Label> out(instances.size());
  for_each_chunk(model, instances,
                 [&](std::size_t i, const Vector& probs) { out[i] = decide(probs).label; });
  return out;
}

TrainResult train(DgruModel model, std::span<const WindowInstance> train_set,
                  std::span<const WindowInstance> val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptyInput, "training split is empty");
  if (val_set.empty() && !hooks.validate) {
    throw Error(ErrorKind::EmptyInput, "validation split is empty");
  }
  check_params(model.arch, model.params);
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& w : *set) {
      if (w.values.rows() != model.arch.window_size || w.values.cols() != model.arch.input_dim) {
        throw Error(ErrorKind::DimensionMismatch,
                    "instance shape " + w.values.shape_string() + " does not match the model window");
      }
    }
  }

  Rng shuffle_rng(mix_seed(cfg.seed, 3));
  OptimizerState opt = make_optimizer_state(model.params);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  DgruModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<const Matrix*> batch;
  std::vector<Label> targets;
  Gradients grads;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      batch.clear();
      targets.clear();
      for (std::size_t i = 0; i < count; ++i) {
        const auto& w = train_set[order[first + i]];
        batch.push_back(&w.values);
        targets.push_back(w.label);
      }
      ForwardTrace tr = forward_batch(model, batch);
      const double loss = backward_batch(model, tr, targets, grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), report);
      }
      loss_sum += loss * static_cast<double>(count);
      try {
        if (cfg.optimizer == OptimizerKind::Adam) {
          adam_step(model.params, std::move(grads), opt, cfg.learning_rate, cfg.grad_clip_norm);
        } else {
          sgd_step(model.params, std::move(grads), cfg.learning_rate, cfg.grad_clip_norm);
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Divergence) throw TrainingDiverged(e.what(), report);
        throw;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const SplitScore score = hooks.validate ? hooks.validate(model, epoch) : evaluate_split(model, val_set);
    rec.val_loss = score.loss;
    rec.val_accuracy = score.accuracy;
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingDiverged("non-finite validation loss in epoch " + std::to_string(epoch), report);
    }
    report.records.push_back(rec);
    report.stopped_epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec, model);

    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
    if (hooks.stop_requested && hooks.stop_requested(rec)) break;
  }
  return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------

void write_epoch_log(std::ostream& os, std::span<const EpochRecord> records,
                     const std::string& config_json) {
  os << "# falldef-epoch-log v1\n";
  if (!config_json.empty()) os << "# config " << config_json << "\n";
  os << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& r : records) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
       << format_double(r.val_accuracy) << '\n';
  }
}

std::vector<EpochRecord> read_epoch_log(std::istream& is) {
  std::vector<EpochRecord> out;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    if (!header) {
      if (v != "epoch,train_loss,val_loss,val_accuracy") {
        throw Error(ErrorKind::Parse, "epoch log: unexpected header '" + std::string(v) + "'");
      }
      header = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t pos = 0;
    for (;;) {
      auto next = v.find(',', pos);
      f.push_back(v.substr(pos, next == std::string_view::npos ? v.npos : next - pos));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    auto e = f.size() == 4 ? parse_double(f[0]) : std::nullopt;
    auto a = f.size() == 4 ? parse_double(f[1]) : std::nullopt;
    auto b = f.size() == 4 ? parse_double(f[2]) : std::nullopt;
    auto c = f.size() == 4 ? parse_double(f[3]) : std::nullopt;
    if (!e || !a || !b || !c) {
      throw Error(ErrorKind::Parse, "epoch log line " + std::to_string(line_no) + " is malformed");
    }
    out.push_back({static_cast<std::size_t>(*e), *a, *b, *c});
  }
  return out;
}

}  // namespace falldef
