#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "falldef/dataset.hpp"
#include "falldef/dgru.hpp"
#include "falldef/error.hpp"

namespace falldef {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  bool stopped_early = false;
};

struct OptimizerState {
  DgruParams m;  // first moments
  DgruParams v;  // second moments
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const DgruParams& params);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Global L2 norm over every gradient component.
double gradient_norm(const Gradients& grads);

/// Scales `grads` in place so its global norm is at most `max_norm`; returns
/// the norm before clipping. Throws Divergence naming the first non-finite
/// parameter.
double clip_gradients(Gradients& grads, double max_norm);

/// Clips to `clip_norm` then applies one bias-corrected Adam update.
void adam_step(DgruParams& params, Gradients grads, OptimizerState& state, double lr,
               double clip_norm);
void sgd_step(DgruParams& params, Gradients grads, double lr, double clip_norm);

struct SplitScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and argmax accuracy (ties resolved to non-fall).
SplitScore evaluate_split(const DgruModel& model, std::span<const WindowInstance> instances);

/// Predicted labels for every instance, in order.
std::vector<Label> predict_all(const DgruModel& model, std::span<const WindowInstance> instances);

struct TrainHooks {
  /// Replaces the validation pass (used to inject loss schedules in tests).
  std::function<SplitScore(const DgruModel&, std::size_t epoch)> validate;
  /// Called after every epoch with the just-updated model.
  std::function<void(const EpochRecord&, const DgruModel&)> on_epoch;
  /// Returning true ends training after the current epoch.
  std::function<bool(const EpochRecord&)> stop_requested;
};

struct TrainResult {
  DgruModel model;  // best-validation-loss snapshot
  TrainReport report;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, TrainReport report)
      : Error(ErrorKind::Divergence, message), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Mini-batch training with validation-loss early stopping. Each epoch
/// shuffles with a seeded generator, averages gradients over each batch
/// (the last partial batch included), steps the optimizer per batch, then
/// scores the validation split. Training stops once val_loss has not improved
/// for `patience` epochs or at max_epochs.
TrainResult train(DgruModel model, std::span<const WindowInstance> train_set,
                  std::span<const WindowInstance> val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Epoch log: '#' comment lines (format tag and optional config JSON), then a
// header row "epoch,train_loss,val_loss,val_accuracy" and one row per epoch.
void write_epoch_log(std::ostream& os, std::span<const EpochRecord> records,
                     const std::string& config_json = {});
std::vector<EpochRecord> read_epoch_log(std::istream& is);

}  // namespace falldef
