#pragma once

// Deep gated recurrent unit classifier: stacked GRU layers followed by a
// two-matrix output head (affine -> tanh -> affine -> softmax over
// (fall, non-fall); row 0 of the output is p_fall).
//
// All network math lives in the batched kernels (forward_batch /
// backward_batch). The single-window entry points are batch-of-one calls into
// the same code, so training, offline prediction and the streaming service
// share one implementation.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "falldef/label.hpp"
#include "falldef/norm_stats.hpp"
#include "falldef/numerics.hpp"

namespace falldef {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::size_t kNumClasses = 2;

struct GruLayerParams {
  Matrix Wz, Wr, Wh;  // hidden x input
  Matrix Uz, Ur, Uh;  // hidden x hidden
  Vector bz, br, bh;  // hidden

  std::size_t input_dim() const { return Wz.cols(); }
  std::size_t hidden_dim() const { return Wz.rows(); }
  bool operator==(const GruLayerParams&) const = default;
};

struct OutputHead {
  Matrix W1;  // head x hidden
  Vector b1;
  Matrix W2;  // 2 x head
  Vector b2;
  bool operator==(const OutputHead&) const = default;
};

/// Trainable parameters. Gradients and optimizer moments reuse this type.
struct DgruParams {
  std::vector<GruLayerParams> layers;
  OutputHead head;
  bool operator==(const DgruParams&) const = default;
};
using Gradients = DgruParams;

struct DgruArch {
  std::size_t input_dim = 3;
  std::vector<std::size_t> hidden_dims{256, 256};
  std::size_t head_dim = 256;
  std::size_t output_dim = kNumClasses;
  std::size_t window_size = 40;

  void validate() const;
  bool operator==(const DgruArch&) const = default;
};

struct DgruModel {
  DgruArch arch;
  DgruParams params;
  NormStats norm;
  int format_version = kModelFormatVersion;
  /// Optional JSON object text recording how the model was produced
  /// (training configuration, seeds). Carried through save/load verbatim.
  std::string provenance;

  bool operator==(const DgruModel&) const = default;
};

/// Glorot-uniform weights, zero biases, normalization disabled.
DgruModel make_model(const DgruArch& arch, Rng& rng);
DgruParams zeros_like(const DgruParams& params);

/// Throws Error(Shape) naming the first parameter that disagrees with `arch`.
void check_params(const DgruArch& arch, const DgruParams& params);

struct ParamRef {
  std::string name;
  std::span<double> values;
};
struct ConstParamRef {
  std::string name;
  std::span<const double> values;
};

/// Every parameter array in a fixed order with a dotted name such as
/// "layers.1.Uz" or "head.b2".
std::vector<ParamRef> parameter_list(DgruParams& params);
std::vector<ConstParamRef> parameter_list(const DgruParams& params);

// ---------------------------------------------------------------------------
// Single-step cell

struct CellTrace {
  Vector z, r, candidate, h;
};

/// One GRU step:
///   z = sigmoid(Wz x + Uz h_prev + bz)
///   r = sigmoid(Wr x + Ur h_prev + br)
///   c = tanh(Wh x + Uh (r * h_prev) + bh)
///   h = (1 - z) * h_prev + z * c
CellTrace gru_cell_step(const Vector& x, const Vector& h_prev, const GruLayerParams& layer);

// ---------------------------------------------------------------------------
// Batched forward / backward

/// Activations cached for backpropagation through time. Time-major stacking:
/// row t * batch + b of each per-layer array holds timestep t of window b.
struct LayerTrace {
  Matrix z, r, candidate, h;
  Matrix reset_h;  // r * h_prev
};

struct ForwardTrace {
  std::size_t batch = 0;
  std::size_t steps = 0;
  Matrix input;  // normalized windows, (steps*batch) x input_dim
  std::vector<LayerTrace> layers;
  Matrix head_pre;  // batch x head_dim, W1 h_T + b1
  Matrix head_act;  // tanh(head_pre)
  Matrix logits;    // batch x 2
  Matrix probs;     // batch x 2

  Vector probs_row(std::size_t b) const;
};

ForwardTrace forward_batch(const DgruModel& model, std::span<const Matrix* const> windows);

/// Accumulates the gradient of the batch-mean cross-entropy into `grads`
/// (which must be shape-congruent and is overwritten). Returns the mean loss.
double backward_batch(const DgruModel& model, const ForwardTrace& trace,
                      std::span<const Label> targets, Gradients& grads);

// ---------------------------------------------------------------------------
// Single-window API

struct ForwardResult {
  Vector probs;
  ForwardTrace trace;
};

/// `window` is raw (un-normalized) samples, window_size x input_dim; the
/// model's normalization statistics are applied inside.
ForwardResult forward(const DgruModel& model, const Matrix& window);
Gradients backward(const DgruModel& model, const ForwardTrace& trace, Label target);

struct Prediction {
  Label label = Label::NonFall;
  double p_fall = 0.0;
};

/// argmax with ties resolved to non-fall.
Prediction decide(const Vector& probs);
Prediction predict(const DgruModel& model, const Matrix& window);

// ---------------------------------------------------------------------------
// Model file

void save_model(const DgruModel& model, const std::filesystem::path& path);
DgruModel load_model(const std::filesystem::path& path);
std::string serialize_model(const DgruModel& model);
DgruModel deserialize_model(const std::string& text);

}  // namespace falldef
