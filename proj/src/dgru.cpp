#include "falldef/dgru.hpp"

#include <algorithm>
#include <cmath>

#include "falldef/error.hpp"

namespace falldef {

void DgruArch::validate() const {
  if (input_dim == 0) throw Error(ErrorKind::InvalidArgument, "input_dim must be >= 1", "input_dim");
  if (hidden_dims.empty()) {
    throw Error(ErrorKind::InvalidArgument, "at least one GRU layer is required", "hidden_dims");
  }
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw Error(ErrorKind::InvalidArgument, "hidden dims must be >= 1", "hidden_dims");
  }
  if (head_dim == 0) throw Error(ErrorKind::InvalidArgument, "head_dim must be >= 1", "head_dim");
  if (output_dim != kNumClasses) {
    throw Error(ErrorKind::Shape, "output_dim must be exactly 2", "output_dim");
  }
  if (window_size == 0) {
    throw Error(ErrorKind::InvalidArgument, "window_size must be >= 1", "window_size");
  }
}

DgruModel make_model(const DgruArch& arch, Rng& rng) {
  arch.validate();
  DgruModel model;
  model.arch = arch;
  model.norm = NormStats::identity(arch.input_dim);
  std::size_t in = arch.input_dim;
  for (std::size_t hidden : arch.hidden_dims) {
    GruLayerParams layer;
    layer.Wz = glorot_uniform(rng, hidden, in);
    layer.Wr = glorot_uniform(rng, hidden, in);
    layer.Wh = glorot_uniform(rng, hidden, in);
    layer.Uz = glorot_uniform(rng, hidden, hidden);
    layer.Ur = glorot_uniform(rng, hidden, hidden);
    layer.Uh = glorot_uniform(rng, hidden, hidden);
    layer.bz = Vector(hidden);
    layer.br = Vector(hidden);
    layer.bh = Vector(hidden);
    model.params.layers.push_back(std::move(layer));
    in = hidden;
  }
  model.params.head.W1 = glorot_uniform(rng, arch.head_dim, in);
  model.params.head.b1 = Vector(arch.head_dim);
  model.params.head.W2 = glorot_uniform(rng, arch.output_dim, arch.head_dim);
  model.params.head.b2 = Vector(arch.output_dim);
  return model;
}

DgruParams zeros_like(const DgruParams& params) {
  DgruParams out = params;
  for (auto& ref : parameter_list(out)) std::fill(ref.values.begin(), ref.values.end(), 0.0);
  return out;
}

namespace {

template <typename P, typename Ref>
std::vector<Ref> collect(P& params) {
  std::vector<Ref> out;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& L = params.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "Wz", L.Wz.values()});
    out.push_back({p + "Wr", L.Wr.values()});
    out.push_back({p + "Wh", L.Wh.values()});
    out.push_back({p + "Uz", L.Uz.values()});
    out.push_back({p + "Ur", L.Ur.values()});
    out.push_back({p + "Uh", L.Uh.values()});
    out.push_back({p + "bz", L.bz.values()});
    out.push_back({p + "br", L.br.values()});
    out.push_back({p + "bh", L.bh.values()});
  }
  out.push_back({"head.W1", params.head.W1.values()});
  out.push_back({"head.b1", params.head.b1.values()});
  out.push_back({"head.W2", params.head.W2.values()});
  out.push_back({"head.b2", params.head.b2.values()});
  return out;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::Shape,
                name + " has shape " + m.shape_string() + ", expected (" + std::to_string(rows) +
                    "x" + std::to_string(cols) + ")",
                name);
  }
}

void expect_len(const Vector& v, std::size_t len, const std::string& name) {
  if (v.size() != len) {
    throw Error(ErrorKind::Shape,
                name + " has length " + std::to_string(v.size()) + ", expected " +
                    std::to_string(len),
                name);
  }
}

}  // namespace

std::vector<ParamRef> parameter_list(DgruParams& params) {
  return collect<DgruParams, ParamRef>(params);
}

std::vector<ConstParamRef> parameter_list(const DgruParams& params) {
  return collect<const DgruParams, ConstParamRef>(params);
}

void check_params(const DgruArch& arch, const DgruParams& params) {
  arch.validate();
  if (params.layers.size() != arch.hidden_dims.size()) {
    throw Error(ErrorKind::Shape,
                "model has " + std::to_string(params.layers.size()) + " layers, arch declares " +
                    std::to_string(arch.hidden_dims.size()),
                "layers");
  }
  std::size_t in = arch.input_dim;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    const std::size_t h = arch.hidden_dims[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    expect_shape(L.Wz, h, in, p + "Wz");
    expect_shape(L.Wr, h, in, p + "Wr");
    expect_shape(L.Wh, h, in, p + "Wh");
    expect_shape(L.Uz, h, h, p + "Uz");
    expect_shape(L.Ur, h, h, p + "Ur");
    expect_shape(L.Uh, h, h, p + "Uh");
    expect_len(L.bz, h, p + "bz");
    expect_len(L.br, h, p + "br");
    expect_len(L.bh, h, p + "bh");
    in = h;
  }
  expect_shape(params.head.W1, arch.head_dim, in, "head.W1");
  expect_len(params.head.b1, arch.head_dim, "head.b1");
  expect_shape(params.head.W2, kNumClasses, arch.head_dim, "head.W2");
  expect_len(params.head.b2, kNumClasses, "head.b2");
}

// ---------------------------------------------------------------------------

namespace {

/// One timestep for a block of `batch` rows. `pz`, `pr`, `ph` hold the input
/// projections W x + b. `h_prev.data == nullptr` means a zero previous state.
void cell_step_block(ConstMatrixView pz, ConstMatrixView pr, ConstMatrixView ph,
                     ConstMatrixView h_prev, const GruLayerParams& L, MatrixView z, MatrixView r,
                     MatrixView c, MatrixView h, MatrixView reset_h) {
  const std::size_t n = z.rows * z.cols;
  std::copy(pz.data, pz.data + n, z.data);
  std::copy(pr.data, pr.data + n, r.data);
  std::copy(ph.data, ph.data + n, c.data);
  const bool has_prev = h_prev.data != nullptr;
  if (has_prev) {
    gemm(1.0, h_prev, Trans::No, L.Uz.view(), Trans::Yes, 1.0, z);
    gemm(1.0, h_prev, Trans::No, L.Ur.view(), Trans::Yes, 1.0, r);
  }
  for (std::size_t i = 0; i < n; ++i) {
    z.data[i] = sigmoid(z.data[i]);
    r.data[i] = sigmoid(r.data[i]);
    reset_h.data[i] = has_prev ? r.data[i] * h_prev.data[i] : 0.0;
  }
  if (has_prev) gemm(1.0, reset_h, Trans::No, L.Uh.view(), Trans::Yes, 1.0, c);
  for (std::size_t i = 0; i < n; ++i) {
    c.data[i] = tanh_act(c.data[i]);
    const double hp = has_prev ? h_prev.data[i] : 0.0;
    h.data[i] = (1.0 - z.data[i]) * hp + z.data[i] * c.data[i];
  }
}

/// rows x hidden block of X W^T + b.
Matrix input_projection(ConstMatrixView x, const Matrix& W, const Vector& b) {
  Matrix out(x.rows, W.rows());
  gemm(1.0, x, Trans::No, W.view(), Trans::Yes, 0.0, out.view());
  add_row_bias(out.view(), b.values());
  return out;
}

void check_window(const DgruModel& model, const Matrix& w) {
  if (w.rows() != model.arch.window_size || w.cols() != model.arch.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "window has shape " + w.shape_string() + ", model expects (" +
                    std::to_string(model.arch.window_size) + "x" +
                    std::to_string(model.arch.input_dim) + ")");
  }
}

}  // namespace

CellTrace gru_cell_step(const Vector& x, const Vector& h_prev, const GruLayerParams& layer) {
  const std::size_t hidden = layer.hidden_dim();
  if (x.size() != layer.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "gru_cell_step: input length " + std::to_string(x.size()) + ", layer expects " +
                    std::to_string(layer.input_dim()));
  }
  if (h_prev.size() != hidden) {
    throw Error(ErrorKind::DimensionMismatch,
                "gru_cell_step: h_prev length " + std::to_string(h_prev.size()) +
                    ", layer expects " + std::to_string(hidden));
  }
  ConstMatrixView xv(x.values().data(), 1, x.size());
  Matrix pz = input_projection(xv, layer.Wz, layer.bz);
  Matrix pr = input_projection(xv, layer.Wr, layer.br);
  Matrix ph = input_projection(xv, layer.Wh, layer.bh);
  CellTrace out{Vector(hidden), Vector(hidden), Vector(hidden), Vector(hidden)};
  Vector reset_h(hidden);
  auto row = [hidden](Vector& v) { return MatrixView{v.values().data(), 1, hidden}; };
  cell_step_block(pz.view(), pr.view(), ph.view(), ConstMatrixView(h_prev.values().data(), 1, hidden),
                  layer, row(out.z), row(out.r), row(out.candidate), row(out.h), row(reset_h));
  return out;
}

Vector ForwardTrace::probs_row(std::size_t b) const {
  auto r = probs.row(b);
  return Vector(std::vector<double>(r.begin(), r.end()));
}

ForwardTrace forward_batch(const DgruModel& model, std::span<const Matrix* const> windows) {
  const auto& arch = model.arch;
  const std::size_t B = windows.size();
  const std::size_t T = arch.window_size;
  const std::size_t in0 = arch.input_dim;
  if (B == 0) throw Error(ErrorKind::EmptyInput, "forward_batch: empty batch");
  if (model.params.layers.size() != arch.hidden_dims.size()) {
    throw Error(ErrorKind::Shape, "model layers disagree with architecture", "layers");
  }

  ForwardTrace tr;
  tr.batch = B;
  tr.steps = T;
  tr.input = Matrix(T * B, in0);
  const bool norm = model.norm.enabled;
  for (std::size_t b = 0; b < B; ++b) {
    const Matrix& w = *windows[b];
    check_window(model, w);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < in0; ++c) {
        double v = w(t, c);
        if (norm) v = (v - model.norm.mean[c]) / model.norm.std[c];
        tr.input(t * B + b, c) = v;
      }
    }
  }

  tr.layers.resize(model.params.layers.size());
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    const auto& L = model.params.layers[l];
    const std::size_t H = L.hidden_dim();
    ConstMatrixView x = l == 0 ? tr.input.view() : tr.layers[l - 1].h.view();
    Matrix pz = input_projection(x, L.Wz, L.bz);
    Matrix pr = input_projection(x, L.Wr, L.br);
    Matrix ph = input_projection(x, L.Wh, L.bh);
    LayerTrace& lt = tr.layers[l];
    lt.z = Matrix(T * B, H);
    lt.r = Matrix(T * B, H);
    lt.candidate = Matrix(T * B, H);
    lt.h = Matrix(T * B, H);
    lt.reset_h = Matrix(T * B, H);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t r0 = t * B;
      ConstMatrixView h_prev = t == 0 ? ConstMatrixView{} : ConstMatrixView(lt.h.view()).row_block(r0 - B, B);
      cell_step_block(pz.view().row_block(r0, B), pr.view().row_block(r0, B),
                      ph.view().row_block(r0, B), h_prev, L, lt.z.view().row_block(r0, B),
                      lt.r.view().row_block(r0, B), lt.candidate.view().row_block(r0, B),
                      lt.h.view().row_block(r0, B), lt.reset_h.view().row_block(r0, B));
    }
  }

  const auto& head = model.params.head;
  ConstMatrixView h_last = ConstMatrixView(tr.layers.back().h.view()).row_block((T - 1) * B, B);
  tr.head_pre = Matrix(B, head.W1.rows());
  gemm(1.0, h_last, Trans::No, head.W1.view(), Trans::Yes, 0.0, tr.head_pre.view());
  add_row_bias(tr.head_pre.view(), head.b1.values());
  tr.head_act = tr.head_pre;
  for (double& v : tr.head_act.values()) v = tanh_act(v);
  tr.logits = Matrix(B, kNumClasses);
  gemm(1.0, tr.head_act.view(), Trans::No, head.W2.view(), Trans::Yes, 0.0, tr.logits.view());
  add_row_bias(tr.logits.view(), head.b2.values());
  tr.probs = tr.logits;
  softmax_rows(tr.probs.view());
  return tr;
}

double backward_batch(const DgruModel& model, const ForwardTrace& tr,
                      std::span<const Label> targets, Gradients& g) {
  const std::size_t B = tr.batch;
  const std::size_t T = tr.steps;
  const auto& P = model.params;
  if (targets.size() != B) {
    throw Error(ErrorKind::DimensionMismatch, "backward: target count differs from batch size");
  }
  if (T != model.arch.window_size || tr.layers.size() != P.layers.size() ||
      tr.probs.rows() != B || tr.head_act.cols() != P.head.W1.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "backward: trace does not match model");
  }
  for (std::size_t l = 0; l < P.layers.size(); ++l) {
    if (tr.layers[l].h.rows() != T * B || tr.layers[l].h.cols() != P.layers[l].hidden_dim()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "backward: trace layer " + std::to_string(l) + " does not match model");
    }
  }
  g = zeros_like(P);

  // Head. d(mean CE)/d logits = (p - onehot) / B.
  const double inv_b = 1.0 / static_cast<double>(B);
  double loss = 0.0;
  Matrix d_logits(B, kNumClasses);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t y = index_of(targets[b]);
    loss += 0.0 - std::log(std::max(tr.probs(b, y), kCrossEntropyEps));
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      d_logits(b, k) = (tr.probs(b, k) - (k == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  loss *= inv_b;

  gemm(1.0, d_logits.view(), Trans::Yes, tr.head_act.view(), Trans::No, 0.0, g.head.W2.view());
  accumulate_column_sums(d_logits.view(), g.head.b2.values());
  Matrix d_head(B, P.head.W1.rows());
  gemm(1.0, d_logits.view(), Trans::No, P.head.W2.view(), Trans::No, 0.0, d_head.view());
  for (std::size_t i = 0; i < d_head.size(); ++i) {
    const double a = tr.head_act.values()[i];
    d_head.values()[i] *= 1.0 - a * a;
  }
  ConstMatrixView h_last = ConstMatrixView(tr.layers.back().h.view()).row_block((T - 1) * B, B);
  gemm(1.0, d_head.view(), Trans::Yes, h_last, Trans::No, 0.0, g.head.W1.view());
  accumulate_column_sums(d_head.view(), g.head.b1.values());

  // Gradient flowing into the top layer's outputs: only the last timestep.
  const std::size_t top_h = P.layers.back().hidden_dim();
  Matrix d_ext(T * B, top_h);
  gemm(1.0, d_head.view(), Trans::No, P.head.W1.view(), Trans::No, 0.0,
       d_ext.view().row_block((T - 1) * B, B));

  for (std::size_t li = P.layers.size(); li-- > 0;) {
    const auto& L = P.layers[li];
    const auto& lt = tr.layers[li];
    auto& gl = g.layers[li];
    const std::size_t H = L.hidden_dim();
    Matrix d_az(T * B, H), d_ar(T * B, H), d_ah(T * B, H);
    Matrix d_h_next(B, H);  // recurrent gradient into h_{t}
    Matrix d_rh(B, H);
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t r0 = t * B;
      const double* z = lt.z.values().data() + r0 * H;
      const double* r = lt.r.values().data() + r0 * H;
      const double* c = lt.candidate.values().data() + r0 * H;
      const double* hp = t == 0 ? nullptr : lt.h.values().data() + (r0 - B) * H;
      const double* ext = d_ext.values().data() + r0 * H;
      double* dn = d_h_next.values().data();
      double* daz = d_az.values().data() + r0 * H;
      double* dar = d_ar.values().data() + r0 * H;
      double* dah = d_ah.values().data() + r0 * H;
      const std::size_t n = B * H;
      // dn becomes d h_prev as we go; first stash the direct path.
      for (std::size_t i = 0; i < n; ++i) {
        const double dh = ext[i] + dn[i];
        const double h_prev = hp ? hp[i] : 0.0;
        dah[i] = dh * z[i] * (1.0 - c[i] * c[i]);
        const double dz = dh * (c[i] - h_prev);
        daz[i] = dz * z[i] * (1.0 - z[i]);
        dn[i] = dh * (1.0 - z[i]);
      }
      if (t == 0) break;  // h_{-1} is a constant zero state
      gemm(1.0, d_ah.view().row_block(r0, B), Trans::No, L.Uh.view(), Trans::No, 0.0, d_rh.view());
      const double* drh = d_rh.values().data();
      for (std::size_t i = 0; i < n; ++i) {
        const double dr = drh[i] * hp[i];
        dar[i] = dr * r[i] * (1.0 - r[i]);
        dn[i] += drh[i] * r[i];
      }
      gemm(1.0, d_az.view().row_block(r0, B), Trans::No, L.Uz.view(), Trans::No, 1.0, d_h_next.view());
      gemm(1.0, d_ar.view().row_block(r0, B), Trans::No, L.Ur.view(), Trans::No, 1.0, d_h_next.view());
    }
    // At t = 0 the reset gate multiplies a zero state, so d_ar rows stay zero.

    ConstMatrixView x = li == 0 ? tr.input.view() : tr.layers[li - 1].h.view();
    gemm(1.0, d_az.view(), Trans::Yes, x, Trans::No, 0.0, gl.Wz.view());
    gemm(1.0, d_ar.view(), Trans::Yes, x, Trans::No, 0.0, gl.Wr.view());
    gemm(1.0, d_ah.view(), Trans::Yes, x, Trans::No, 0.0, gl.Wh.view());
    accumulate_column_sums(d_az.view(), gl.bz.values());
    accumulate_column_sums(d_ar.view(), gl.br.values());
    accumulate_column_sums(d_ah.view(), gl.bh.values());
    if (T > 1) {
      const std::size_t rows = (T - 1) * B;
      ConstMatrixView h_prev_all = ConstMatrixView(lt.h.view()).row_block(0, rows);
      gemm(1.0, ConstMatrixView(d_az.view()).row_block(B, rows), Trans::Yes, h_prev_all, Trans::No,
           0.0, gl.Uz.view());
      gemm(1.0, ConstMatrixView(d_ar.view()).row_block(B, rows), Trans::Yes, h_prev_all, Trans::No,
           0.0, gl.Ur.view());
    }
    gemm(1.0, d_ah.view(), Trans::Yes, lt.reset_h.view(), Trans::No, 0.0, gl.Uh.view());

    if (li > 0) {
      Matrix d_x(T * B, L.input_dim());
      gemm(1.0, d_az.view(), Trans::No, L.Wz.view(), Trans::No, 0.0, d_x.view());
      gemm(1.0, d_ar.view(), Trans::No, L.Wr.view(), Trans::No, 1.0, d_x.view());
      gemm(1.0, d_ah.view(), Trans::No, L.Wh.view(), Trans::No, 1.0, d_x.view());
      d_ext = std::move(d_x);
    }
  }
  return loss;
}

ForwardResult forward(const DgruModel& model, const Matrix& window) {
  const Matrix* w = &window;
  ForwardResult out;
  out.trace = forward_batch(model, std::span<const Matrix* const>(&w, 1));
  out.probs = out.trace.probs_row(0);
  return out;
}

Gradients backward(const DgruModel& model, const ForwardTrace& trace, Label target) {
  if (trace.batch != 1) {
    throw Error(ErrorKind::DimensionMismatch, "backward: expected a single-window trace");
  }
  Gradients g;
  backward_batch(model, trace, std::span<const Label>(&target, 1), g);
  return g;
}

Prediction decide(const Vector& probs) {
  if (probs.size() != kNumClasses) {
    throw Error(ErrorKind::DimensionMismatch, "decide: expected 2 class probabilities");
  }
  const double p_fall = probs[index_of(Label::Fall)];
  const double p_non = probs[index_of(Label::NonFall)];
  return {p_fall > p_non ? Label::Fall : Label::NonFall, p_fall};
}

Prediction predict(const DgruModel& model, const Matrix& window) {
  return decide(forward(model, window).probs);
}

}  // namespace falldef
