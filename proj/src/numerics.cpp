#include "falldef/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "falldef/error.hpp"

namespace falldef {

namespace {

// Bounds that keep activations strictly inside their open ranges. Without
// them exp underflow rounds sigmoid(-800) to 0 and sigmoid(40) to 1.
constexpr double kOpenLow = std::numeric_limits<double>::min();
constexpr double kOpenHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Version: return "version";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::ClassMissing: return "class_missing";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
    case ErrorKind::Network: return "network";
  }
  return "unknown";
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(ErrorKind::DimensionMismatch, "ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  // (next >> 11) / (2^53 - 1) reaches both endpoints.
  double u = static_cast<double>(engine_() >> 11) / 9007199254740991.0;
  return lo + (hi - lo) * u;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "Rng::below(0)");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  if (a.rows() == 0 || b.cols() == 0) return c;
  if (a.cols() == 0) return c;
  gemm(1.0, a.view(), Trans::No, b.view(), Trans::No, 0.0, c.view());
  return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "matvec: cannot multiply " + a.shape_string() + " by vector of length " +
                    std::to_string(x.size()));
  }
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    auto row = a.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kOpenLow, kOpenHigh);
}

double tanh_act(double x) {
  return std::clamp(std::tanh(x), -kOpenHigh, kOpenHigh);
}

Vector sigmoid(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

Vector tanh_act(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = tanh_act(v[i]);
  return out;
}

namespace {

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x = std::clamp(x / sum, kOpenLow, kOpenHigh);
}

}  // namespace

Vector softmax(const Vector& v) {
  if (v.size() == 0) throw Error(ErrorKind::InvalidArgument, "softmax of empty vector");
  Vector out = v;
  softmax_inplace(out.values());
  return out;
}

double cross_entropy(const Vector& probs, std::size_t target_class) {
  if (target_class >= probs.size()) {
    throw Error(ErrorKind::InvalidArgument,
                "cross_entropy: target class " + std::to_string(target_class) +
                    " out of range for " + std::to_string(probs.size()) + " classes");
  }
  return 0.0 - std::log(std::max(probs[target_class], kCrossEntropyEps));
}

Matrix glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::InvalidArgument, "glorot_uniform needs rows, cols >= 1");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(-limit, limit);
  return m;
}

void gemm(double alpha, ConstMatrixView a, Trans ta, ConstMatrixView b, Trans tb, double beta,
          MatrixView c) {
  const std::size_t m = ta == Trans::No ? a.rows : a.cols;
  const std::size_t k = ta == Trans::No ? a.cols : a.rows;
  const std::size_t kb = tb == Trans::No ? b.rows : b.cols;
  const std::size_t n = tb == Trans::No ? b.cols : b.rows;
  if (k != kb || c.rows != m || c.cols != n) {
    throw Error(ErrorKind::DimensionMismatch, "gemm: incompatible operand shapes");
  }
  if (m == 0 || n == 0) return;
  MutMap cm(c.data, static_cast<Eigen::Index>(c.rows), static_cast<Eigen::Index>(c.cols));
  if (k == 0) {
    if (beta == 0.0) cm.setZero(); else cm *= beta;
    return;
  }
  ConstMap am(a.data, static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
  ConstMap bm(b.data, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  if (beta == 0.0) {
    cm.setZero();
  } else if (beta != 1.0) {
    cm *= beta;
  }
  if (ta == Trans::No && tb == Trans::No) {
    cm.noalias() += alpha * am * bm;
  } else if (ta == Trans::No) {
    cm.noalias() += alpha * am * bm.transpose();
  } else if (tb == Trans::No) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

void softmax_rows(MatrixView m) {
  for (std::size_t r = 0; r < m.rows; ++r) softmax_inplace({m.data + r * m.cols, m.cols});
}

void add_row_bias(MatrixView m, std::span<const double> bias) {
  if (bias.size() != m.cols) throw Error(ErrorKind::DimensionMismatch, "bias length mismatch");
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.data + r * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) row[j] += bias[j];
  }
}

void accumulate_column_sums(ConstMatrixView m, std::span<double> out) {
  if (out.size() != m.cols) throw Error(ErrorKind::DimensionMismatch, "column sum length mismatch");
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data + r * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += row[j];
  }
}

}  // namespace falldef
