#include "falldef/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "falldef/error.hpp"
#include "falldef/text_format.hpp"

namespace falldef {

void WindowConfig::validate() const {
  if (window_size < 1) throw Error(ErrorKind::InvalidArgument, "window_size must be >= 1", "window_size");
  if (fall_point_threshold < 1 || fall_point_threshold > window_size) {
    throw Error(ErrorKind::InvalidArgument,
                "fall_point_threshold must lie in [1, window_size]", "fall_point_threshold");
  }
  if (stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1", "stride");
}

namespace {

bool is_set(const ColumnRef& c) { return !std::holds_alternative<std::monostate>(c); }

std::string describe(const ColumnRef& c) {
  if (auto s = std::get_if<std::string>(&c)) return "'" + *s + "'";
  if (auto i = std::get_if<std::size_t>(&c)) return "#" + std::to_string(*i);
  return "<none>";
}

std::string_view unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

struct ResolvedColumns {
  std::optional<std::size_t> t, ax, ay, az, label, segment;
  std::size_t min_fields = 0;
};

std::optional<std::size_t> resolve(const ColumnRef& c, const std::vector<std::string>& header,
                                   const char* role) {
  if (auto idx = std::get_if<std::size_t>(&c)) return *idx;
  if (auto name = std::get_if<std::string>(&c)) {
    if (header.empty()) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string("column for ") + role + " is named '" + *name +
                      "' but the input has no header row",
                  role);
    }
    auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) {
      throw Error(ErrorKind::Parse,
                  std::string("column '") + *name + "' (" + role + ") not found in header", role);
    }
    return static_cast<std::size_t>(it - header.begin());
  }
  return std::nullopt;
}

}  // namespace

void CsvSchema::validate() const {
  if (!is_set(ax) || !is_set(ay) || !is_set(az)) {
    throw Error(ErrorKind::InvalidArgument, "ax, ay and az columns must all be mapped", "schema");
  }
  if (ax == ay || ax == az || ay == az) {
    throw Error(ErrorKind::InvalidArgument,
                "ax/ay/az columns must be distinct (" + describe(ax) + ", " + describe(ay) + ", " +
                    describe(az) + ")",
                "schema");
  }
  if (is_set(label) && label_encoding.empty()) {
    throw Error(ErrorKind::InvalidArgument, "label column mapped without a label encoding",
                "label_encoding");
  }
}

std::map<std::string, Label> parse_label_encoding(const std::string& spec) {
  std::map<std::string, Label> out;
  for (auto item : split_fields(spec, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    auto eq = item.rfind('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidArgument,
                  "label encoding entry '" + std::string(item) + "' is not TOKEN=0|1", "label-map");
    }
    auto token = trim(item.substr(0, eq));
    auto value = trim(item.substr(eq + 1));
    if (value != "0" && value != "1") {
      throw Error(ErrorKind::InvalidArgument,
                  "label encoding value for '" + std::string(token) + "' must be 0 or 1",
                  "label-map");
    }
    out[std::string(token)] = value == "1" ? Label::Fall : Label::NonFall;
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "empty label encoding", "label-map");
  return out;
}

std::vector<Segment> parse_csv(std::istream& in, const CsvSchema& schema,
                               const std::string& source_name) {
  schema.validate();
  std::vector<Segment> segments;
  std::vector<std::string> header;
  ResolvedColumns cols;
  bool resolved = false;
  std::optional<std::string> current_marker;
  std::map<std::string, int> id_uses;

  auto start_segment = [&](const std::string& base) {
    int& uses = id_uses[base];
    ++uses;
    segments.push_back({uses == 1 ? base : base + "#" + std::to_string(uses), {}});
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (trim(view).empty()) continue;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);

    if (!resolved) {
      if (schema.has_header) {
        for (auto f : split_fields(view, schema.delimiter)) header.emplace_back(unquote(f));
      }
      cols.t = resolve(schema.t, header, "t");
      cols.ax = resolve(schema.ax, header, "ax");
      cols.ay = resolve(schema.ay, header, "ay");
      cols.az = resolve(schema.az, header, "az");
      cols.label = resolve(schema.label, header, "label");
      cols.segment = resolve(schema.segment, header, "segment");
      for (const auto& c : {cols.t, cols.ax, cols.ay, cols.az, cols.label, cols.segment}) {
        if (c) cols.min_fields = std::max(cols.min_fields, *c + 1);
      }
      resolved = true;
      if (schema.has_header) continue;
    }

    const auto fields = split_fields(view, schema.delimiter);
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (fields.size() < cols.min_fields) {
      throw Error(ErrorKind::Parse,
                  where + ": expected at least " + std::to_string(cols.min_fields) +
                      " fields, found " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t idx, const char* role) {
      auto v = parse_double(unquote(fields[idx]));
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorKind::Parse,
                    where + ": non-numeric " + role + " value '" + std::string(trim(fields[idx])) + "'",
                    role);
      }
      return *v;
    };

    Sample s;
    if (cols.t) s.t = number(*cols.t, "t");
    s.ax = number(*cols.ax, "ax");
    s.ay = number(*cols.ay, "ay");
    s.az = number(*cols.az, "az");
    if (cols.label) {
      std::string token(unquote(fields[*cols.label]));
      auto it = schema.label_encoding.find(token);
      if (it == schema.label_encoding.end()) {
        throw Error(ErrorKind::Parse, where + ": unknown label token '" + token + "'", "label");
      }
      s.point_label = it->second;
    }

    if (cols.segment) {
      std::string marker(unquote(fields[*cols.segment]));
      if (!current_marker || *current_marker != marker) {
        current_marker = marker;
        start_segment(marker);
      }
    } else if (segments.empty()) {
      start_segment(source_name);
    }
    segments.back().samples.push_back(s);
  }
  return segments;
}

std::vector<Segment> parse_csv_file(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return parse_csv(in, schema, path.filename().string());
}

// ---------------------------------------------------------------------------

std::size_t window_count(std::size_t n, const WindowConfig& cfg) {
  if (n <= cfg.window_size) return 0;
  return (n - cfg.window_size + cfg.stride - 1) / cfg.stride;
}

std::vector<WindowInstance> make_windows(const Segment& segment, const WindowConfig& cfg) {
  cfg.validate();
  const std::size_t n = segment.samples.size();
  const std::size_t count = window_count(n, cfg);
  std::vector<WindowInstance> out;
  if (count == 0) return out;

  // prefix[i] = fall points among samples [0, i)
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& lbl = segment.samples[i].point_label;
    if (!lbl) {
      throw Error(ErrorKind::Parse,
                  "segment '" + segment.id + "' sample " + std::to_string(i) +
                      " has no point label; windows need labeled samples",
                  "label");
    }
    prefix[i + 1] = prefix[i] + (*lbl == Label::Fall ? 1 : 0);
  }

  const std::size_t W = cfg.window_size;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * cfg.stride;
    WindowInstance w;
    w.values = Matrix(W, kAccelChannels);
    for (std::size_t i = 0; i < W; ++i) {
      const Sample& s = segment.samples[start + i];
      w.values(i, 0) = s.ax;
      w.values(i, 1) = s.ay;
      w.values(i, 2) = s.az;
    }
    const std::size_t falls = prefix[start + W] - prefix[start];
    w.label = falls >= cfg.fall_point_threshold ? Label::Fall : Label::NonFall;
    w.source = {segment.id, start};
    out.push_back(std::move(w));
  }
  return out;
}

ClassCounts count_labels(std::span<const WindowInstance> instances) {
  ClassCounts c;
  for (const auto& w : instances) (w.label == Label::Fall ? c.fall : c.non_fall)++;
  return c;
}

std::vector<WindowInstance> balance_downsample(std::vector<WindowInstance> instances, Rng& rng) {
  std::vector<std::size_t> fall_idx, non_idx;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    (instances[i].label == Label::Fall ? fall_idx : non_idx).push_back(i);
  }
  if (fall_idx.empty() || non_idx.empty()) {
    throw Error(ErrorKind::ClassMissing,
                std::string("cannot balance: no ") + (fall_idx.empty() ? "fall" : "non-fall") +
                    " instances present",
                "label");
  }
  const bool fall_minority = fall_idx.size() <= non_idx.size();
  std::vector<std::size_t>& minority = fall_minority ? fall_idx : non_idx;
  std::vector<std::size_t>& majority = fall_minority ? non_idx : fall_idx;

  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  const std::size_t k = minority.size();
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(majority.size() - i));
    std::swap(majority[i], majority[j]);
  }
  majority.resize(k);

  std::vector<WindowInstance> out;
  out.reserve(2 * k);
  for (std::size_t i : minority) out.push_back(std::move(instances[i]));
  for (std::size_t i : majority) out.push_back(std::move(instances[i]));
  rng.shuffle(std::span<WindowInstance>(out));
  return out;
}

std::pair<std::size_t, std::size_t> stratified_val_counts(std::size_t n_fall, std::size_t n_non_fall,
                                                          double fraction) {
  const std::size_t n = n_fall + n_non_fall;
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const double ef = fraction * static_cast<double>(n_fall);
  const double en = fraction * static_cast<double>(n_non_fall);
  std::size_t vf = std::min(n_fall, static_cast<std::size_t>(std::floor(ef)));
  std::size_t vn = std::min(n_non_fall, static_cast<std::size_t>(std::floor(en)));
  // Largest remainder; ties go to the fall class.
  while (vf + vn < total) {
    const double rf = vf < n_fall ? ef - static_cast<double>(vf) : -1e300;
    const double rn = vn < n_non_fall ? en - static_cast<double>(vn) : -1e300;
    if (rf >= rn) ++vf; else ++vn;
  }
  while (vf + vn > total) {
    if (vf >= vn && vf > 0) --vf; else --vn;
  }
  // Put both classes on both sides when the counts allow it.
  if (total >= 2) {
    if (vf == 0 && n_fall >= 2 && vn >= 2) { ++vf; --vn; }
    if (vn == 0 && n_non_fall >= 2 && vf >= 2) { ++vn; --vf; }
  }
  if (vf == n_fall && n_fall >= 2 && vn + 1 < n_non_fall) { --vf; ++vn; }
  if (vn == n_non_fall && n_non_fall >= 2 && vf + 1 < n_fall) { --vn; ++vf; }
  return {vf, vn};
}

ValidationSplit split_validation(std::vector<WindowInstance> instances, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "validation fraction must lie in (0, 1)", "val-fraction");
  }
  const std::size_t n = instances.size();
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n < 2 || total == 0 || total >= n) {
    throw Error(ErrorKind::EmptyInput,
                "cannot split " + std::to_string(n) + " instances with fraction " +
                    format_double(fraction) + ": each side needs at least one item");
  }
  std::vector<std::size_t> fall_idx, non_idx;
  for (std::size_t i = 0; i < n; ++i) {
    (instances[i].label == Label::Fall ? fall_idx : non_idx).push_back(i);
  }
  auto [vf, vn] = stratified_val_counts(fall_idx.size(), non_idx.size(), fraction);
  rng.shuffle(std::span<std::size_t>(fall_idx));
  rng.shuffle(std::span<std::size_t>(non_idx));
  std::vector<char> in_val(n, 0);
  for (std::size_t i = 0; i < vf; ++i) in_val[fall_idx[i]] = 1;
  for (std::size_t i = 0; i < vn; ++i) in_val[non_idx[i]] = 1;

  ValidationSplit out;
  out.val.reserve(total);
  out.train.reserve(n - total);
  for (std::size_t i = 0; i < n; ++i) {
    (in_val[i] ? out.val : out.train).push_back(std::move(instances[i]));
  }
  return out;
}

NormStats compute_norm_stats(std::span<const WindowInstance> train) {
  if (train.empty()) throw Error(ErrorKind::EmptyInput, "normalization needs training windows");
  const std::size_t channels = train.front().values.cols();
  NormStats stats;
  stats.enabled = true;
  stats.mean.assign(channels, 0.0);
  stats.std.assign(channels, 1.0);
  std::size_t cells = 0;
  for (const auto& w : train) {
    if (w.values.cols() != channels) {
      throw Error(ErrorKind::DimensionMismatch, "windows disagree on channel count");
    }
    cells += w.values.rows();
  }
  if (cells == 0) throw Error(ErrorKind::EmptyInput, "normalization needs non-empty windows");
  const double count = static_cast<double>(cells);
  for (std::size_t c = 0; c < channels; ++c) {
    // Shift by the first value so a constant channel yields its mean exactly.
    const double ref = train.front().values(0, c);
    double shifted = 0.0;
    for (const auto& w : train) {
      for (std::size_t r = 0; r < w.values.rows(); ++r) shifted += w.values(r, c) - ref;
    }
    const double mean = ref + shifted / count;
    double ss = 0.0;
    for (const auto& w : train) {
      for (std::size_t r = 0; r < w.values.rows(); ++r) {
        const double d = w.values(r, c) - mean;
        ss += d * d;
      }
    }
    const double sd = std::sqrt(ss / count);
    stats.mean[c] = mean;
    stats.std[c] = (sd > 1e-12 && std::isfinite(sd)) ? sd : 1.0;
  }
  return stats;
}

Matrix apply_norm(const NormStats& stats, const Matrix& window) {
  if (!stats.enabled) return window;
  if (window.cols() != stats.mean.size() || window.cols() != stats.std.size()) {
    throw Error(ErrorKind::DimensionMismatch, "normalization channel count mismatch");
  }
  Matrix out = window;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = (out(r, c) - stats.mean[c]) / stats.std[c];
    }
  }
  return out;
}

WindowInstance apply_norm(const NormStats& stats, WindowInstance window) {
  window.values = apply_norm(stats, window.values);
  return window;
}

}  // namespace falldef
