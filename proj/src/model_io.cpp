#include <charconv>
#include <fstream>
#include <sstream>

#include "falldef/dgru.hpp"
#include "falldef/error.hpp"
#include "falldef/text_format.hpp"
#include "json.hpp"

namespace falldef {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  const auto blank = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && blank(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

// Model file layout (JSON text):
//
//   {
//     "format": "falldef-dgru",
//     "format_version": 1,
//     "arch": {"input_dim", "hidden_dims": [...], "head_dim", "output_dim", "window_size"},
//     "norm": {"enabled", "mean": [...], "std": [...]},
//     "params": {
//       "layers": [{"Wz": [[row], ...], "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh"}, ...],
//       "head": {"W1", "b1", "W2", "b2"}
//     },
//     "provenance": {...}            (optional)
//   }
//
// Matrices are nested row-major arrays. Numbers use the shortest decimal form
// that round-trips, so save -> load is bit-exact.

namespace {

constexpr std::string_view kFormatName = "falldef-dgru";

void write_vector(std::ostream& os, std::span<const double> v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << format_double(v[i]);
  }
  os << ']';
}

void write_matrix(std::ostream& os, const Matrix& m, std::string_view indent) {
  os << "[\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << indent << "  ";
    write_vector(os, m.row(r));
    os << (r + 1 < m.rows() ? ",\n" : "\n");
  }
  os << indent << ']';
}

using json = nlohmann::json;

const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw Error(ErrorKind::Shape, path + " must be an object", path);
  auto it = obj.find(key);
  if (it == obj.end()) {
    const std::string field = path.empty() ? key : path + "." + key;
    throw Error(ErrorKind::Shape, "missing field " + field, field);
  }
  return *it;
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path) {
  const json& v = member(obj, key, path);
  const std::string field = path + "." + key;
  if (!v.is_number_unsigned()) {
    throw Error(ErrorKind::Shape, field + " must be a non-negative integer", field);
  }
  return v.get<std::size_t>();
}

double read_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw Error(ErrorKind::Shape, field + " must contain only numbers", field);
  return v.get<double>();
}

Vector read_vector(const json& v, std::size_t expect, const std::string& field) {
  if (!v.is_array()) throw Error(ErrorKind::Shape, field + " must be an array", field);
  if (v.size() != expect) {
    throw Error(ErrorKind::Shape,
                field + " has length " + std::to_string(v.size()) + ", expected " +
                    std::to_string(expect),
                field);
  }
  Vector out(expect);
  for (std::size_t i = 0; i < expect; ++i) out[i] = read_number(v[i], field);
  return out;
}

Matrix read_matrix(const json& v, std::size_t rows, std::size_t cols, const std::string& field) {
  if (!v.is_array()) throw Error(ErrorKind::Shape, field + " must be an array of rows", field);
  if (v.size() != rows) {
    throw Error(ErrorKind::Shape,
                field + " has " + std::to_string(v.size()) + " rows, expected " +
                    std::to_string(rows),
                field);
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = v[r];
    if (!row.is_array() || row.size() != cols) {
      throw Error(ErrorKind::Shape,
                  field + " row " + std::to_string(r) + " does not have " + std::to_string(cols) +
                      " columns",
                  field);
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = read_number(row[c], field);
  }
  return m;
}

}  // namespace

std::string serialize_model(const DgruModel& model) {
  model.arch.validate();
  check_params(model.arch, model.params);
  const auto& a = model.arch;
  std::ostringstream os;
  os << "{\n";
  os << "  \"format\": \"" << kFormatName << "\",\n";
  os << "  \"format_version\": " << model.format_version << ",\n";
  os << "  \"arch\": {\"input_dim\": " << a.input_dim << ", \"hidden_dims\": [";
  for (std::size_t i = 0; i < a.hidden_dims.size(); ++i) {
    os << (i ? ", " : "") << a.hidden_dims[i];
  }
  os << "], \"head_dim\": " << a.head_dim << ", \"output_dim\": " << a.output_dim
     << ", \"window_size\": " << a.window_size << "},\n";
  os << "  \"norm\": {\"enabled\": " << (model.norm.enabled ? "true" : "false") << ", \"mean\": ";
  write_vector(os, model.norm.mean);
  os << ", \"std\": ";
  write_vector(os, model.norm.std);
  os << "},\n";
  os << "  \"params\": {\n    \"layers\": [\n";
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    const auto& L = model.params.layers[l];
    os << "      {\n";
    const std::pair<const char*, const Matrix*> mats[] = {
        {"Wz", &L.Wz}, {"Wr", &L.Wr}, {"Wh", &L.Wh}, {"Uz", &L.Uz}, {"Ur", &L.Ur}, {"Uh", &L.Uh}};
    for (const auto& [name, m] : mats) {
      os << "        \"" << name << "\": ";
      write_matrix(os, *m, "        ");
      os << ",\n";
    }
    os << "        \"bz\": ";
    write_vector(os, L.bz.values());
    os << ",\n        \"br\": ";
    write_vector(os, L.br.values());
    os << ",\n        \"bh\": ";
    write_vector(os, L.bh.values());
    os << "\n      }" << (l + 1 < model.params.layers.size() ? "," : "") << "\n";
  }
  const auto& h = model.params.head;
  os << "    ],\n    \"head\": {\n      \"W1\": ";
  write_matrix(os, h.W1, "      ");
  os << ",\n      \"b1\": ";
  write_vector(os, h.b1.values());
  os << ",\n      \"W2\": ";
  write_matrix(os, h.W2, "      ");
  os << ",\n      \"b2\": ";
  write_vector(os, h.b2.values());
  os << "\n    }\n  }";
  if (!model.provenance.empty()) {
    os << ",\n  \"provenance\": " << json::parse(model.provenance).dump();
  }
  os << "\n}\n";
  return os.str();
}

DgruModel deserialize_model(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::Parse, "model file is not valid JSON");
  if (!doc.is_object()) throw Error(ErrorKind::Parse, "model file must hold a JSON object");

  const json& fmt = member(doc, "format", "");
  if (!fmt.is_string() || fmt.get<std::string>() != kFormatName) {
    throw Error(ErrorKind::Parse, "not a falldef model file", "format");
  }
  const json& ver = member(doc, "format_version", "");
  if (!ver.is_number_integer() || ver.get<long long>() != kModelFormatVersion) {
    throw Error(ErrorKind::Version,
                "unsupported model format_version " + ver.dump() + " (this build reads " +
                    std::to_string(kModelFormatVersion) + ")",
                "format_version");
  }

  DgruModel m;
  const json& arch = member(doc, "arch", "");
  m.arch.input_dim = read_count(arch, "input_dim", "arch");
  m.arch.head_dim = read_count(arch, "head_dim", "arch");
  m.arch.output_dim = read_count(arch, "output_dim", "arch");
  m.arch.window_size = read_count(arch, "window_size", "arch");
  const json& hd = member(arch, "hidden_dims", "arch");
  if (!hd.is_array()) throw Error(ErrorKind::Shape, "arch.hidden_dims must be an array", "arch.hidden_dims");
  m.arch.hidden_dims.clear();
  for (const auto& v : hd) {
    if (!v.is_number_unsigned()) {
      throw Error(ErrorKind::Shape, "arch.hidden_dims must hold integers", "arch.hidden_dims");
    }
    m.arch.hidden_dims.push_back(v.get<std::size_t>());
  }
  try {
    m.arch.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Shape, std::string("arch: ") + e.what(), "arch." + e.field());
  }

  const json& norm = member(doc, "norm", "");
  const json& enabled = member(norm, "enabled", "norm");
  if (!enabled.is_boolean()) throw Error(ErrorKind::Shape, "norm.enabled must be a boolean", "norm.enabled");
  m.norm.enabled = enabled.get<bool>();
  m.norm.mean = read_vector(member(norm, "mean", "norm"), m.arch.input_dim, "norm.mean").data();
  m.norm.std = read_vector(member(norm, "std", "norm"), m.arch.input_dim, "norm.std").data();
  if (m.norm.enabled) {
    for (double s : m.norm.std) {
      if (!(s > 0.0)) throw Error(ErrorKind::Shape, "norm.std must be positive", "norm.std");
    }
  }

  const json& params = member(doc, "params", "");
  const json& layers = member(params, "layers", "params");
  if (!layers.is_array() || layers.size() != m.arch.hidden_dims.size()) {
    throw Error(ErrorKind::Shape, "params.layers count does not match arch.hidden_dims",
                "params.layers");
  }
  std::size_t in = m.arch.input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "params.layers." + std::to_string(l);
    const json& jl = layers[l];
    const std::size_t hdim = m.arch.hidden_dims[l];
    GruLayerParams L;
    L.Wz = read_matrix(member(jl, "Wz", p), hdim, in, p + ".Wz");
    L.Wr = read_matrix(member(jl, "Wr", p), hdim, in, p + ".Wr");
    L.Wh = read_matrix(member(jl, "Wh", p), hdim, in, p + ".Wh");
    L.Uz = read_matrix(member(jl, "Uz", p), hdim, hdim, p + ".Uz");
    L.Ur = read_matrix(member(jl, "Ur", p), hdim, hdim, p + ".Ur");
    L.Uh = read_matrix(member(jl, "Uh", p), hdim, hdim, p + ".Uh");
    L.bz = read_vector(member(jl, "bz", p), hdim, p + ".bz");
    L.br = read_vector(member(jl, "br", p), hdim, p + ".br");
    L.bh = read_vector(member(jl, "bh", p), hdim, p + ".bh");
    m.params.layers.push_back(std::move(L));
    in = hdim;
  }
  const json& head = member(params, "head", "params");
  m.params.head.W1 = read_matrix(member(head, "W1", "params.head"), m.arch.head_dim, in, "params.head.W1");
  m.params.head.b1 = read_vector(member(head, "b1", "params.head"), m.arch.head_dim, "params.head.b1");
  m.params.head.W2 =
      read_matrix(member(head, "W2", "params.head"), kNumClasses, m.arch.head_dim, "params.head.W2");
  m.params.head.b2 = read_vector(member(head, "b2", "params.head"), kNumClasses, "params.head.b2");

  if (auto it = doc.find("provenance"); it != doc.end()) m.provenance = it->dump();
  return m;
}

void save_model(const DgruModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

DgruModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace falldef
