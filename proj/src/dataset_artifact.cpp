#include "falldef/dataset_artifact.hpp"

#include <fstream>
#include <sstream>

#include "falldef/error.hpp"
#include "json.hpp"

namespace falldef {

using json = nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "falldef-dataset";

json counts_json(const ClassCounts& c) {
  return {{"fall", c.fall}, {"non_fall", c.non_fall}, {"total", c.total()}};
}

ClassCounts counts_of(const std::vector<WindowRef>& refs) {
  ClassCounts c;
  for (const auto& r : refs) (r.label == Label::Fall ? c.fall : c.non_fall)++;
  return c;
}

std::vector<WindowRef> to_refs(const std::vector<WindowInstance>& windows,
                               const std::map<std::string, std::size_t>& index) {
  std::vector<WindowRef> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    out.push_back({index.at(w.source.segment_id), w.source.start, w.label});
  }
  return out;
}

const json& need(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::Shape, std::string("dataset artifact missing field ") + key, key);
  }
  return *it;
}

}  // namespace

std::vector<WindowInstance> PreparedDataset::materialize(const std::string& split) const {
  auto it = splits.find(split);
  if (it == splits.end()) {
    throw Error(ErrorKind::InvalidArgument, "dataset has no split named '" + split + "'", "split");
  }
  const std::size_t W = window.window_size;
  std::vector<WindowInstance> out;
  out.reserve(it->second.size());
  for (const auto& ref : it->second) {
    if (ref.segment >= segments.size() || ref.start + W > segments[ref.segment].samples.size()) {
      throw Error(ErrorKind::Shape, "window reference outside its segment", "splits." + split);
    }
    const Segment& seg = segments[ref.segment];
    WindowInstance w;
    w.values = Matrix(W, kAccelChannels);
    for (std::size_t i = 0; i < W; ++i) {
      const Sample& s = seg.samples[ref.start + i];
      w.values(i, 0) = s.ax;
      w.values(i, 1) = s.ay;
      w.values(i, 2) = s.az;
    }
    w.label = ref.label;
    w.source = {seg.id, ref.start};
    out.push_back(std::move(w));
  }
  return out;
}

PreparedDataset prepare_dataset(std::vector<Segment> train_segments,
                                std::vector<Segment> test_segments, const PrepareConfig& cfg,
                                const std::string& config_echo) {
  cfg.window.validate();
  PreparedDataset ds;
  ds.window = cfg.window;

  std::map<std::string, std::size_t> train_index, test_index;
  for (auto& s : train_segments) {
    train_index[s.id] = ds.segments.size();
    ds.segments.push_back(std::move(s));
    ds.origins.emplace_back("train");
  }
  for (auto& s : test_segments) {
    test_index[s.id] = ds.segments.size();
    ds.segments.push_back(std::move(s));
    ds.origins.emplace_back("test");
  }

  std::vector<WindowInstance> train_windows, test_windows;
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    auto w = make_windows(ds.segments[i], cfg.window);
    auto& dst = ds.origins[i] == "train" ? train_windows : test_windows;
    for (auto& x : w) dst.push_back(std::move(x));
  }
  if (train_windows.empty()) {
    throw Error(ErrorKind::EmptyInput, "training recordings produced no windows");
  }
  const ClassCounts windowed = count_labels(train_windows);

  Rng balance_rng(mix_seed(cfg.seed, 1));
  Rng split_rng(mix_seed(cfg.seed, 2));
  std::vector<WindowInstance> pool =
      cfg.balance ? balance_downsample(std::move(train_windows), balance_rng) : std::move(train_windows);
  const ClassCounts balanced = count_labels(pool);
  ValidationSplit split = split_validation(std::move(pool), cfg.val_fraction, split_rng);

  ds.splits["train"] = to_refs(split.train, train_index);
  ds.splits["val"] = to_refs(split.val, train_index);
  ds.splits["test"] = to_refs(test_windows, test_index);

  json manifest;
  manifest["config"] = config_echo.empty() ? json::object() : json::parse(config_echo);
  manifest["seed"] = cfg.seed;
  manifest["window"] = {{"window_size", cfg.window.window_size},
                        {"fall_point_threshold", cfg.window.fall_point_threshold},
                        {"stride", cfg.window.stride}};
  manifest["val_fraction"] = cfg.val_fraction;
  manifest["balance"] = cfg.balance;
  manifest["counts"] = {{"windowed_train", counts_json(windowed)},
                        {"balanced_train", counts_json(balanced)},
                        {"train", counts_json(counts_of(ds.splits["train"]))},
                        {"val", counts_json(counts_of(ds.splits["val"]))},
                        {"test", counts_json(counts_of(ds.splits["test"]))}};
  ds.manifest = manifest.dump();
  return ds;
}

std::string serialize_dataset(const PreparedDataset& ds) {
  json doc;
  doc["format"] = kFormatName;
  doc["format_version"] = kDatasetFormatVersion;
  doc["manifest"] = ds.manifest.empty() ? json::object() : json::parse(ds.manifest);
  doc["window"] = {{"window_size", ds.window.window_size},
                   {"fall_point_threshold", ds.window.fall_point_threshold},
                   {"stride", ds.window.stride}};
  json segs = json::array();
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    const Segment& s = ds.segments[i];
    json t = json::array(), ax = json::array(), ay = json::array(), az = json::array(),
         lbl = json::array();
    bool any_t = false;
    for (const auto& p : s.samples) {
      any_t = any_t || p.t.has_value();
      t.push_back(p.t ? json(*p.t) : json(nullptr));
      ax.push_back(p.ax);
      ay.push_back(p.ay);
      az.push_back(p.az);
      lbl.push_back(p.point_label ? json(static_cast<int>(*p.point_label)) : json(nullptr));
    }
    segs.push_back({{"id", s.id},
                    {"origin", ds.origins.at(i)},
                    {"t", any_t ? t : json(nullptr)},
                    {"ax", ax},
                    {"ay", ay},
                    {"az", az},
                    {"label", lbl}});
  }
  doc["segments"] = std::move(segs);
  json splits = json::object();
  for (const auto& [name, refs] : ds.splits) {
    json arr = json::array();
    for (const auto& r : refs) arr.push_back({r.segment, r.start, static_cast<int>(r.label)});
    splits[name] = std::move(arr);
  }
  doc["splits"] = std::move(splits);
  return doc.dump() + "\n";
}

PreparedDataset deserialize_dataset(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorKind::Parse, "dataset artifact is not a JSON object");
  }
  if (doc.value("format", std::string()) != kFormatName) {
    throw Error(ErrorKind::Parse, "not a falldef dataset artifact", "format");
  }
  const json& ver = need(doc, "format_version");
  if (!ver.is_number_integer() || ver.get<long long>() != kDatasetFormatVersion) {
    throw Error(ErrorKind::Version, "unsupported dataset format_version " + ver.dump(),
                "format_version");
  }
  PreparedDataset ds;
  try {
    ds.manifest = need(doc, "manifest").dump();
    const json& w = need(doc, "window");
    ds.window.window_size = need(w, "window_size").get<std::size_t>();
    ds.window.fall_point_threshold = need(w, "fall_point_threshold").get<std::size_t>();
    ds.window.stride = need(w, "stride").get<std::size_t>();
    ds.window.validate();
    for (const json& js : need(doc, "segments")) {
      Segment s;
      s.id = need(js, "id").get<std::string>();
      const json& t = need(js, "t");
      const json& ax = need(js, "ax");
      const json& ay = need(js, "ay");
      const json& az = need(js, "az");
      const json& lbl = need(js, "label");
      const std::size_t n = ax.size();
      if (ay.size() != n || az.size() != n || lbl.size() != n || (!t.is_null() && t.size() != n)) {
        throw Error(ErrorKind::Shape, "segment '" + s.id + "' has ragged columns", "segments");
      }
      s.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        Sample& p = s.samples[i];
        if (!t.is_null() && !t[i].is_null()) p.t = t[i].get<double>();
        p.ax = ax[i].get<double>();
        p.ay = ay[i].get<double>();
        p.az = az[i].get<double>();
        if (!lbl[i].is_null()) p.point_label = lbl[i].get<int>() == 1 ? Label::Fall : Label::NonFall;
      }
      ds.origins.push_back(need(js, "origin").get<std::string>());
      ds.segments.push_back(std::move(s));
    }
    for (const auto& [name, arr] : need(doc, "splits").items()) {
      std::vector<WindowRef> refs;
      refs.reserve(arr.size());
      for (const json& r : arr) {
        if (!r.is_array() || r.size() != 3) {
          throw Error(ErrorKind::Shape, "window references must be [segment, start, label]",
                      "splits." + name);
        }
        WindowRef ref{r[0].get<std::size_t>(), r[1].get<std::size_t>(),
                      r[2].get<int>() == 1 ? Label::Fall : Label::NonFall};
        if (ref.segment >= ds.segments.size() ||
            ref.start + ds.window.window_size > ds.segments[ref.segment].samples.size()) {
          throw Error(ErrorKind::Shape, "window reference outside its segment", "splits." + name);
        }
        refs.push_back(ref);
      }
      ds.splits[name] = std::move(refs);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed dataset artifact: ") + e.what());
  }
  return ds;
}

void save_dataset(const PreparedDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << serialize_dataset(ds);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

PreparedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset artifact " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_dataset(ss.str());
}

}  // namespace falldef
