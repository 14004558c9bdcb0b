#pragma once

// JSON configuration, model files and run manifests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lfdtn/error.hpp"
#include "lfdtn/motion_seg.hpp"
#include "lfdtn/predictor.hpp"
#include "lfdtn/scene.hpp"
#include "lfdtn/tensor_io.hpp"
#include "lfdtn/training.hpp"

namespace lfdtn {

using json = nlohmann::ordered_json;

namespace detail {

/// Reads keys of one JSON object into existing defaults and rejects keys it
/// does not know.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ValidationError(ctx_ + ": expected a JSON object");
  }

  template <class T>
  ObjectReader& get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(ctx_ + "." + key + ": wrong type (" + it->type_name() + ")");
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(ctx_ + ": unknown key '" + it.key() + "'");
  }

private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("json: " + path.string() + ": " + e.what(), e.byte);
  }
}

inline void save_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void save_json(const std::filesystem::path& path, const json& j) { save_text(path, j.dump(2) + "\n"); }

// --- predictor ---

inline PredictorConfig parse_predictor(const json& j) {
  PredictorConfig c;
  detail::ObjectReader r(j, "predictor");
  std::string window(to_string(c.window));
  r.get("N", c.N).get("H", c.H).get("P", c.P).get("window", window).get("sigma_t", c.sigma_t).get("R", c.R);
  r.get("horizon", c.horizon).get("energy_eps", c.energy_eps);
  r.get("synthesis_eps", c.synthesis.eps).get("strict_nola", c.synthesis.strict);
  r.finish();
  c.window = parse_window_kind(window);
  return c;
}

inline json to_json(const PredictorConfig& c) {
  return {{"N", c.N},
          {"H", c.H},
          {"P", c.P},
          {"window", std::string(to_string(c.window))},
          {"sigma_t", c.sigma_t},
          {"R", c.R},
          {"horizon", c.horizon},
          {"energy_eps", c.energy_eps},
          {"synthesis_eps", c.synthesis.eps},
          {"strict_nola", c.synthesis.strict}};
}

// --- scenes ---

inline SpriteSpec parse_sprite(const json& j) {
  SpriteSpec s;
  detail::ObjectReader r(j, "sprite");
  std::string shape(to_string(s.shape)), glyph(1, s.glyph);
  r.get("shape", shape).get("size", s.size).get("vertices", s.vertices).get("glyph", glyph).get("stamp", s.stamp);
  r.get("intensity", s.intensity).get("x", s.x).get("y", s.y).get("vx", s.vx).get("vy", s.vy);
  r.get("angle", s.angle).get("angular_velocity", s.angular_velocity).get("scale", s.scale);
  r.get("scale_rate", s.scale_rate);
  r.finish();
  s.shape = parse_shape_kind(shape);
  if (glyph.size() != 1) throw ValidationError("sprite.glyph: expected a single character");
  s.glyph = glyph[0];
  return s;
}

inline json to_json(const SpriteSpec& s) {
  return {{"shape", std::string(to_string(s.shape))},
          {"size", s.size},
          {"vertices", s.vertices},
          {"glyph", std::string(1, s.glyph)},
          {"stamp", s.stamp},
          {"intensity", s.intensity},
          {"x", s.x},
          {"y", s.y},
          {"vx", s.vx},
          {"vy", s.vy},
          {"angle", s.angle},
          {"angular_velocity", s.angular_velocity},
          {"scale", s.scale},
          {"scale_rate", s.scale_rate}};
}

inline Background parse_background(const std::string& s) {
  if (s == "black") return Background::black;
  if (s == "texture") return Background::texture;
  throw ValidationError("unknown background '" + s + "' (black, texture)");
}

inline std::string to_string(Background b) { return b == Background::black ? "black" : "texture"; }

inline TextureSpec parse_texture(const json& j) {
  TextureSpec t;
  detail::ObjectReader r(j, "texture");
  r.get("seed", t.seed).get("components", t.components).get("max_frequency", t.max_frequency);
  r.get("lo", t.lo).get("hi", t.hi).get("vx", t.vx).get("vy", t.vy);
  r.finish();
  return t;
}

inline json to_json(const TextureSpec& t) {
  return {{"seed", t.seed}, {"components", t.components}, {"max_frequency", t.max_frequency},
          {"lo", t.lo},     {"hi", t.hi},                 {"vx", t.vx},
          {"vy", t.vy}};
}

inline SceneConfig parse_scene(const json& j) {
  SceneConfig c;
  detail::ObjectReader r(j, "scene");
  std::string bg = to_string(c.background);
  r.get("height", c.height).get("width", c.width).get("frames", c.frames).get("seed_count", c.seed_count);
  r.get("background", bg).get("bounce", c.bounce).get("N", c.N).get("H", c.H).get("P", c.P).get("seed", c.seed);
  if (auto* s = r.child("sprites")) {
    if (!s->is_array()) throw ValidationError("scene.sprites: expected an array");
    for (const auto& e : *s) c.sprites.push_back(parse_sprite(e));
  }
  if (auto* t = r.child("texture")) c.texture = parse_texture(*t);
  r.finish();
  c.background = parse_background(bg);
  return c;
}

inline json to_json(const SceneConfig& c) {
  json sprites = json::array();
  for (const auto& s : c.sprites) sprites.push_back(to_json(s));
  return {{"height", c.height}, {"width", c.width},   {"frames", c.frames},
          {"seed_count", c.seed_count}, {"sprites", sprites},
          {"background", to_string(c.background)}, {"texture", to_json(c.texture)},
          {"bounce", c.bounce}, {"N", c.N},           {"H", c.H},
          {"P", c.P},           {"seed", c.seed}};
}

inline DatasetConfig parse_dataset(const json& j) {
  DatasetConfig d;
  detail::ObjectReader r(j, "dataset");
  std::string bg = to_string(d.background);
  r.get("sequences", d.sequences).get("height", d.height).get("width", d.width).get("frames", d.frames);
  r.get("seed_count", d.seed_count).get("sprites", d.sprites).get("size_min", d.size_min).get("size_max", d.size_max);
  r.get("speed_min", d.speed_min).get("speed_max", d.speed_max);
  r.get("angular_velocity_max", d.angular_velocity_max).get("scale_rate_max", d.scale_rate_max);
  r.get("background", bg).get("N", d.N).get("H", d.H).get("P", d.P).get("seed", d.seed);
  r.finish();
  d.background = parse_background(bg);
  if (d.sequences < 1) throw ValidationError("dataset.sequences must be >= 1");
  return d;
}

inline json to_json(const DatasetConfig& d) {
  return {{"sequences", d.sequences},
          {"height", d.height},
          {"width", d.width},
          {"frames", d.frames},
          {"seed_count", d.seed_count},
          {"sprites", d.sprites},
          {"size_min", d.size_min},
          {"size_max", d.size_max},
          {"speed_min", d.speed_min},
          {"speed_max", d.speed_max},
          {"angular_velocity_max", d.angular_velocity_max},
          {"scale_rate_max", d.scale_rate_max},
          {"background", to_string(d.background)},
          {"N", d.N},
          {"H", d.H},
          {"P", d.P},
          {"seed", d.seed}};
}

// --- training ---

inline TMArch parse_arch(const json& j) {
  TMArch a;
  detail::ObjectReader r(j, "model");
  r.get("layers", a.layers).get("growth", a.growth).get("R", a.R);
  r.finish();
  a.validate();
  return a;
}

inline json to_json(const TMArch& a) { return {{"layers", a.layers}, {"growth", a.growth}, {"R", a.R}}; }

inline TrainConfig parse_train(const json& j) {
  TrainConfig c;
  detail::ObjectReader r(j, "train");
  if (auto* m = r.child("model")) c.arch = parse_arch(*m);
  r.get("alpha", c.loss.alpha).get("beta", c.loss.beta).get("gamma", c.loss.gamma);
  r.get("epochs", c.epochs).get("batch_size", c.batch_size).get("lr_min", c.lr_min).get("lr_max", c.lr_max);
  r.get("lr_period", c.lr_period).get("beta1", c.beta1).get("beta2", c.beta2).get("adam_eps", c.adam_eps);
  r.get("weight_decay", c.weight_decay).get("seed", c.seed).get("threads", c.threads);
  r.finish();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.arch)}, {"alpha", c.loss.alpha},   {"beta", c.loss.beta},
          {"gamma", c.loss.gamma},    {"epochs", c.epochs},      {"batch_size", c.batch_size},
          {"lr_min", c.lr_min},       {"lr_max", c.lr_max},      {"lr_period", c.lr_period},
          {"beta1", c.beta1},         {"beta2", c.beta2},        {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay}, {"seed", c.seed},    {"threads", c.threads}};
}

// --- segmentation ---

inline SegConfig parse_segmentation(const json& j) {
  SegConfig c;
  detail::ObjectReader r(j, "segmentation");
  if (auto* p = r.child("predictor")) c.predictor = parse_predictor(*p);
  r.get("eta_fg", c.gains.fg).get("eta_bg", c.gains.bg).get("eta_a", c.gains.a).get("eta_lt", c.gains.lt);
  r.get("lambda_a", c.gains.lambda_a);
  r.get("smooth_sigma", c.init.smooth_sigma).get("tau", c.init.tau).get("sharpness", c.init.sharpness);
  r.get("norm_floor", c.init.norm_floor).get("beta0", c.init.beta0).get("rho", c.init.rho);
  r.get("blend_steps", c.init.blend_steps).get("observe", c.observe).get("horizon", c.horizon);
  r.finish();
  return c;
}

inline json to_json(const SegConfig& c) {
  return {{"predictor", to_json(c.predictor)},
          {"eta_fg", c.gains.fg},
          {"eta_bg", c.gains.bg},
          {"eta_a", c.gains.a},
          {"eta_lt", c.gains.lt},
          {"lambda_a", c.gains.lambda_a},
          {"smooth_sigma", c.init.smooth_sigma},
          {"tau", c.init.tau},
          {"sharpness", c.init.sharpness},
          {"norm_floor", c.init.norm_floor},
          {"beta0", c.init.beta0},
          {"rho", c.init.rho},
          {"blend_steps", c.init.blend_steps},
          {"observe", c.observe},
          {"horizon", c.horizon}};
}

// --- model files ---

struct ModelFile {
  TMParams params;
  json meta;  // sidecar contents
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& model) {
  auto p = model;
  p.replace_extension(".json");
  return p;
}

/// Parameters as an LFDT tensor plus a JSON sidecar next to it.
inline void save_model(const std::filesystem::path& path, const TMParams& p, json meta) {
  Tensor t{{static_cast<std::uint32_t>(p.values.size())}, {}};
  for (double v : p.values) t.data.push_back(static_cast<float>(v));
  write_tensor(t, path);
  meta["architecture"] = to_json(p.arch);
  meta["parameter_count"] = p.values.size();
  save_json(sidecar_path(path), meta);
}

inline ModelFile load_model(const std::filesystem::path& path) {
  auto meta = load_json(sidecar_path(path));
  if (!meta.contains("architecture")) throw ValidationError("model sidecar lacks 'architecture'");
  TMArch a = parse_arch(meta["architecture"]);
  auto t = read_tensor(path);
  if (t.dims.size() != 1 || t.data.size() != a.parameter_count())
    throw ValidationError("model tensor has " + std::to_string(t.data.size()) + " values, architecture needs " +
                          std::to_string(a.parameter_count()));
  ModelFile m{TMParams{a, std::vector<double>(t.data.begin(), t.data.end())}, meta};
  return m;
}

// --- manifests ---

/// FNV-1a over a file's bytes, as 16 hex digits.
inline std::string file_digest(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Digest of every regular file under root except manifest.json, keyed by
/// relative path in sorted order.
inline json digest_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[std::filesystem::relative(f, root).generic_string()] = file_digest(f);
  return out;
}

}  // namespace lfdtn
