// lfdtn command-line tool: scene generation, prediction, training,
// segmentation, evaluation and visualization.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lfdtn/lfdtn.hpp"

namespace fs = std::filesystem;
using namespace lfdtn;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string frames;
  std::string model;
};

json load_config(const CommonOptions& o) { return o.config.empty() ? json::object() : load_json(o.config); }

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

std::string frame_name(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.pgm", t);
  return buf;
}

std::string stem_name(int t, const char* ext) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04d%s", t, ext);
  return buf;
}

/// Frames of a sequence directory: either a generated run (frames/ plus
/// manifest.json) or a plain directory of PGM files.
struct LoadedSequence {
  std::vector<Image> frames;
  int seed_count = 2;
  fs::path root;
  bool has_masks = false;
};

LoadedSequence load_sequence(const fs::path& dir, std::optional<int> seed_override) {
  LoadedSequence s;
  s.root = dir;
  fs::path fdir = fs::exists(dir / "frames") ? dir / "frames" : dir;
  if (!fs::is_directory(fdir)) throw ValidationError("frame directory not found: " + fdir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fdir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .pgm frames in " + fdir.string());
  for (const auto& f : files) s.frames.push_back(to_image(read_pgm(f)));
  if (fs::exists(dir / "manifest.json")) {
    auto m = load_json(dir / "manifest.json");
    if (m.contains("seed_count")) s.seed_count = m["seed_count"].get<int>();
  }
  if (seed_override) s.seed_count = *seed_override;
  s.has_masks = fs::exists(dir / "gt" / "masks");
  if (s.seed_count < 2 || static_cast<std::size_t>(s.seed_count) > s.frames.size())
    throw ValidationError("seed_count " + std::to_string(s.seed_count) + " invalid for " +
                          std::to_string(s.frames.size()) + " frames");
  return s;
}

json base_manifest(const char* command, const json& config) {
  return {{"tool", "lfdtn"}, {"command", command}, {"config", config}};
}

void finish_manifest(const fs::path& out, json m) {
  m["outputs"] = digest_tree(out);
  save_json(out / "manifest.json", m);
}

TMHandle load_handle(const std::string& path, const PredictorConfig& pc) {
  if (path.empty()) return {};
  auto mf = load_model(path);
  if (mf.params.arch.R != pc.R)
    throw ValidationError("model was trained with R=" + std::to_string(mf.params.arch.R) + ", predictor uses R=" +
                          std::to_string(pc.R));
  return TMHandle{std::move(mf.params)};
}

// --- gen ---

void write_scene(const Scene& sc, const SceneConfig& cfg, const fs::path& dir, int maxval) {
  const GridSpec g = plan_grid(cfg.height, cfg.width, cfg.N, cfg.H, cfg.P);
  for (std::size_t t = 0; t < sc.sequence.frames.size(); ++t) {
    write_pgm(sc.sequence.frames[t], dir / "frames" / frame_name(static_cast<int>(t)), maxval);
    const auto& m = sc.truth.masks[t];
    std::vector<float> px(m.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = m[i] ? 1.0f : 0.0f;
    write_pgm(Frame(m.rows(), m.cols(), std::move(px)), dir / "gt" / "masks" / frame_name(static_cast<int>(t)));
  }
  Tensor vt{{static_cast<std::uint32_t>(sc.truth.velocity.size()), 4u, static_cast<std::uint32_t>(g.LU),
             static_cast<std::uint32_t>(g.LV)},
            {}};
  for (const auto& vf : sc.truth.velocity) {
    auto one = velocity_tensor(vf);
    vt.data.insert(vt.data.end(), one.data.begin(), one.data.end());
  }
  write_tensor(vt, dir / "gt" / "velocity.lfdt");
  std::string poses = "frame,sprite,x,y,angle,scale,vx,vy\n";
  for (std::size_t t = 0; t < sc.truth.poses.size(); ++t)
    for (std::size_t i = 0; i < sc.truth.poses[t].size(); ++i) {
      const auto& p = sc.truth.poses[t][i];
      char line[256];
      std::snprintf(line, sizeof line, "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", t, i, p.x, p.y, p.angle, p.scale,
                    p.vx, p.vy);
      poses += line;
    }
  save_text(dir / "gt" / "poses.csv", poses);

  double vmax = 0.0;
  for (const auto& s : cfg.sprites) vmax = std::max({vmax, std::abs(s.vx), std::abs(s.vy)});
  vmax = std::max({vmax, std::abs(cfg.texture.vx), std::abs(cfg.texture.vy)});
  json m = base_manifest("gen", to_json(cfg));
  m["seed"] = cfg.seed;
  m["height"] = cfg.height;
  m["width"] = cfg.width;
  m["frames"] = cfg.frames;
  m["seed_count"] = cfg.seed_count;
  m["pgm_maxval"] = maxval;
  m["max_speed"] = vmax;
  m["padding_bound"] = cfg.P;
  m["grid"] = {{"N", g.N}, {"H", g.H}, {"P", g.P}, {"LU", g.LU}, {"LV", g.LV}};
  finish_manifest(dir, m);
}

int cmd_gen(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "gen");
  int maxval = 255;
  r.get("pgm_maxval", maxval);
  const json* scene = r.child("scene");
  const json* dataset = r.child("dataset");
  r.finish();
  if (scene && dataset) throw ValidationError("gen: give either 'scene' or 'dataset', not both");
  if (dataset) {
    DatasetConfig d = parse_dataset(*dataset);
    if (o.seed) d.seed = *o.seed;
    for (int i = 0; i < d.sequences; ++i) {
      const SceneConfig sc = dataset_scene(d, i);
      write_scene(gen_sequence(sc), sc, out / "sequences" / stem_name(i, ""), maxval);
    }
    json m = base_manifest("gen", {{"dataset", to_json(d)}, {"pgm_maxval", maxval}});
    m["seed"] = d.seed;
    m["sequences"] = d.sequences;
    m["seed_count"] = d.seed_count;
    m["max_speed"] = d.speed_max;
    m["padding_bound"] = d.P;
    finish_manifest(out, m);
    std::cout << "wrote " << d.sequences << " sequences to " << out << "\n";
    return 0;
  }
  SceneConfig sc = scene ? parse_scene(*scene) : SceneConfig{};
  if (o.seed) sc.seed = *o.seed;
  write_scene(gen_sequence(sc), sc, out, maxval);
  std::cout << "wrote " << sc.frames << " frames to " << out << "\n";
  return 0;
}

// --- predict ---

void write_velocity(const VelocityField& vf, const Image& frame, const fs::path& dir, const std::string& stem,
                    double arrow_scale) {
  write_velocity_artifacts(vf, to_frame(frame), {dir / (stem + ".csv"), dir / (stem + ".ppm"), {}}, arrow_scale);
}

void write_overlay_manifest(const fs::path& dir, double arrow_scale, const GridSpec& g) {
  save_json(dir / "overlay.json", {{"arrow_scale", arrow_scale},
                                   {"arrow_units", "pixels per (pixel/frame)"},
                                   {"anchor", "cell center"},
                                   {"grid", {{"N", g.N}, {"H", g.H}, {"P", g.P}, {"LU", g.LU}, {"LV", g.LV}}}});
}

int cmd_predict(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "predict");
  PredictorConfig pc;
  if (auto* p = r.child("predictor")) pc = parse_predictor(*p);
  std::string data, model = o.model;
  int horizon = -1;
  std::optional<int> seeds;
  double arrow_scale = 3.0;
  int seed_count = -1;
  r.get("data", data).get("model", model).get("horizon", horizon).get("seed_count", seed_count);
  r.get("arrow_scale", arrow_scale);
  r.finish();
  if (!o.model.empty()) model = o.model;
  if (!o.frames.empty()) data = o.frames;
  if (data.empty()) throw ValidationError("predict: no input frames (set 'data' or --frames)");
  if (seed_count >= 0) seeds = seed_count;
  auto seq = load_sequence(data, seeds);
  const int T = horizon >= 0 ? horizon : static_cast<int>(seq.frames.size()) - seq.seed_count;
  const Pipeline pl = Pipeline::make(pc, seq.frames[0].rows(), seq.frames[0].cols());
  const TMHandle handle = load_handle(model, pc);

  std::span<const Image> seed_span(seq.frames.data(), seq.seed_count);
  auto ro = rollout(seed_span, T, pl, handle);
  for (int s = 0; s < T; ++s) {
    const int t = seq.seed_count + s;
    const Frame f = to_frame(ro.predictions[s]);
    write_pgm(f, out / "frames" / frame_name(t));
    // score what was written
    ro.predictions[s] = to_image(decode_pgm(encode_pgm(f)));
    const Image& base = s == 0 ? seq.frames[seq.seed_count - 1] : ro.predictions[s - 1];
    write_velocity(ro.raw[s], base, out / "velocity", "raw_" + stem_name(t, ""), arrow_scale);
    write_velocity(ro.refined[s], base, out / "velocity", "refined_" + stem_name(t, ""), arrow_scale);
  }
  write_overlay_manifest(out / "velocity", arrow_scale, pl.grid);

  json m = base_manifest("predict", {{"predictor", to_json(pc)}, {"data", data}, {"model", model}, {"horizon", T}});
  m["seed_count"] = seq.seed_count;
  m["model"] = handle.identity() ? json("identity") : json(model);
  const int scored = std::min<int>(T, static_cast<int>(seq.frames.size()) - seq.seed_count);
  if (scored > 0) {
    std::vector<Image> pred(seq.frames.begin(), seq.frames.begin() + seq.seed_count), gt = pred, copy = pred;
    for (int s = 0; s < scored; ++s) {
      pred.push_back(ro.predictions[s]);
      gt.push_back(seq.frames[seq.seed_count + s]);
      copy.push_back(seq.frames[seq.seed_count - 1]);
    }
    auto rep = evaluate_run(pred, gt, seq.seed_count);
    save_text(out / "metrics.csv", metrics_csv(rep));
    auto base = evaluate_run(copy, gt, seq.seed_count);
    m["mean_mse"] = rep.mean.mse;
    m["copy_last_mean_mse"] = base.mean.mse;
    std::cout << "mean mse " << rep.mean.mse << " (copy-last " << base.mean.mse << ")\n";
  }
  finish_manifest(out, m);
  return 0;
}

// --- train ---

std::vector<Sequence> load_dataset_dir(const fs::path& dir) {
  std::vector<Sequence> data;
  const fs::path root = fs::exists(dir / "sequences") ? dir / "sequences" : dir;
  std::vector<fs::path> seqs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) seqs.push_back(e.path());
  std::sort(seqs.begin(), seqs.end());
  for (const auto& s : seqs) {
    auto ls = load_sequence(s, std::nullopt);
    data.push_back({std::move(ls.frames), ls.seed_count});
  }
  if (data.empty()) throw ValidationError("no sequences under " + root.string());
  return data;
}

std::vector<Sequence> generate_dataset(const DatasetConfig& d) {
  std::vector<Sequence> data;
  for (int i = 0; i < d.sequences; ++i) {
    auto sc = gen_sequence(dataset_scene(d, i));
    data.push_back({std::move(sc.images), d.seed_count});
  }
  return data;
}

int cmd_train(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "train");
  PredictorConfig pc;
  TrainConfig tc;
  std::string data;
  std::optional<DatasetConfig> ds, val;
  if (auto* p = r.child("predictor")) pc = parse_predictor(*p);
  if (auto* t = r.child("train")) tc = parse_train(*t);
  if (auto* d = r.child("dataset")) ds = parse_dataset(*d);
  if (auto* v = r.child("validation")) val = parse_dataset(*v);
  r.get("data", data);
  r.finish();
  if (!o.frames.empty()) data = o.frames;
  if (o.seed) tc.seed = *o.seed;
  tc.arch.R = pc.R;

  std::vector<Sequence> train_set;
  if (!data.empty()) {
    train_set = load_dataset_dir(data);
  } else if (ds) {
    train_set = generate_dataset(*ds);
  } else {
    throw ValidationError("train: set 'data' (a generated dataset directory) or 'dataset' (generated in memory)");
  }
  std::string log = "epoch,lr,loss,dssim,mse\n";
  auto res = train(train_set, pc, tc, [&log](const EpochLog& e) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.loss, e.dssim, e.mse);
    log += line;
    std::cout << line << std::flush;
  });
  save_text(out / "train_log.csv", log);
  json meta = {{"config", {{"predictor", to_json(pc)}, {"train", to_json(tc)}}},
               {"seed", tc.seed},
               {"epoch", static_cast<int>(res.log.size())},
               {"diverged", res.diverged}};
  save_model(out / "model.lfdt", res.params, meta);

  json m = base_manifest("train", {{"predictor", to_json(pc)}, {"train", to_json(tc)}, {"data", data}});
  m["seed"] = tc.seed;
  m["epochs_completed"] = res.log.size();
  m["parameter_count"] = res.params.values.size();
  const auto eval_set = val ? generate_dataset(*val) : std::vector<Sequence>{};
  std::span<const Sequence> es = val ? std::span<const Sequence>(eval_set) : std::span<const Sequence>(train_set);
  const Pipeline pl = Pipeline::make(pc, es.front().frames[0].rows(), es.front().frames[0].cols());
  m["eval_set"] = val ? "validation" : "training";
  m["rollout_mse_trained"] = mean_rollout_mse(es, pl, TMHandle{res.params});
  m["rollout_mse_identity"] = mean_rollout_mse(es, pl, TMHandle{});
  m["rollout_mse_copy_last"] = mean_copy_last_mse(es);
  finish_manifest(out, m);
  if (res.diverged) {
    std::cerr << "error: " << res.message << "\n";
    return 2;
  }
  return 0;
}

// --- segment ---

int cmd_segment(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "segment");
  SegConfig sc;
  std::string data, model = o.model;
  double arrow_scale = 3.0;
  if (auto* s = r.child("segmentation")) sc = parse_segmentation(*s);
  r.get("data", data).get("model", model).get("arrow_scale", arrow_scale);
  r.finish();
  if (!o.model.empty()) model = o.model;
  if (!o.frames.empty()) data = o.frames;
  if (data.empty()) throw ValidationError("segment: no input frames (set 'data' or --frames)");
  auto seq = load_sequence(data, std::nullopt);
  const TMHandle handle = load_handle(model, sc.predictor);
  auto res = seg_run(seq.frames, seq.seed_count, sc, handle);

  json steps = json::array();
  for (const auto& st : res.steps) {
    const fs::path d = out / "steps" / stem_name(st.state.t, "");
    write_pgm(to_frame(st.state.fg), d / "fg.pgm");
    write_pgm(to_frame(st.state.bg), d / "bg.pgm");
    write_pgm(to_frame(st.state.a), d / "a.pgm");
    write_pgm(to_frame(st.predicted), d / "predicted.pgm");
    write_velocity(st.velocity, st.predicted, d, "lt_velocity", arrow_scale);
    json row = {{"t", st.state.t}, {"corrected", st.corrected}, {"alpha_clamped", st.clamped}};
    const fs::path mask = seq.root / "gt" / "masks" / frame_name(st.state.t);
    if (fs::exists(mask)) {
      auto gm = read_pgm(mask);
      Plane<std::uint8_t> mk(gm.height(), gm.width(), 0);
      for (std::size_t i = 0; i < mk.size(); ++i) mk[i] = gm.pixels()[i] >= 0.5f;
      row["alpha_iou"] = alpha_iou(st.state.a, mk);
    }
    if (static_cast<std::size_t>(st.state.t) < seq.frames.size())
      row["mse"] = mse(st.predicted, seq.frames[st.state.t]);
    steps.push_back(row);
  }
  save_text(out / "steps" / "overlay_scale.txt", "arrow_scale " + std::to_string(arrow_scale) + "\n");
  json m = base_manifest("segment", {{"segmentation", to_json(sc)}, {"data", data}, {"model", model}});
  m["seed_count"] = seq.seed_count;
  m["arrow_scale"] = arrow_scale;
  m["steps"] = steps;
  finish_manifest(out, m);
  return 0;
}

// --- eval ---

int cmd_eval(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "eval");
  std::string pred_dir, gt_dir;
  int seed_count = -1;
  r.get("pred", pred_dir).get("gt", gt_dir).get("seed_count", seed_count);
  r.finish();
  if (!o.frames.empty()) pred_dir = o.frames;
  if (pred_dir.empty() || gt_dir.empty()) throw ValidationError("eval: set 'pred' and 'gt' directories");
  auto gt = load_sequence(gt_dir, seed_count >= 0 ? std::optional<int>(seed_count) : std::nullopt);
  const fs::path pdir = fs::exists(fs::path(pred_dir) / "frames") ? fs::path(pred_dir) / "frames" : fs::path(pred_dir);
  std::vector<Image> pred(gt.frames.begin(), gt.frames.begin() + gt.seed_count);
  for (std::size_t t = gt.seed_count; t < gt.frames.size(); ++t) {
    const fs::path f = pdir / frame_name(static_cast<int>(t));
    if (!fs::exists(f)) throw ValidationError("eval: missing predicted frame " + f.string());
    pred.push_back(to_image(read_pgm(f)));
  }
  auto rep = evaluate_run(pred, gt.frames, gt.seed_count);
  save_text(out / "metrics.csv", metrics_csv(rep));
  json m = base_manifest("eval", {{"pred", pred_dir}, {"gt", gt_dir}, {"seed_count", gt.seed_count}});
  m["mean"] = {{"l1", rep.mean.l1}, {"mse", rep.mean.mse}, {"dssim", rep.mean.dssim}, {"bce", rep.mean.bce},
               {"psnr", rep.mean.psnr}};
  finish_manifest(out, m);
  std::cout << metrics_csv(rep);
  return 0;
}

// --- viz ---

int cmd_viz(const CommonOptions& o) {
  const json cfg = load_config(o);
  const fs::path out = require_out(o);
  detail::ObjectReader r(cfg, "viz");
  PredictorConfig pc;
  std::string data;
  double arrow_scale = 3.0;
  if (auto* p = r.child("predictor")) pc = parse_predictor(*p);
  r.get("data", data).get("arrow_scale", arrow_scale);
  r.finish();
  if (!o.frames.empty()) data = o.frames;
  if (data.empty()) throw ValidationError("viz: no input frames (set 'data' or --frames)");
  auto seq = load_sequence(data, std::nullopt);
  const Pipeline pl = Pipeline::make(pc, seq.frames[0].rows(), seq.frames[0].cols());
  LocalSpectra prev = lft(seq.frames[0], pl.grid, pl.window);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    auto cur = lft(seq.frames[t], pl.grid, pl.window);
    auto vf = extract_velocity(phase_diff(cur, prev, pc.energy_eps), bin_energies(cur));
    write_velocity(vf, seq.frames[t], out, stem_name(static_cast<int>(t), ""), arrow_scale);
    prev = std::move(cur);
  }
  write_overlay_manifest(out, arrow_scale, pl.grid);
  finish_manifest(out, base_manifest("viz", {{"predictor", to_json(pc)}, {"data", data}, {"arrow_scale", arrow_scale}}));
  return 0;
}

int cmd_selftest() {
  bool all = true;
  for (const auto& c : run_selftest()) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    all = all && c.pass;
  }
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local Fourier transform video prediction and motion segmentation"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "RNG seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--frames", opt.frames, "input frame or dataset directory (overrides the config)");
    sub->add_option("--model", opt.model, "trained transform model (.lfdt)");
  };
  auto* gen = app.add_subcommand("gen", "render a scene or dataset with ground truth");
  auto* predict = app.add_subcommand("predict", "closed-loop prediction from seed frames");
  auto* trn = app.add_subcommand("train", "train the transform model");
  auto* seg = app.add_subcommand("segment", "motion segmentation of a sequence");
  auto* ev = app.add_subcommand("eval", "score predicted frames against ground truth");
  auto* viz = app.add_subcommand("viz", "velocity overlays for consecutive frames");
  auto* self = app.add_subcommand("selftest", "run built-in invariant checks");
  for (auto* s : {gen, predict, trn, seg, ev, viz}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return 1;
  }

  for (auto* s : {gen, predict, trn, seg, ev, viz})
    if (s->parsed() && s->count("--seed")) opt.seed = seed;

  try {
    if (gen->parsed()) return cmd_gen(opt);
    if (predict->parsed()) return cmd_predict(opt);
    if (trn->parsed()) return cmd_train(opt);
    if (seg->parsed()) return cmd_segment(opt);
    if (ev->parsed()) return cmd_eval(opt);
    if (viz->parsed()) return cmd_viz(opt);
    if (self->parsed()) return cmd_selftest();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
