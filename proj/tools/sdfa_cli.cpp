// Command-line entry points: gen-data, train, eval, infer, offsets.

#include "sdfa/checkpoint.hpp"
#include "sdfa/config.hpp"
#include "sdfa/data.hpp"
#include "sdfa/evaluation.hpp"
#include "sdfa/image_io.hpp"
#include "sdfa/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace sdfa;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::int64_t> seed;
  bool post_process = false;
  std::string device = "cpu";
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "JSON configuration file (flat dotted keys or nested objects)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "Override a configuration key, e.g. --set weights.lambda2=0.02")
      ->take_all()
      ->allow_extra_args(true);
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_flag("--post-process", f.post_process, "Blend with the prediction for the mirrored input");
  cmd->add_option("--device", f.device, "Compute device (only 'cpu' is available)");
}

void check_device(const CommonFlags& f) {
  if (f.device != "cpu") throw ConfigError("unsupported device '" + f.device + "' (available: cpu)");
}

nlohmann::json load_flat_config(const CommonFlags& f) {
  nlohmann::json flat = f.config.empty() ? nlohmann::json::object() : read_json_file(f.config);
  for (const auto& o : f.overrides) apply_override(flat, o);
  return flat;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonFlags& f) {
  check_device(f);
  nlohmann::json flat = load_flat_config(f);
  if (f.seed) flat["synthetic.seed"] = *f.seed;
  const SyntheticDatasetSpec spec = synthetic_spec_from_json(flat);
  write_synthetic_dataset(f.out, spec);
  std::ofstream(fs::path(f.out) / "synthetic_config.json") << to_json(spec).dump(2) << "\n";
  std::cout << "wrote " << spec.train_count << " train and " << spec.test_count << " test pairs to " << f.out << "\n";
  return kOk;
}

struct TrainFlags {
  std::string profile = "paper";
  std::string data;
  std::string resume;
  std::int64_t max_steps = -1;
};

int cmd_train(const CommonFlags& f, const TrainFlags& t) {
  check_device(f);
  TrainConfig base;
  if (t.profile == "paper")
    base = paper_profile();
  else if (t.profile == "desk")
    base = desk_profile();
  else
    throw ConfigError("unknown profile '" + t.profile + "' (expected paper or desk)");
  nlohmann::json flat = load_flat_config(f);
  if (f.seed) {
    flat["seed"] = *f.seed;
    flat["network.seed"] = *f.seed;
  }
  if (!t.data.empty()) flat["data.root"] = t.data;
  const TrainConfig config = train_config_from_json(flat, base);
  if (config.data_root.empty()) throw ConfigError("no dataset given (use --data or data.root)");

  const ManifestSource source(load_manifest(config.data_root, config.train_split));
  fs::create_directories(f.out);
  std::ofstream(fs::path(f.out) / "config.json") << to_json(config).dump(2) << "\n";

  DepthNet<float> net(config.network);
  Trainer trainer(config, net);
  if (!t.resume.empty()) trainer.resume(t.resume);
  TrainerCallbacks callbacks;
  callbacks.on_epoch = [&](std::int64_t epoch) {
    std::cout << "epoch " << epoch << "/" << config.epochs << " done (step " << trainer.step() << ")\n" << std::flush;
  };
  try {
    trainer.run(source, f.out, callbacks,
                t.max_steps >= 0 ? t.max_steps : std::numeric_limits<std::int64_t>::max());
  } catch (const NumericError& e) {
    std::ofstream(fs::path(f.out) / "numeric_failure.json") << e.dump() << "\n";
    throw;
  }
  trainer.save(fs::path(f.out) / "last.ckpt");
  std::cout << "training stopped at step " << trainer.step() << "; checkpoint " << (fs::path(f.out) / "last.ckpt")
            << "\n";
  return kOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string path = "distilled";
  bool no_flip = false;
  bool no_crop = false;
  bool median_scaling = false;
  double depth_cap = 80.0;
};

PathSelector path_from_string(const std::string& s) {
  if (s == "raw") return PathSelector::raw;
  if (s == "distilled") return PathSelector::distilled;
  throw ConfigError("unknown path '" + s + "' (expected raw or distilled)");
}

int cmd_eval(const CommonFlags& f, const EvalFlags& e) {
  check_device(f);
  if (!f.config.empty() || !f.overrides.empty()) throw ConfigError("eval takes no configuration keys");
  EvalOptions options;
  options.post_process = f.post_process;
  options.garg_crop = !e.no_crop;
  options.depth_cap = e.depth_cap;
  options.median_scaling = e.median_scaling;
  options.path = path_from_string(e.path);
  options.flipped = !e.no_flip;
  const auto net = load_network(e.checkpoint);
  const ManifestSource source(load_manifest(e.data, e.split));
  const EvaluationReport report = evaluate_model(*net, source, options);
  const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(out);
  write_metrics_csv(out / "metrics.csv", report);
  write_summary_json(out / "summary.json", report, options);
  std::printf("abs_rel %.4f sq_rel %.4f rmse %.4f log_rmse %.4f a1 %.4f a2 %.4f a3 %.4f (%zu images)\n",
              report.mean.abs_rel, report.mean.sq_rel, report.mean.rmse, report.mean.log_rmse, report.mean.a1,
              report.mean.a2, report.mean.a3, report.per_image.size());
  if (report.disparity)
    std::printf("disparity: median abs error %.4f px, delta<1.25 %.4f\n", report.disparity->median_abs_error,
                report.disparity->delta_1_25);
  return kOk;
}

struct InferFlags {
  std::string checkpoint;
  std::vector<std::string> images;
  bool no_depth_png = false;
  bool colormap = false;
  double baseline = 0.54;
  double focal_x = 0;
};

int cmd_infer(const CommonFlags& f, const InferFlags& in) {
  check_device(f);
  if (!f.config.empty() || !f.overrides.empty()) throw ConfigError("infer takes no configuration keys");
  const auto net = load_network(in.checkpoint);
  const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(out);
  EvalOptions options;
  options.post_process = f.post_process;
  int failures = 0;
  for (const auto& path : in.images) {
    try {
      const Tensor<float> image = read_png_rgb(path);
      CameraRig rig{in.baseline, in.focal_x > 0 ? in.focal_x : 0.58 * static_cast<double>(image.w())};
      rig.validate();
      const Tensor<float> depth = predict_depth(*net, image, rig, options);
      const std::string stem = fs::path(path).stem().string();
      if (!in.no_depth_png) {
        Tensor<float> mm = depth;
        mm.vec() *= 1000.0f;
        write_png_gray16(out / (stem + "_depth.png"), mm);
        const nlohmann::json sidecar{{"source", path},
                                     {"encoding", "16-bit gray PNG"},
                                     {"unit", "millimeter"},
                                     {"scale_m_per_unit", 0.001},
                                     {"max_depth_m", 65.535},
                                     {"baseline", rig.baseline},
                                     {"focal_x", rig.focal_x},
                                     {"post_process", options.post_process}};
        std::ofstream(out / (stem + "_depth.json")) << sidecar.dump(2) << "\n";
      }
      if (in.colormap) write_png_rgb(out / (stem + "_color.png"), depth_color_map(depth));
      std::cout << path << " -> " << (out / stem).string() << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "error: " << path << ": " << e.what() << "\n";
    }
  }
  return failures > 0 ? kDataError : kOk;
}

struct OffsetFlags {
  std::string checkpoint;
  std::string image;
  std::string path = "distilled";
};

int cmd_offsets(const CommonFlags& f, const OffsetFlags& o) {
  check_device(f);
  if (!f.config.empty() || !f.overrides.empty()) throw ConfigError("offsets takes no configuration keys");
  const auto net = load_network(o.checkpoint);
  if (net->config().decoder == DecoderKind::concat)
    throw ConfigError("the checkpoint uses the concatenation decoder, which has no offsets");
  const Tensor<float> image = read_png_rgb(o.image);
  const PathSelector path = path_from_string(o.path);
  const DecoderTrace<float> trace = net->trace_offsets(image, path, path == PathSelector::distilled);
  const auto norms = offset_norms(trace);
  const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(out);
  nlohmann::json report = nlohmann::json::array();
  for (const auto& s : norms) {
    nlohmann::json row{{"stage", s.stage}};
    if (s.delta_f) row["delta_f"] = *s.delta_f;
    if (s.delta_c1) row["delta_c1"] = *s.delta_c1;
    if (s.delta_c2) row["delta_c2"] = *s.delta_c2;
    report.push_back(row);
    std::printf("stage %lld: delta_f %.4f delta_c1 %.4f delta_c2 %.4f\n", static_cast<long long>(s.stage),
                s.delta_f.value_or(0.0), s.delta_c1.value_or(0.0), s.delta_c2.value_or(0.0));
  }
  std::ofstream(out / "offsets.json") << nlohmann::json{{"image", o.image}, {"path", o.path}, {"stages", report}}.dump(2)
                                      << "\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::string stage = "stage" + std::to_string(i + 1);
    if (trace[i].delta_f) write_png_rgb(out / (stage + "_delta_f.png"), offset_color_map(*trace[i].delta_f));
    if (trace[i].delta_c1) write_png_rgb(out / (stage + "_delta_c1.png"), offset_color_map(*trace[i].delta_c1));
    if (trace[i].delta_c2) write_png_rgb(out / (stage + "_delta_c2.png"), offset_color_map(*trace[i].delta_c2));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised depth estimation with self-distilled feature aggregation"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, infer_flags, offset_flags;
  TrainFlags train;
  EvalFlags eval;
  InferFlags infer;
  OffsetFlags offsets;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic stereo dataset with exact ground truth");
  add_common(gen, gen_flags, true);

  auto* tr = app.add_subcommand("train", "Train a depth network on a dataset");
  add_common(tr, train_flags, true);
  tr->add_option("--profile", train.profile, "Default settings: paper or desk")->capture_default_str();
  tr->add_option("--data", train.data, "Dataset root (overrides data.root)");
  tr->add_option("--resume", train.resume, "Resume from a training checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--max-steps", train.max_steps, "Stop after this many steps");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_common(ev, eval_flags, false);
  ev->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval.data, "Dataset root")->required();
  ev->add_option("--split", eval.split, "Split file name without .txt")->capture_default_str();
  ev->add_option("--path", eval.path, "Decoder path: raw or distilled")->capture_default_str();
  ev->add_flag("--no-flip", eval.no_flip, "Decode unmirrored features");
  ev->add_flag("--no-crop", eval.no_crop, "Evaluate the full image instead of the standard crop");
  ev->add_flag("--median-scaling", eval.median_scaling, "Scale predictions by the median ground-truth ratio");
  ev->add_option("--depth-cap", eval.depth_cap, "Depth cap in meters")->capture_default_str();

  auto* inf = app.add_subcommand("infer", "Predict depth for PNG images");
  add_common(inf, infer_flags, false);
  inf->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  inf->add_option("images", infer.images, "Input PNG images")->required();
  inf->add_flag("--no-depth-png", infer.no_depth_png, "Skip the 16-bit depth PNG (millimeters)");
  inf->add_flag("--colormap", infer.colormap, "Also write a color-mapped depth image");
  inf->add_option("--baseline", infer.baseline, "Stereo baseline in meters")->capture_default_str();
  inf->add_option("--focal-x", infer.focal_x, "Focal length in pixels (default 0.58 * width)");

  auto* off = app.add_subcommand("offsets", "Report offset norms and write color-coded offset maps");
  add_common(off, offset_flags, false);
  off->add_option("--checkpoint", offsets.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  off->add_option("--image", offsets.image, "Input PNG image")->required();
  off->add_option("--path", offsets.path, "Decoder path: raw or distilled")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (tr->parsed()) return cmd_train(train_flags, train);
    if (ev->parsed()) return cmd_eval(eval_flags, eval);
    if (inf->parsed()) return cmd_infer(infer_flags, infer);
    if (off->parsed()) return cmd_offsets(offset_flags, offsets);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const DataLoadError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ImageIoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
