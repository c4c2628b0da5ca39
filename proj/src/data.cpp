#include "sdfa/data.hpp"

#include "sdfa/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace sdfa {

namespace fs = std::filesystem;

Tensor<float> ground_truth_depth(const StereoSample& sample) {
  if (sample.depth) return *sample.depth;
  if (!sample.disparity) throw DataLoadError("sample '" + sample.id + "' has no ground truth");
  const double bf = sample.rig.bf();
  Tensor<float> depth(sample.disparity->shape());
  for (Index i = 0; i < depth.size(); ++i) {
    const float d = (*sample.disparity)[i];
    depth[i] = d > 0 ? static_cast<float>(bf / d) : 0.0f;
  }
  return depth;
}

StereoSample flip_pair(const StereoSample& sample) {
  StereoSample out = sample;
  out.left = flip_width(sample.right);
  out.right = flip_width(sample.left);
  // Left-view ground truth does not describe the new left view.
  out.disparity.reset();
  out.depth.reset();
  out.occluded.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::noise: return "noise";
    case TextureKind::gradient: return "gradient";
    case TextureKind::checker: return "checker";
  }
  return "noise";
}

TextureKind texture_kind_from_string(const std::string& name) {
  if (name == "noise") return TextureKind::noise;
  if (name == "gradient") return TextureKind::gradient;
  if (name == "checker") return TextureKind::checker;
  throw std::invalid_argument("unknown texture kind '" + name + "' (expected noise, gradient or checker)");
}

std::vector<std::pair<double, double>> SyntheticSceneSpec::resolved_ranges() const {
  if (!layer_disparity.empty()) return layer_disparity;
  std::vector<std::pair<double, double>> ranges;
  const double lo = std::log(d_min), span = std::log(d_max) - std::log(d_min);
  for (Index l = 0; l < layers; ++l)
    ranges.emplace_back(std::exp(lo + span * static_cast<double>(l) / static_cast<double>(layers)),
                        std::exp(lo + span * static_cast<double>(l + 1) / static_cast<double>(layers)));
  ranges.front().first = d_min;
  ranges.back().second = d_max;
  return ranges;
}

void SyntheticSceneSpec::validate() const {
  require(height > 0 && width > 0, "SyntheticSceneSpec: image size must be positive");
  require(layers >= 1, "SyntheticSceneSpec: need at least one layer");
  require(d_min > 0 && d_max >= d_min, "SyntheticSceneSpec: need 0 < d_min <= d_max");
  rig.validate();
  require(layer_disparity.empty() || static_cast<Index>(layer_disparity.size()) == layers,
          "SyntheticSceneSpec: layer_disparity must list one range per layer");
  const auto ranges = resolved_ranges();
  for (std::size_t l = 0; l < ranges.size(); ++l) {
    const auto [lo, hi] = ranges[l];
    std::ostringstream msg;
    msg << "SyntheticSceneSpec: layer " << l << " disparity range [" << lo << ", " << hi
        << "] is outside the configured range [" << d_min << ", " << d_max << "]";
    require(lo <= hi, "SyntheticSceneSpec: layer " + std::to_string(l) + " range is reversed");
    require(lo >= d_min && hi <= d_max, msg.str());
    if (l > 0)
      require(lo >= ranges[l - 1].first && hi >= ranges[l - 1].second,
              "SyntheticSceneSpec: nearer layers must have larger disparity ranges");
  }
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t key, std::int64_t i, std::int64_t j) {
  const std::uint64_t h = splitmix(key ^ splitmix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL ^
                                                 static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t key, double u, double v, double cell) {
  const double fu = u / cell, fv = v / cell;
  const double iu = std::floor(fu), iv = std::floor(fv);
  const double tu = fu - iu, tv = fv - iv;
  const auto a = static_cast<std::int64_t>(iu), b = static_cast<std::int64_t>(iv);
  const double v00 = lattice(key, a, b), v10 = lattice(key, a + 1, b);
  const double v01 = lattice(key, a, b + 1), v11 = lattice(key, a + 1, b + 1);
  return (1 - tv) * ((1 - tu) * v00 + tu * v10) + tv * ((1 - tu) * v01 + tu * v11);
}

struct Layer {
  double disparity = 0;
  bool full = false;
  bool ellipse = false;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  // texture
  std::uint64_t key = 0;
  double cell = 4, coarse_cell = 16;
  double a = 0.5, bu = 0, bv = 0;
  double period = 8;
  double gain = 1;
  std::array<double, 3> color{1, 1, 1};

  bool contains(double u, double v) const {
    if (full) return true;
    if (!ellipse) return u >= x0 && u < x1 && v >= y0 && v < y1;
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    const double rx = 0.5 * (x1 - x0), ry = 0.5 * (y1 - y0);
    const double du = (u - cx) / rx, dv = (v - cy) / ry;
    return du * du + dv * dv < 1.0;
  }

  double intensity(TextureKind kind, double u, double v) const {
    switch (kind) {
      case TextureKind::gradient: return a + bu * u + bv * v;
      case TextureKind::checker: {
        const auto cu = static_cast<std::int64_t>(std::floor(u / period));
        const auto cv = static_cast<std::int64_t>(std::floor(v / period));
        return ((cu + cv) & 1) ? 0.3 * gain + 0.1 : 0.8 * gain + 0.1;
      }
      case TextureKind::noise:
      default: {
        const double fine = value_noise(key, u, v, cell);
        const double coarse = value_noise(key ^ 0x5bd1e995ULL, u, v, coarse_cell);
        return 0.15 + gain * 0.8 * (0.6 * fine + 0.4 * coarse);
      }
    }
  }
};

std::array<double, 3> depth_tint(double d, double d_min, double d_max) {
  const double s = d_max > d_min ? std::clamp(std::log(d / d_min) / std::log(d_max / d_min), 0.0, 1.0) : 0.5;
  constexpr std::array<double, 3> far{0.45, 0.62, 1.0};
  constexpr std::array<double, 3> near{1.0, 0.62, 0.32};
  return {far[0] + s * (near[0] - far[0]), far[1] + s * (near[1] - far[1]), far[2] + s * (near[2] - far[2])};
}

}  // namespace

StereoSample generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  const Index h = spec.height, w = spec.width;
  const auto ranges = spec.resolved_ranges();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<Layer> layers(static_cast<std::size_t>(spec.layers));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer& layer = layers[l];
    const auto [lo, hi] = ranges[l];
    double d = uniform(std::log(lo), std::log(hi));
    d = std::clamp(std::exp(d), lo, hi);
    if (spec.integer_disparity) {
      d = std::round(d);
      if (d < lo) d = std::ceil(lo);
      if (d > hi) d = std::floor(hi);
      require(d >= lo && d <= hi && d > 0,
              "generate_synthetic: layer " + std::to_string(l) + " range contains no whole-pixel disparity");
    }
    layer.disparity = d;
    layer.full = l == 0;
    if (!layer.full) {
      layer.ellipse = unit(rng) < 0.5;
      const double bw = uniform(0.15, 0.45) * static_cast<double>(w);
      const double bh = uniform(0.25, 0.7) * static_cast<double>(h);
      const double cx = uniform(0.0, static_cast<double>(w));
      const double cy = uniform(0.2, 1.0) * static_cast<double>(h);
      layer.x0 = cx - bw / 2;
      layer.x1 = cx + bw / 2;
      layer.y0 = cy - bh / 2;
      layer.y1 = cy + bh / 2;
    }
    layer.key = rng();
    layer.cell = uniform(2.5, 6.0);
    layer.coarse_cell = layer.cell * uniform(3.0, 5.0);
    layer.a = uniform(0.35, 0.65);
    layer.bu = uniform(-0.3, 0.3) / static_cast<double>(w);
    layer.bv = uniform(-0.3, 0.3) / static_cast<double>(h);
    layer.period = uniform(4.0, 12.0);
    layer.gain = uniform(0.75, 1.0);
    if (spec.depth_tint)
      layer.color = depth_tint(d, spec.d_min, spec.d_max);
    else
      layer.color = {uniform(0.5, 1.0), uniform(0.5, 1.0), uniform(0.5, 1.0)};
  }
  // Nearer layers carry larger disparity.
  std::vector<double> sorted;
  for (const auto& layer : layers) sorted.push_back(layer.disparity);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].disparity != sorted[l]) {
      layers[l].disparity = sorted[l];
      if (spec.depth_tint) layers[l].color = depth_tint(sorted[l], spec.d_min, spec.d_max);
    }
  }

  auto top_layer = [&](double u, double v) -> Index {
    for (Index l = spec.layers - 1; l >= 0; --l)
      if (layers[static_cast<std::size_t>(l)].contains(u, v)) return l;
    return 0;
  };
  // Layer origins keep textures attached to their plane.
  auto shade = [&](const Layer& layer, double u, double v, Tensor<float>& img, Index y, Index x) {
    const double j = layer.intensity(spec.texture, u - layer.x0, v);
    for (Index c = 0; c < 3; ++c)
      img(0, c, y, x) = static_cast<float>(std::clamp(j * layer.color[static_cast<std::size_t>(c)], 0.0, 1.0));
  };

  StereoSample out;
  out.id = "synthetic_" + std::to_string(spec.seed);
  out.rig = spec.rig;
  out.left = Tensor<float>(Shape{1, 3, h, w});
  out.right = Tensor<float>(Shape{1, 3, h, w});
  Tensor<float> disparity(Shape{1, 1, h, w});
  Tensor<float> occluded(Shape{1, 1, h, w});
  for (Index y = 0; y < h; ++y) {
    const double v = static_cast<double>(y);
    for (Index x = 0; x < w; ++x) {
      const double u = static_cast<double>(x);
      const Index l = top_layer(u, v);
      const Layer& layer = layers[static_cast<std::size_t>(l)];
      shade(layer, u, v, out.left, y, x);
      disparity(0, 0, y, x) = static_cast<float>(layer.disparity);
      bool hidden = false;
      for (Index m = l + 1; m < spec.layers && !hidden; ++m) {
        const Layer& nearer = layers[static_cast<std::size_t>(m)];
        hidden = nearer.disparity > layer.disparity && nearer.contains(u - layer.disparity + nearer.disparity, v);
      }
      occluded(0, 0, y, x) = hidden ? 1.0f : 0.0f;

      // Right view: layer m is seen at x_r when it covers x_r + d_m.
      Index r = 0;
      for (Index m = spec.layers - 1; m >= 0; --m) {
        const Layer& cand = layers[static_cast<std::size_t>(m)];
        if (cand.contains(u + cand.disparity, v)) {
          r = m;
          break;
        }
      }
      const Layer& seen = layers[static_cast<std::size_t>(r)];
      shade(seen, u + seen.disparity, v, out.right, y, x);
    }
  }
  out.disparity = std::move(disparity);
  out.occluded = std::move(occluded);
  return out;
}

SyntheticSceneSpec synthetic_sample_spec(const SyntheticDatasetSpec& spec, const std::string& split, Index index) {
  require(split == "train" || split == "test", "synthetic split must be 'train' or 'test', got '" + split + "'");
  SyntheticSceneSpec scene = spec.scene;
  const std::uint64_t salt = split == "train" ? 0x747261696eULL : 0x74657374ULL;
  scene.seed = splitmix(splitmix(spec.seed ^ salt) + static_cast<std::uint64_t>(index));
  return scene;
}

std::vector<StereoSample> generate_synthetic_split(const SyntheticDatasetSpec& spec, const std::string& split) {
  const Index count = split == "train" ? spec.train_count : spec.test_count;
  require(count >= 0, "generate_synthetic_split: negative sample count");
  std::vector<StereoSample> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    StereoSample s = generate_synthetic(synthetic_sample_spec(spec, split, i));
    std::ostringstream id;
    id << split << "_" << std::setw(6) << std::setfill('0') << i;
    s.id = id.str();
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_synthetic_dataset(const fs::path& root, const SyntheticDatasetSpec& spec) {
  spec.scene.validate();
  for (const char* dir : {"left", "right", "disp", "occ"}) fs::create_directories(root / dir);
  for (const std::string split : {"train", "test"}) {
    std::ofstream list(root / (split + ".txt"));
    if (!list) throw DataLoadError("cannot write split file in '" + root.string() + "'");
    const Index count = split == "train" ? spec.train_count : spec.test_count;
    for (Index i = 0; i < count; ++i) {
      StereoSample s = generate_synthetic(synthetic_sample_spec(spec, split, i));
      std::ostringstream name;
      name << split << "_" << std::setw(6) << std::setfill('0') << i << ".png";
      write_png_rgb(root / "left" / name.str(), s.left);
      write_png_rgb(root / "right" / name.str(), s.right);
      Tensor<float> disp = *s.disparity;
      disp.vec() *= 256.0f;
      write_png_gray16(root / "disp" / name.str(), disp);
      Tensor<float> occ = *s.occluded;
      occ.vec() *= 255.0f;
      write_png_gray8(root / "occ" / name.str(), occ);
      list << "left/" << name.str() << " right/" << name.str() << " disp/" << name.str() << "\n";
    }
  }
  nlohmann::json rig{{"baseline", spec.scene.rig.baseline},
                     {"focal_x", spec.scene.rig.focal_x},
                     {"ground_truth", "disparity"},
                     {"d_min", spec.scene.d_min},
                     {"d_max", spec.scene.d_max}};
  std::ofstream(root / "rig.json") << rig.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

struct RootInfo {
  CameraRig rig{0.54, 0};
  double focal_ratio = 0.58;
  GroundTruthKind gt_kind = GroundTruthKind::disparity;
};

RootInfo read_root_info(const fs::path& root) {
  RootInfo info;
  const fs::path path = root / "rig.json";
  if (!fs::exists(path)) return info;
  nlohmann::json j;
  try {
    std::ifstream in(path);
    in >> j;
  } catch (const std::exception& e) {
    throw DataLoadError("cannot parse '" + path.string() + "': " + e.what());
  }
  info.rig.baseline = j.value("baseline", info.rig.baseline);
  if (j.contains("focal_x")) {
    info.rig.focal_x = j.at("focal_x").get<double>();
    info.focal_ratio = 0;
  }
  const std::string gt = j.value("ground_truth", std::string("disparity"));
  if (gt == "disparity")
    info.gt_kind = GroundTruthKind::disparity;
  else if (gt == "depth")
    info.gt_kind = GroundTruthKind::depth;
  else
    throw DataLoadError("'" + path.string() + "': ground_truth must be 'disparity' or 'depth'");
  return info;
}

bool is_kitti_line(const std::vector<std::string>& tokens) {
  if (tokens.size() != 3 || (tokens[2] != "l" && tokens[2] != "r")) return false;
  return !tokens[1].empty() && std::all_of(tokens[1].begin(), tokens[1].end(), [](char c) {
    return c >= '0' && c <= '9';
  });
}

std::string stem_id(const fs::path& p) { return p.stem().string(); }

}  // namespace

DatasetManifest load_manifest(const fs::path& root, const std::string& split) {
  if (root.empty() || !fs::is_directory(root))
    throw DataLoadError("dataset root '" + root.string() + "' does not exist or is not a directory");
  DatasetManifest manifest;
  manifest.root = root;
  manifest.split = split;
  const RootInfo info = read_root_info(root);
  std::vector<std::string> missing;
  auto check = [&](const fs::path& p) {
    if (!fs::exists(p)) missing.push_back(p.string());
  };

  const fs::path list = root / (split + ".txt");
  if (fs::exists(list)) {
    std::ifstream in(list);
    std::string line;
    Index line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (tokens.empty() || tokens[0][0] == '#') continue;
      SampleRecord rec;
      rec.rig = info.rig;
      rec.focal_ratio = info.focal_ratio;
      if (is_kitti_line(tokens)) {
        const fs::path drive = root / tokens[0];
        std::ostringstream frame;
        frame << std::setw(10) << std::setfill('0') << std::stoll(tokens[1]) << ".png";
        rec.left = drive / "image_02" / "data" / frame.str();
        rec.right = drive / "image_03" / "data" / frame.str();
        rec.mirrored = tokens[2] == "r";
        rec.id = tokens[0] + "/" + tokens[1] + (rec.mirrored ? "r" : "l");
        rec.rig.focal_x = 0;
        rec.focal_ratio = 0.58;
        const fs::path gt = drive / "proj_depth" / "groundtruth" / "image_02" / frame.str();
        if (fs::exists(gt)) {
          rec.ground_truth = gt;
          rec.gt_kind = GroundTruthKind::depth;
        }
      } else if (tokens.size() == 2 || tokens.size() == 3) {
        rec.left = root / tokens[0];
        rec.right = root / tokens[1];
        rec.id = stem_id(tokens[0]);
        if (tokens.size() == 3) {
          rec.ground_truth = root / tokens[2];
          rec.gt_kind = info.gt_kind;
          check(rec.ground_truth);
        }
      } else {
        throw DataLoadError("'" + list.string() + "' line " + std::to_string(line_no) +
                            ": expected 'left right [gt]' or 'date/drive frame l|r'");
      }
      check(rec.left);
      check(rec.right);
      manifest.records.push_back(std::move(rec));
    }
  } else if (fs::is_directory(root / "left") && fs::is_directory(root / "right")) {
    std::vector<fs::path> lefts;
    for (const auto& e : fs::directory_iterator(root / "left"))
      if (e.path().extension() == ".png") lefts.push_back(e.path());
    std::sort(lefts.begin(), lefts.end());
    for (const auto& l : lefts) {
      SampleRecord rec;
      rec.rig = info.rig;
      rec.focal_ratio = info.focal_ratio;
      rec.id = stem_id(l);
      rec.left = l;
      rec.right = root / "right" / l.filename();
      check(rec.right);
      const fs::path gt = root / "disp" / l.filename();
      if (fs::exists(gt)) {
        rec.ground_truth = gt;
        rec.gt_kind = info.gt_kind;
      }
      manifest.records.push_back(std::move(rec));
    }
  } else {
    throw DataLoadError("dataset root '" + root.string() + "' has no split file '" + split +
                        ".txt' and no left/ and right/ folders");
  }

  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "dataset root '" << root.string() << "' split '" << split << "': " << missing.size()
        << " referenced file(s) missing:";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg << "\n  " << missing[i];
    if (shown < missing.size()) msg << "\n  ... and " << (missing.size() - shown) << " more";
    throw DataLoadError(msg.str());
  }
  if (manifest.records.empty())
    throw DataLoadError("dataset root '" + root.string() + "' split '" + split + "' contains no samples");
  return manifest;
}

StereoSample load_sample(const SampleRecord& record) {
  StereoSample s;
  s.id = record.id;
  try {
    s.left = read_png_rgb(record.left);
    s.right = read_png_rgb(record.right);
  } catch (const ImageIoError& e) {
    throw DataLoadError(e.what());
  }
  if (s.left.shape() != s.right.shape())
    throw DataLoadError("sample '" + record.id + "': left and right images differ in size");
  s.rig = record.rig;
  if (record.focal_ratio > 0) s.rig.focal_x = record.focal_ratio * static_cast<double>(s.left.w());
  if (record.gt_kind != GroundTruthKind::none) {
    Tensor<float> raw;
    try {
      raw = read_png_gray_raw(record.ground_truth);
    } catch (const ImageIoError& e) {
      throw DataLoadError(e.what());
    }
    if (raw.h() != s.left.h() || raw.w() != s.left.w())
      throw DataLoadError("sample '" + record.id + "': ground truth size differs from the images");
    raw.vec() /= 256.0f;
    if (record.gt_kind == GroundTruthKind::disparity)
      s.disparity = std::move(raw);
    else
      s.depth = std::move(raw);
  }
  if (record.mirrored) s = flip_pair(s);
  return s;
}

}  // namespace sdfa
