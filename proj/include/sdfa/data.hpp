#pragma once

#include "sdfa/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sdfa {

/// A rectified stereo pair. Images are 1x3xHxW in [0, 1]; ground-truth maps
/// are 1x1xHxW in the left view.
struct StereoSample {
  std::string id;
  Tensor<float> left;
  Tensor<float> right;
  CameraRig rig;
  std::optional<Tensor<float>> disparity;  // pixels, 0 where unknown
  std::optional<Tensor<float>> depth;      // meters, 0 where unknown
  std::optional<Tensor<float>> occluded;   // 1 where hidden in the right view by a nearer surface
};

/// Metric ground-truth depth (0 where unknown), from `depth` or converted
/// from `disparity`. Throws when the sample has neither.
Tensor<float> ground_truth_depth(const StereoSample& sample);

/// Mirrors both views and swaps them, keeping the left/right convention.
StereoSample flip_pair(const StereoSample& sample);

class DataLoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Synthetic scenes

enum class TextureKind { noise, gradient, checker };

std::string to_string(TextureKind kind);
TextureKind texture_kind_from_string(const std::string& name);

struct SyntheticSceneSpec {
  Index height = 96;
  Index width = 320;
  /// Number of fronto-parallel layers including the background.
  Index layers = 3;
  /// Per-layer disparity range, background first. Empty splits [d_min, d_max]
  /// into equal log-spaced bands.
  std::vector<std::pair<double, double>> layer_disparity;
  double d_min = 2.0;
  double d_max = 30.0;
  TextureKind texture = TextureKind::noise;
  /// Rounds layer disparities to whole pixels.
  bool integer_disparity = false;
  /// Tints each layer by its disparity (bluish far, warm near) so depth is
  /// observable from a single view.
  bool depth_tint = true;
  CameraRig rig{0.54, 0.58 * 320};
  std::uint64_t seed = 0;

  std::vector<std::pair<double, double>> resolved_ranges() const;
  void validate() const;
};

/// Renders layered textured planes back to front. The right view samples
/// layer l at x + d_l, so nearer layers hide farther ones exactly. Emits
/// left-view disparity and the occlusion map.
StereoSample generate_synthetic(const SyntheticSceneSpec& spec);

struct SyntheticDatasetSpec {
  SyntheticSceneSpec scene;
  Index train_count = 200;
  Index test_count = 40;
  std::uint64_t seed = 0;
};

/// Scene spec of the i-th sample of a split ("train" or "test").
SyntheticSceneSpec synthetic_sample_spec(const SyntheticDatasetSpec& spec, const std::string& split, Index index);

std::vector<StereoSample> generate_synthetic_split(const SyntheticDatasetSpec& spec, const std::string& split);

/// Writes left/, right/, disp/ (16-bit, value = 256 * disparity), occ/,
/// train.txt, test.txt and rig.json under root.
void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticDatasetSpec& spec);

// ---------------------------------------------------------------------------
// Manifests

enum class GroundTruthKind { none, disparity, depth };

struct SampleRecord {
  std::string id;
  std::filesystem::path left;
  std::filesystem::path right;
  std::filesystem::path ground_truth;
  GroundTruthKind gt_kind = GroundTruthKind::none;
  CameraRig rig;
  /// When positive, focal_x is set to focal_ratio * image width at load time.
  double focal_ratio = 0;
  /// Load the pair mirrored and swapped (KITTI "r" entries).
  bool mirrored = false;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<SampleRecord> records;
};

/// Reads <root>/<split>.txt. Lines are either "left right [gt]" relative to
/// root, or KITTI split entries "date/drive frame l|r" resolved against
/// image_02/data and image_03/data. Without a split file, a flat layout with
/// left/ and right/ folders is enumerated.
DatasetManifest load_manifest(const std::filesystem::path& root, const std::string& split);

StereoSample load_sample(const SampleRecord& record);

/// Random access to samples in a fixed order.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual Index size() const = 0;
  virtual StereoSample get(Index i) const = 0;
};

class InMemorySource final : public SampleSource {
 public:
  explicit InMemorySource(std::vector<StereoSample> samples) : samples_(std::move(samples)) {}
  Index size() const override { return static_cast<Index>(samples_.size()); }
  StereoSample get(Index i) const override { return samples_.at(static_cast<std::size_t>(i)); }

 private:
  std::vector<StereoSample> samples_;
};

class ManifestSource final : public SampleSource {
 public:
  explicit ManifestSource(DatasetManifest manifest) : manifest_(std::move(manifest)) {}
  Index size() const override { return static_cast<Index>(manifest_.records.size()); }
  StereoSample get(Index i) const override { return load_sample(manifest_.records.at(static_cast<std::size_t>(i))); }
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
};

}  // namespace sdfa
