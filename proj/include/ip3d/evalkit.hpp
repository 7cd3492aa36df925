// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "ip3d/camera.hpp"
#include "ip3d/image.hpp"

namespace ip3d {

/// Deterministic feature backbone used by the turntable metrics.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  /// Fixed-dimensional embedding vector.
  virtual std::vector<double> embed(const Image& image) const = 0;
  /// Spatial feature maps from shallow to deep.
  virtual std::vector<Image> layers(const Image& image) const = 0;
};

/// Fixed-seed random-projection convolution stack: resize to 64x64 then
/// three stride-2 3x3 convolutions (3 -> 8 -> 16 -> 32) with tanh. No
/// pretrained weights; bit-reproducible across runs.
class RandomProjectionExtractor : public FeatureExtractor {
 public:
  explicit RandomProjectionExtractor(uint64_t seed = 0);
  std::string name() const override { return "randproj"; }
  std::vector<double> embed(const Image& image) const override;
  std::vector<Image> layers(const Image& image) const override;

 private:
  Image apply_layer(const Image& src, int layer) const;
  // weights_[l] has out_ch * in_ch * 9 entries.
  std::vector<std::vector<double>> weights_;
};

struct TurntableSet {
  std::vector<Image> frames;
  std::vector<CameraPose> poses;
};

struct TurntableOptions {
  int frames = 8;
  double elevation_deg = 15.0;
  double radius = 2.2;
  double fov_y_deg = 50.0;
};

/// Poses at evenly spaced azimuths (360/K apart), fixed elevation.
std::vector<CameraPose> turntable_poses(const TurntableOptions& options);

/// Renders one frame per turntable pose through the supplied callback.
TurntableSet render_turntable(
    const std::function<Image(const CameraPose&)>& render_fn,
    const TurntableOptions& options);

/// Writes frame_0000.png ... plus poses.json into out_dir.
void write_turntable(const TurntableSet& set, const std::string& out_dir);

/// Mean cosine similarity between each frame embedding and the reference
/// embedding. Zero-norm embeddings are an error.
double clip_similarity(const TurntableSet& set, const Image& reference,
                       const FeatureExtractor& embedder);

/// Mean layer-wise normalized feature distance over unique cyclically
/// adjacent frame pairs.
double a_lpips(const TurntableSet& set, const FeatureExtractor& extractor);

/// Named extractor factories; "randproj" is bundled, pretrained adapters
/// may be registered by embedders/tests.
class ExtractorRegistry {
 public:
  using Factory = std::function<std::shared_ptr<FeatureExtractor>()>;
  static ExtractorRegistry& instance();
  void add(const std::string& name, Factory factory);
  std::shared_ptr<FeatureExtractor> create(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Factory> factories_;
};

/// Both metrics for every requested extractor; unknown extractors are
/// listed under "skipped" instead of failing.
nlohmann::json evaluate_turntable(const TurntableSet& set,
                                  const Image& reference,
                                  const std::vector<std::string>& extractors,
                                  const std::string& checkpoint_id);

}  // namespace ip3d
