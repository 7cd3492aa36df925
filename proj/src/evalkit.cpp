// SPDX-License-Identifier: Apache-2.0
#include "ip3d/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ip3d/image_io.hpp"
#include "ip3d/rng.hpp"

namespace ip3d {
namespace {

constexpr int kInputSize = 64;
constexpr int kLayerChannels[4] = {3, 8, 16, 32};

Image to_rgb(const Image& src) {
  if (src.channels() == 3) return src;
  Image out(src.height(), src.width(), 3);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = src.at(y, x, std::min(c, src.channels() - 1));
      }
    }
  }
  return out;
}

void check_set(const TurntableSet& set, const char* who) {
  if (set.frames.size() < 2) {
    throw std::invalid_argument(std::string(who) + ": need at least 2 frames");
  }
  if (!set.poses.empty() && set.poses.size() != set.frames.size()) {
    throw std::invalid_argument(std::string(who) + ": pose/frame count mismatch");
  }
  for (const auto& f : set.frames) {
    f.require_same_shape(set.frames.front(), who);
  }
}

}  // namespace

RandomProjectionExtractor::RandomProjectionExtractor(uint64_t seed) {
  RngStream rng(seed, "evalkit-randproj");
  weights_.resize(3);
  for (int l = 0; l < 3; ++l) {
    const int in_ch = kLayerChannels[l];
    const int out_ch = kLayerChannels[l + 1];
    const double scale = std::sqrt(1.0 / (in_ch * 9));
    weights_[l].resize(static_cast<size_t>(out_ch) * in_ch * 9);
    for (auto& w : weights_[l]) w = rng.normal() * scale;
  }
}

Image RandomProjectionExtractor::apply_layer(const Image& src, int layer) const {
  const int in_ch = kLayerChannels[layer];
  const int out_ch = kLayerChannels[layer + 1];
  const int oh = src.height() / 2;
  const int ow = src.width() / 2;
  Image out(oh, ow, out_ch);
  const auto& w = weights_[layer];
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int oc = 0; oc < out_ch; ++oc) {
        double acc = 0.0;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = std::clamp(2 * oy + ky - 1, 0, src.height() - 1);
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = std::clamp(2 * ox + kx - 1, 0, src.width() - 1);
            const size_t base = ((static_cast<size_t>(oc) * in_ch) * 9);
            for (int ic = 0; ic < in_ch; ++ic) {
              acc += src.at(sy, sx, ic) * w[base + ic * 9 + ky * 3 + kx];
            }
          }
        }
        out.at(oy, ox, oc) = std::tanh(acc);
      }
    }
  }
  return out;
}

std::vector<Image> RandomProjectionExtractor::layers(const Image& image) const {
  Image cur = resize_bilinear(to_rgb(image), kInputSize, kInputSize);
  std::vector<Image> maps;
  maps.reserve(3);
  for (int l = 0; l < 3; ++l) {
    cur = apply_layer(cur, l);
    maps.push_back(cur);
  }
  return maps;
}

std::vector<double> RandomProjectionExtractor::embed(const Image& image) const {
  std::vector<double> out;
  for (const Image& map : layers(image)) {
    const size_t pixels = static_cast<size_t>(map.height()) * map.width();
    for (int c = 0; c < map.channels(); ++c) {
      double mean = 0.0;
      for (int y = 0; y < map.height(); ++y) {
        for (int x = 0; x < map.width(); ++x) mean += map.at(y, x, c);
      }
      out.push_back(mean / pixels);
    }
  }
  return out;
}

std::vector<CameraPose> turntable_poses(const TurntableOptions& options) {
  if (options.frames < 2) {
    throw std::invalid_argument("turntable: need at least 2 frames");
  }
  const double spacing = 360.0 / options.frames;
  std::vector<CameraPose> poses(options.frames);
  for (int k = 0; k < options.frames; ++k) {
    poses[k].azimuth_deg = k * spacing;
    poses[k].elevation_deg = options.elevation_deg;
    poses[k].radius = options.radius;
    poses[k].fov_y_deg = options.fov_y_deg;
  }
  return poses;
}

TurntableSet render_turntable(
    const std::function<Image(const CameraPose&)>& render_fn,
    const TurntableOptions& options) {
  TurntableSet set;
  set.poses = turntable_poses(options);
  set.frames.reserve(set.poses.size());
  for (const auto& pose : set.poses) set.frames.push_back(render_fn(pose));
  check_set(set, "render_turntable");
  return set;
}

void write_turntable(const TurntableSet& set, const std::string& out_dir) {
  check_set(set, "write_turntable");
  std::filesystem::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["frames"] = set.frames.size();
  manifest["poses"] = nlohmann::json::array();
  for (size_t k = 0; k < set.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", k);
    io::write_png(out_dir + "/" + name, set.frames[k]);
    nlohmann::json p;
    p["file"] = name;
    if (k < set.poses.size()) {
      p["azimuth_deg"] = set.poses[k].azimuth_deg;
      p["elevation_deg"] = set.poses[k].elevation_deg;
      p["radius"] = set.poses[k].radius;
      p["fov_y_deg"] = set.poses[k].fov_y_deg;
    }
    manifest["poses"].push_back(p);
  }
  std::ofstream out(out_dir + "/poses.json");
  out << manifest.dump(2) << "\n";
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::runtime_error("clip_similarity: embedding size mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) {
    throw std::runtime_error("clip_similarity: zero-norm embedding");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double layer_distance(const std::vector<Image>& a, const std::vector<Image>& b) {
  if (a.size() != b.size()) {
    throw std::runtime_error("a_lpips: extractor layer count mismatch");
  }
  double total = 0.0;
  for (size_t l = 0; l < a.size(); ++l) {
    if (!a[l].same_shape(b[l])) {
      throw std::runtime_error("a_lpips: extractor layer shape mismatch");
    }
    const Image& fa = a[l];
    const Image& fb = b[l];
    double acc = 0.0;
    for (int y = 0; y < fa.height(); ++y) {
      for (int x = 0; x < fa.width(); ++x) {
        double na = 0.0, nb = 0.0;
        for (int c = 0; c < fa.channels(); ++c) {
          na += fa.at(y, x, c) * fa.at(y, x, c);
          nb += fb.at(y, x, c) * fb.at(y, x, c);
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        for (int c = 0; c < fa.channels(); ++c) {
          const double d = fa.at(y, x, c) / na - fb.at(y, x, c) / nb;
          acc += d * d;
        }
      }
    }
    total += acc / (static_cast<double>(fa.height()) * fa.width());
  }
  return total;
}

}  // namespace

double clip_similarity(const TurntableSet& set, const Image& reference,
                       const FeatureExtractor& embedder) {
  check_set(set, "clip_similarity");
  const std::vector<double> ref = embedder.embed(reference);
  double mean = 0.0;
  for (const Image& frame : set.frames) {
    mean += cosine(embedder.embed(frame), ref);
  }
  return mean / set.frames.size();
}

double a_lpips(const TurntableSet& set, const FeatureExtractor& extractor) {
  check_set(set, "a_lpips");
  const size_t k = set.frames.size();
  std::vector<std::vector<Image>> feats(k);
  for (size_t i = 0; i < k; ++i) feats[i] = extractor.layers(set.frames[i]);

  std::set<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < k; ++i) {
    const size_t j = (i + 1) % k;
    pairs.insert({std::min(i, j), std::max(i, j)});
  }
  double mean = 0.0;
  for (const auto& [i, j] : pairs) mean += layer_distance(feats[i], feats[j]);
  return mean / pairs.size();
}

ExtractorRegistry& ExtractorRegistry::instance() {
  static ExtractorRegistry reg = [] {
    ExtractorRegistry r;
    r.add("randproj",
          [] { return std::make_shared<RandomProjectionExtractor>(0); });
    return r;
  }();
  return reg;
}

void ExtractorRegistry::add(const std::string& name, Factory factory) {
  factories_[name] = std::move(factory);
}

std::shared_ptr<FeatureExtractor> ExtractorRegistry::create(
    const std::string& name) const {
  auto it = factories_.find(name);
  return it == factories_.end() ? nullptr : it->second();
}

bool ExtractorRegistry::contains(const std::string& name) const {
  return factories_.count(name) > 0;
}

std::vector<std::string> ExtractorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

nlohmann::json evaluate_turntable(const TurntableSet& set,
                                  const Image& reference,
                                  const std::vector<std::string>& extractors,
                                  const std::string& checkpoint_id) {
  check_set(set, "evaluate_turntable");
  nlohmann::json out;
  out["checkpoint_id"] = checkpoint_id;
  out["K"] = set.frames.size();
  out["elevation_deg"] =
      set.poses.empty() ? 0.0 : set.poses.front().elevation_deg;
  out["metrics"] = nlohmann::json::array();
  out["skipped"] = nlohmann::json::array();
  for (const std::string& name : extractors) {
    auto extractor = ExtractorRegistry::instance().create(name);
    if (!extractor) {
      out["skipped"].push_back(name);
      continue;
    }
    nlohmann::json rec;
    rec["extractor"] = name;
    rec["clip_similarity"] = clip_similarity(set, reference, *extractor);
    rec["a_lpips"] = a_lpips(set, *extractor);
    out["metrics"].push_back(rec);
  }
  return out;
}

}  // namespace ip3d
