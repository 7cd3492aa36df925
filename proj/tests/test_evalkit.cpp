// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip3d/evalkit.hpp"
#include "ip3d/image_io.hpp"
#include "ip3d/rng.hpp"

using namespace ip3d;

namespace {

Image noise_image(int h, int w, uint64_t seed) {
  RngStream rng(seed, "eval-img");
  Image img(h, w, 3);
  for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0.0, 1.0);
  return img;
}

TurntableSet repeated_set(const Image& frame, int k) {
  TurntableSet set;
  TurntableOptions opts;
  opts.frames = k;
  set.poses = turntable_poses(opts);
  set.frames.assign(k, frame);
  return set;
}

// Identity feature stack: one layer, the image itself.
class IdentityExtractor : public FeatureExtractor {
 public:
  std::string name() const override { return "identity"; }
  std::vector<double> embed(const Image& image) const override {
    return std::vector<double>(image.data(), image.data() + image.size());
  }
  std::vector<Image> layers(const Image& image) const override {
    return {image};
  }
};

class ZeroEmbedder : public IdentityExtractor {
 public:
  std::vector<double> embed(const Image&) const override {
    return std::vector<double>(4, 0.0);
  }
};

}  // namespace

TEST_CASE("turntable poses sweep evenly spaced azimuths") {
  TurntableOptions opts;
  opts.frames = 8;
  opts.elevation_deg = 15.0;
  opts.radius = 2.0;
  const std::vector<CameraPose> poses = turntable_poses(opts);
  REQUIRE(poses.size() == 8);
  for (int k = 0; k < 8; ++k) {
    CHECK(poses[k].azimuth_deg == doctest::Approx(45.0 * k).epsilon(1e-12));
    CHECK(poses[k].elevation_deg == 15.0);
    CHECK(poses[k].radius == 2.0);
    CHECK(poses[k].fov_y_deg == opts.fov_y_deg);
  }
  opts.frames = 2;
  const std::vector<CameraPose> two = turntable_poses(opts);
  CHECK(two[1].azimuth_deg == doctest::Approx(180.0).epsilon(1e-12));

  opts.frames = 1;
  CHECK_THROWS_AS(turntable_poses(opts), std::invalid_argument);
}

TEST_CASE("identical frames score perfect similarity and zero drift") {
  const Image frame = noise_image(32, 32, 1);
  const TurntableSet set = repeated_set(frame, 4);
  const RandomProjectionExtractor extractor(0);
  CHECK(clip_similarity(set, frame, extractor) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a_lpips(set, extractor) == 0.0);
}

TEST_CASE("orthogonal embeddings score zero similarity") {
  // one-hot embeddings decided by the first pixel: reference and frames land
  // on different axes, so every cosine term vanishes
  class OneHot : public IdentityExtractor {
   public:
    std::vector<double> embed(const Image& image) const override {
      return image[0] > 0.5 ? std::vector<double>{1.0, 0.0}
                            : std::vector<double>{0.0, 1.0};
    }
  };
  Image reference(8, 8, 3);
  reference.fill(1.0);
  Image dark(8, 8, 3);
  dark.fill(0.0);
  const TurntableSet set = repeated_set(dark, 3);
  CHECK(clip_similarity(set, reference, OneHot()) == 0.0);
}

TEST_CASE("zero-norm embeddings are rejected") {
  const Image frame = noise_image(8, 8, 2);
  const TurntableSet set = repeated_set(frame, 2);
  try {
    clip_similarity(set, frame, ZeroEmbedder());
    FAIL("expected zero-norm error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("zero-norm") != std::string::npos);
  }
}

TEST_CASE("a_lpips is invariant to rotating the frame cycle") {
  TurntableSet set = repeated_set(noise_image(16, 16, 3), 5);
  for (int k = 0; k < 5; ++k) set.frames[k] = noise_image(16, 16, 10 + k);
  const RandomProjectionExtractor extractor(0);
  const double base = a_lpips(set, extractor);
  CHECK(base > 0.0);

  TurntableSet rotated = set;
  std::rotate(rotated.frames.begin(), rotated.frames.begin() + 2,
              rotated.frames.end());
  std::rotate(rotated.poses.begin(), rotated.poses.begin() + 2,
              rotated.poses.end());
  CHECK(a_lpips(rotated, extractor) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("a_lpips sees signed structure through unit normalization") {
  // single-channel identity layers: each pixel normalizes to its sign, so
  // opposite constants differ by 2 per channel -> squared distance 4
  Image pos(4, 4, 1);
  pos.fill(0.7);
  Image neg(4, 4, 1);
  neg.fill(-0.2);
  TurntableSet set = repeated_set(pos, 2);
  set.frames[1] = neg;
  CHECK(a_lpips(set, IdentityExtractor()) == doctest::Approx(4.0).epsilon(1e-6));

  // scaling a frame leaves the normalized features unchanged
  Image scaled = pos;
  scaled *= 3.0;
  TurntableSet same = repeated_set(pos, 2);
  same.frames[1] = scaled;
  CHECK(a_lpips(same, IdentityExtractor()) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
}

TEST_CASE("mismatched frame or layer shapes are an error") {
  TurntableSet uneven = repeated_set(noise_image(8, 8, 4), 2);
  uneven.frames[1] = noise_image(9, 8, 5);
  CHECK_THROWS_AS(a_lpips(uneven, IdentityExtractor()), std::invalid_argument);

  // an extractor whose layer shape flips based on content
  class Moody : public IdentityExtractor {
   public:
    std::vector<Image> layers(const Image& image) const override {
      if (image[0] > 0.5) return {Image(4, 4, 1)};
      return {image};
    }
  };
  TurntableSet set = repeated_set(noise_image(8, 8, 4), 2);
  set.frames[0].fill(0.1);
  set.frames[1].fill(0.9);
  try {
    a_lpips(set, Moody());
    FAIL("expected layer shape mismatch error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("layer shape mismatch") != std::string::npos);
  }
}

TEST_CASE("the random projection stack has fixed shapes and seeds") {
  const RandomProjectionExtractor a(0), b(0), c(7);
  const Image img = noise_image(48, 37, 6);  // resized internally to 64x64

  const std::vector<Image> maps = a.layers(img);
  REQUIRE(maps.size() == 3);
  CHECK(maps[0].height() == 32);
  CHECK(maps[0].channels() == 8);
  CHECK(maps[1].height() == 16);
  CHECK(maps[1].channels() == 16);
  CHECK(maps[2].height() == 8);
  CHECK(maps[2].channels() == 32);
  for (const Image& m : maps) {
    for (size_t i = 0; i < m.size(); ++i) {
      CHECK(m[i] >= -1.0);  // tanh range
      CHECK(m[i] <= 1.0);
    }
  }

  const std::vector<double> ea = a.embed(img);
  CHECK(ea.size() == 56);  // concatenated per-channel means
  CHECK(ea == b.embed(img));
  CHECK(ea != c.embed(img));
}

TEST_CASE("render_turntable drives the callback with each pose in order") {
  TurntableOptions opts;
  opts.frames = 4;
  std::vector<double> seen;
  const TurntableSet set = render_turntable(
      [&](const CameraPose& pose) {
        seen.push_back(pose.azimuth_deg);
        Image img(4, 4, 3);
        img.fill(pose.azimuth_deg / 360.0);
        return img;
      },
      opts);
  REQUIRE(set.frames.size() == 4);
  CHECK(seen == std::vector<double>{0.0, 90.0, 180.0, 270.0});
  CHECK(set.frames[2].at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("write_turntable saves frames plus a pose manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "ip3d_turntable";
  std::filesystem::remove_all(dir);

  TurntableSet set = repeated_set(noise_image(8, 8, 7), 3);
  write_turntable(set, dir.string());
  for (int k = 0; k < 3; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", k);
    CHECK(std::filesystem::exists(dir / name));
  }
  std::ifstream is(dir / "poses.json");
  REQUIRE(is.good());
  nlohmann::json manifest;
  is >> manifest;
  CHECK(manifest["frames"] == 3);
  REQUIRE(manifest["poses"].size() == 3);
  CHECK(manifest["poses"][1]["azimuth_deg"].get<double>() ==
        doctest::Approx(120.0).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}

TEST_CASE("the extractor registry resolves randproj and flags strangers") {
  auto& reg = ExtractorRegistry::instance();
  CHECK(reg.contains("randproj"));
  CHECK(!reg.contains("vgg"));
  auto extractor = reg.create("randproj");
  REQUIRE(extractor != nullptr);
  CHECK(extractor->name() == "randproj");
  CHECK(reg.create("vgg") == nullptr);  // unknown names resolve to null
}

TEST_CASE("evaluate_turntable reports metrics and skipped extractors") {
  const Image frame = noise_image(16, 16, 8);
  const TurntableSet set = repeated_set(frame, 4);
  const nlohmann::json report =
      evaluate_turntable(set, frame, {"randproj", "not-an-extractor"}, "ckpt_0002");

  CHECK(report["checkpoint_id"] == "ckpt_0002");
  CHECK(report["K"] == 4);
  CHECK(report["elevation_deg"].get<double>() ==
        doctest::Approx(15.0).epsilon(1e-12));
  REQUIRE(report["metrics"].size() == 1);
  CHECK(report["metrics"][0]["extractor"] == "randproj");
  CHECK(report["metrics"][0]["clip_similarity"].get<double>() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report["metrics"][0]["a_lpips"].get<double>() == 0.0);
  REQUIRE(report["skipped"].size() == 1);
  CHECK(report["skipped"][0] == "not-an-extractor");
}
