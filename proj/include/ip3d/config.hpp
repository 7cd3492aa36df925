// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "json.hpp"

#include "ip3d/losses.hpp"
#include "ip3d/trainer.hpp"

namespace ip3d {

/// Everything a run needs: input files, the training plan, guidance backend
/// names + options, and the output directory.
struct RunConfig {
  std::string image_path;
  std::string mask_path;          // optional; RGBA alpha used when empty
  std::string pseudo_depth_path;  // optional; depth loss disabled when absent
  /// kind -> file, kinds in {depth, scribble, pose, canny, text}.
  std::map<std::string, std::string> condition_maps;

  TrainPlan plan;

  std::string backend_2d = "oracle-view";  // empty or "none" disables
  std::string backend_3d = "oracle-view";
  std::map<std::string, double> backend_2d_options;
  std::map<std::string, double> backend_3d_options;

  std::string output_dir = "out";
  CameraPose reference_pose;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Minimal TOML reader covering the config surface: [dotted.sections],
/// key = string | number | bool | flat array, # comments.
nlohmann::json parse_toml(const std::string& text);

/// Loads TOML or JSON depending on the file extension.
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);

/// Reads the reference image (+ mask, + optional pseudo-depth), resizes to
/// the plan's render resolution with mask-aware premultiplication, and
/// binds the reference pose. Throws "mask required" when the image has no
/// alpha and no mask file is given.
ReferenceBundle load_reference(const RunConfig& config);

}  // namespace ip3d
