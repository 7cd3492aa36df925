// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"

namespace ip3d::api {

/// Full two-stage run from a config file. Negative seed keeps the config
/// value; empty overrides keep the config values.
nlohmann::json generate(const std::string& config_path,
                        long long seed_override = -1,
                        const std::string& output_override = "",
                        const std::string& backend_override = "");

/// Renders frames + poses.json under <run_dir>/turntable from the newest
/// checkpoint.
nlohmann::json render_turntable(const std::string& run_dir, int frames = 8,
                                double elevation_deg = 15.0);

/// Turntable metrics against the config's reference image; writes
/// <run_dir>/metrics.json.
nlohmann::json evaluate(const std::string& config_path,
                        const std::string& output_override = "",
                        int frames = 8, double elevation_deg = 15.0);

/// Surface extraction to <run_dir>/export/mesh.obj (stage-1 checkpoints get
/// a fresh marching-tetrahedra pass at the plan's resolution).
nlohmann::json export_mesh(const std::string& run_dir);

}  // namespace ip3d::api
