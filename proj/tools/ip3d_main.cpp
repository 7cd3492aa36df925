// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ip3d/api.hpp"
#include "ip3d/config.hpp"

namespace {

std::string resolve_run_dir(const std::string& output,
                            const std::string& config_path) {
  if (!output.empty()) return output;
  if (config_path.empty()) {
    throw std::runtime_error("either --config or --output is required");
  }
  return ip3d::load_config(config_path).output_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image-to-3D generation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  long long seed_override = -1;
  std::string backend_override;
  int frames = 8;
  double elevation = 15.0;

  auto add_common = [&](CLI::App* cmd, bool with_frames) {
    cmd->add_option("--config", config_path, "TOML or JSON run config")
        ->envname("IP3D_CONFIG");
    cmd->add_option("--output", output, "Run/output directory")
        ->envname("IP3D_OUTPUT");
    if (with_frames) {
      cmd->add_option("--frames", frames, "Turntable frame count")
          ->envname("IP3D_FRAMES");
      cmd->add_option("--elevation", elevation, "Turntable elevation (deg)")
          ->envname("IP3D_ELEVATION");
    }
  };

  CLI::App* generate = app.add_subcommand("generate", "Run two-stage training");
  add_common(generate, false);
  generate->add_option("--seed", seed_override, "Master seed override")
      ->envname("IP3D_SEED");
  generate->add_option("--backend", backend_override,
                       "Guidance backend override (both 2D and 3D)")
      ->envname("IP3D_BACKEND");

  add_common(app.add_subcommand("render-turntable",
                                "Render evenly spaced azimuth frames"),
             true);
  add_common(app.add_subcommand("evaluate",
                                "Turntable metrics to metrics.json"),
             true);
  add_common(app.add_subcommand("export-mesh",
                                "Extract and write an OBJ surface"),
             false);

  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    nlohmann::json out;
    if (cmd == "generate") {
      if (config_path.empty()) {
        throw std::runtime_error("generate: --config is required");
      }
      out = ip3d::api::generate(config_path, seed_override, output,
                                backend_override);
    } else if (cmd == "render-turntable") {
      out = ip3d::api::render_turntable(resolve_run_dir(output, config_path),
                                        frames, elevation);
    } else if (cmd == "evaluate") {
      if (config_path.empty()) {
        throw std::runtime_error("evaluate: --config is required");
      }
      out = ip3d::api::evaluate(config_path, output, frames, elevation);
    } else {
      out = ip3d::api::export_mesh(resolve_run_dir(output, config_path));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["command"] = cmd;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
