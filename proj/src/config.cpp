// SPDX-License-Identifier: Apache-2.0
#include "ip3d/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ip3d/image_io.hpp"

namespace ip3d {
namespace {

const std::set<std::string> kConditionKinds = {"depth", "scribble", "pose",
                                               "canny", "text"};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_toml_value(const std::string& raw, int line_no) {
  const std::string v = trim(raw);
  if (v.empty()) {
    throw std::runtime_error("toml: empty value at line " +
                             std::to_string(line_no));
  }
  if (v.front() == '"') {
    const size_t close = v.find('"', 1);
    if (close == std::string::npos || trim(v.substr(close + 1)) != "") {
      throw std::runtime_error("toml: unterminated string at line " +
                               std::to_string(line_no));
    }
    return v.substr(1, close - 1);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    if (v.back() != ']') {
      throw std::runtime_error("toml: unterminated array at line " +
                               std::to_string(line_no));
    }
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      arr.push_back(parse_toml_value(item, line_no));
    }
    return arr;
  }
  // number: treat anything without . / e / E as an integer
  try {
    size_t used = 0;
    if (v.find_first_of(".eE") == std::string::npos) {
      const long long i = std::stoll(v, &used);
      if (used == v.size()) return i;
    } else {
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    }
  } catch (const std::exception&) {
  }
  throw std::runtime_error("toml: cannot parse value '" + v + "' at line " +
                           std::to_string(line_no));
}

}  // namespace

nlohmann::json parse_toml(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error("toml: bad section header at line " +
                                 std::to_string(line_no));
      }
      const std::string path = trim(line.substr(1, line.size() - 2));
      table = &root;
      std::stringstream ss(path);
      std::string part;
      while (std::getline(ss, part, '.')) {
        part = trim(part);
        if (part.empty()) {
          throw std::runtime_error("toml: empty section name at line " +
                                   std::to_string(line_no));
        }
        table = &(*table)[part];
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("toml: expected key = value at line " +
                               std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("toml: empty key at line " +
                               std::to_string(line_no));
    }
    (*table)[key] = parse_toml_value(line.substr(eq + 1), line_no);
  }
  return root;
}

void RunConfig::validate() const {
  if (image_path.empty()) {
    throw std::invalid_argument("config: input image path required");
  }
  if (!std::filesystem::exists(image_path)) {
    throw std::invalid_argument("config: input image not found: " + image_path);
  }
  if (!mask_path.empty() && !std::filesystem::exists(mask_path)) {
    throw std::invalid_argument("config: mask not found: " + mask_path);
  }
  for (const auto& [kind, path] : condition_maps) {
    if (!kConditionKinds.count(kind)) {
      std::string allowed;
      for (const auto& k : kConditionKinds) {
        allowed += allowed.empty() ? k : ", " + k;
      }
      throw std::invalid_argument("config: unknown condition kind '" + kind +
                                  "' (allowed: " + allowed + ")");
    }
    // "text" carries the prompt inline, everything else is a file.
    if (kind != "text" && !std::filesystem::exists(path)) {
      throw std::invalid_argument("config: condition map not found: " + path);
    }
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("config: output_dir required");
  }
  plan.validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["input"] = {{"image", image_path},
                {"mask", mask_path},
                {"pseudo_depth", pseudo_depth_path},
                {"conditions", condition_maps}};
  j["training"] = plan.to_json();
  j["guidance"] = {{"backend_2d", backend_2d},
                   {"backend_3d", backend_3d},
                   {"backend_2d_options", backend_2d_options},
                   {"backend_3d_options", backend_3d_options}};
  j["output_dir"] = output_dir;
  j["reference_pose"] = {{"azimuth_deg", reference_pose.azimuth_deg},
                         {"elevation_deg", reference_pose.elevation_deg},
                         {"radius", reference_pose.radius}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("input")) {
    const auto& in = j.at("input");
    c.image_path = in.value("image", c.image_path);
    c.mask_path = in.value("mask", c.mask_path);
    c.pseudo_depth_path = in.value("pseudo_depth", c.pseudo_depth_path);
    if (in.contains("conditions")) {
      for (const auto& [kind, path] : in.at("conditions").items()) {
        c.condition_maps[kind] = path.get<std::string>();
      }
    }
  }
  if (j.contains("training")) c.plan = TrainPlan::from_json(j.at("training"));
  if (j.contains("guidance")) {
    const auto& g = j.at("guidance");
    c.backend_2d = g.value("backend_2d", c.backend_2d);
    c.backend_3d = g.value("backend_3d", c.backend_3d);
    for (const char* which : {"backend_2d_options", "backend_3d_options"}) {
      if (!g.contains(which)) continue;
      auto& dst = std::string(which) == "backend_2d_options"
                      ? c.backend_2d_options
                      : c.backend_3d_options;
      for (const auto& [k, v] : g.at(which).items()) {
        dst[k] = v.get<double>();
      }
    }
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("reference_pose")) {
    const auto& p = j.at("reference_pose");
    c.reference_pose.azimuth_deg =
        p.value("azimuth_deg", c.reference_pose.azimuth_deg);
    c.reference_pose.elevation_deg =
        p.value("elevation_deg", c.reference_pose.elevation_deg);
    c.reference_pose.radius = p.value("radius", c.reference_pose.radius);
  }
  c.reference_pose.fov_y_deg = c.plan.fov_y_deg;
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string ext = std::filesystem::path(path).extension().string();
  nlohmann::json j;
  if (ext == ".toml") {
    j = parse_toml(buf.str());
  } else {
    j = nlohmann::json::parse(buf.str());
  }
  return RunConfig::from_json(j);
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << config.to_json().dump(2) << "\n";
}

namespace {

Image read_image_any(const std::string& path) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".npy") return io::read_npy(path);
  return io::read_png(path);
}

}  // namespace

ReferenceBundle load_reference(const RunConfig& config) {
  const Image raw = read_image_any(config.image_path);
  if (raw.channels() != 3 && raw.channels() != 4) {
    throw std::runtime_error("load_reference: image must be RGB or RGBA");
  }
  const int h = raw.height(), w = raw.width();

  Image mask(h, w, 1);
  if (!config.mask_path.empty()) {
    const Image m = read_image_any(config.mask_path);
    if (m.height() != h || m.width() != w) {
      throw std::runtime_error("load_reference: mask/image size mismatch");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) mask.at(y, x) = m.at(y, x, 0) > 0.5 ? 1 : 0;
    }
  } else if (raw.channels() == 4) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) mask.at(y, x) = raw.at(y, x, 3) > 0.5 ? 1 : 0;
    }
  } else {
    throw std::runtime_error("load_reference: mask required");
  }

  // Premultiplied resize keeps edge colors from bleeding background in.
  Image premul(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        premul.at(y, x, c) = raw.at(y, x, c) * mask.at(y, x);
      }
    }
  }
  const int H = config.plan.render_height, W = config.plan.render_width;
  const Image rm = resize_bilinear(premul, H, W);
  const Image mm = resize_bilinear(mask, H, W);

  ReferenceBundle ref;
  ref.image = Image(H, W, 3);
  ref.mask = Image(H, W, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = mm.at(y, x);
      ref.mask.at(y, x) = m > 0.5 ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c) {
        ref.image.at(y, x, c) = m > 1e-8 ? rm.at(y, x, c) / m : 0.0;
      }
    }
  }

  if (!config.pseudo_depth_path.empty()) {
    if (!std::filesystem::exists(config.pseudo_depth_path)) {
      std::cerr << "warning: pseudo-depth file missing, depth loss disabled: "
                << config.pseudo_depth_path << "\n";
    } else {
      const Image d = read_image_any(config.pseudo_depth_path);
      Image mono(d.height(), d.width(), 1);
      for (int y = 0; y < d.height(); ++y) {
        for (int x = 0; x < d.width(); ++x) mono.at(y, x) = d.at(y, x, 0);
      }
      ref.pseudo_depth = resize_bilinear(mono, H, W);
    }
  }

  ref.pose = config.reference_pose;
  ref.pose.fov_y_deg = config.plan.fov_y_deg;
  return ref;
}

}  // namespace ip3d
