// SPDX-License-Identifier: Apache-2.0
#include "ip3d/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ip3d {
namespace {

constexpr char kMagic[8] = {'I', 'P', '3', 'D', 'C', 'K', 'P', 'T'};

void write_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& stem, const Checkpoint& ck) {
  const std::filesystem::path bin = stem + ".bin";
  const std::filesystem::path meta = stem + ".json";
  if (bin.has_parent_path()) {
    std::filesystem::create_directories(bin.parent_path());
  }

  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + bin.string());
  out.write(kMagic, 8);
  write_u64(out, ck.sections.size());
  for (const auto& [name, blob] : ck.sections) {
    write_u64(out, name.size());
    out.write(name.data(), name.size());
    write_u64(out, blob.size());
    out.write(reinterpret_cast<const char*>(blob.data()),
              blob.size() * sizeof(double));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + bin.string());
  out.close();

  std::ofstream mout(meta);
  if (!mout) {
    throw std::runtime_error("cannot write checkpoint: " + meta.string());
  }
  mout << ck.meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& stem) {
  Checkpoint ck;
  std::ifstream min(stem + ".json");
  if (!min) throw std::runtime_error("checkpoint not found: " + stem);
  min >> ck.meta;

  std::ifstream in(stem + ".bin", std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + stem);
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("bad checkpoint magic: " + stem);
  }
  const uint64_t count = read_u64(in);
  for (uint64_t s = 0; s < count; ++s) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint64_t blob_len = read_u64(in);
    std::vector<double> blob(blob_len);
    in.read(reinterpret_cast<char*>(blob.data()), blob_len * sizeof(double));
    if (!in) throw std::runtime_error("truncated checkpoint: " + stem);
    ck.sections.emplace(std::move(name), std::move(blob));
  }
  return ck;
}

std::optional<std::string> latest_checkpoint(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::string best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto path = entry.path();
    if (path.extension() != ".json") continue;
    const std::string name = path.stem().string();
    if (name.rfind("ckpt_", 0) != 0) continue;
    std::filesystem::path bin = path;
    bin.replace_extension(".bin");
    if (!std::filesystem::exists(bin)) continue;
    std::filesystem::path stem = path;
    stem.replace_extension();
    if (const std::string s = stem.string(); s > best) best = s;
  }
  if (best.empty()) return std::nullopt;
  return best;
}

}  // namespace ip3d
