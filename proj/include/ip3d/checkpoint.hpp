// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ip3d {

/// A checkpoint is a pair of files sharing a stem: `<stem>.bin` holds named
/// double blobs (model parameters, optimizer moments), `<stem>.json` holds
/// everything else (stage, epoch counters, rng states, config echo).
struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, std::vector<double>> sections;
};

void save_checkpoint(const std::string& stem, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& stem);

/// Stem of the newest `ckpt_*.json` + `.bin` pair in dir (lexicographic max
/// of the zero-padded names), or nullopt when none exists.
std::optional<std::string> latest_checkpoint(const std::string& dir);

}  // namespace ip3d
