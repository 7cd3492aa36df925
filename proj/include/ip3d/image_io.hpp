// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ip3d/image.hpp"

namespace ip3d::io {

/// Reads an 8- or 16-bit PNG into [0,1] doubles. Palette images expand to
/// RGB; channel count follows the file (1, 2, 3 or 4).
Image read_png(const std::string& path);

/// Writes an 8-bit PNG. Values are clamped to [0,1]; C must be 1, 3 or 4.
void write_png(const std::string& path, const Image& image);

/// Reads a NPY array (little-endian float32/float64, C order, 2 or 3 dims)
/// as an image; 2-D arrays become single-channel.
Image read_npy(const std::string& path);

/// Writes an image as a float64 NPY array with shape (H, W, C).
void write_npy(const std::string& path, const Image& image);

}  // namespace ip3d::io
