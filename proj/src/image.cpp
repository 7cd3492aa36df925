// SPDX-License-Identifier: Apache-2.0
#include "ip3d/image.hpp"

#include <algorithm>

namespace ip3d {

Image resize_bilinear(const Image& src, int height, int width) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("resize_bilinear: bad target size");
  }
  if (src.empty()) {
    throw std::invalid_argument("resize_bilinear: empty source");
  }
  Image dst(height, width, src.channels());
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), src.height() - 1);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), src.width() - 1);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

}  // namespace ip3d
