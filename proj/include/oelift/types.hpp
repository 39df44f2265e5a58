#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

namespace oelift {

// Colored point cloud. Positions in meters, colors 8-bit RGB.
struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<std::array<std::uint8_t, 3>> colors;

  std::size_t size() const { return positions.size(); }
};

// Per-mask visual tokens: E rows of C feature dims each, row-major
// float32. Every operation on these is elementwise, so the flat buffer
// is the working representation.
struct TokenMat {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  TokenMat() = default;
  TokenMat(int r, int c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0f) {}

  std::size_t count() const { return data.size(); }
  float& at(int e, int c) { return data[static_cast<std::size_t>(e) * cols + c]; }
  float at(int e, int c) const { return data[static_cast<std::size_t>(e) * cols + c]; }
  bool same_shape(const TokenMat& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const TokenMat& o) const = default;
};

}  // namespace oelift
