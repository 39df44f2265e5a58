#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "oelift/geometry.hpp"
#include "oelift/types.hpp"

namespace oelift {

// One 2D instance mask of a frame together with its visual tokens.
// The pixel bitmap is row-major over the full image.
struct Mask2D {
  int frame_id = 0;
  int mask_id = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // nonzero = member
  std::size_t pixel_count = 0;
  TokenMat tokens;

  bool contains(std::size_t pixel) const { return pixels[pixel] != 0; }
  bool contains(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col] != 0;
  }
};

// One RGB-D view: depth, camera model, and the view's 2D masks. The
// pose is stored world-to-camera (loaders convert on read). Color
// images are carried as a path only, never decoded here.
struct FrameRecord {
  int frame_id = 0;
  CameraIntrinsics intrinsics;
  CameraPose pose;
  DepthMap depth;
  std::vector<Mask2D> masks;
  std::string color_path;
};

// Visibility threshold and reference image geometry. Zero dimensions
// mean "take them from the frame being processed".
struct LiftConfig {
  double tau_depth = 0.1;  // meters
  int image_width = 0;
  int image_height = 0;
};

// Point indices visible in one (frame, mask) pair, ascending and unique.
struct VisibilityRecord {
  int frame_id = 0;
  int mask_id = 0;
  std::vector<std::uint32_t> points;
};

// Sparse per-point token sums and contribution counts over a cloud.
// Only touched points are materialized; an absent entry means a zero
// sum and a zero count.
class TokenField {
 public:
  struct Entry {
    std::uint32_t count = 0;
    std::vector<float> sum;  // token_rows * token_cols, row-major
  };

  TokenField() = default;
  TokenField(std::uint32_t num_points, int token_rows, int token_cols)
      : num_points_(num_points), rows_(token_rows), cols_(token_cols) {}

  std::uint32_t num_points() const { return num_points_; }
  int token_rows() const { return rows_; }
  int token_cols() const { return cols_; }
  std::size_t token_size() const {
    return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
  }
  std::size_t touched() const { return entries_.size(); }

  const Entry* find(std::uint32_t point) const;
  std::uint32_t count(std::uint32_t point) const;

  // Adds one token matrix contribution to a point.
  void add(std::uint32_t point, const TokenMat& tokens);
  // Elementwise merge of another field over the same cloud and dims.
  void merge(const TokenField& other);
  // Replaces a point's entry wholesale. Intended for loaders.
  void set_entry(std::uint32_t point, std::uint32_t count, std::vector<float> sum);

  std::vector<std::uint32_t> touched_points() const;  // ascending
  const std::unordered_map<std::uint32_t, Entry>& entries() const { return entries_; }

  bool operator==(const TokenField& o) const;

 private:
  std::uint32_t num_points_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::unordered_map<std::uint32_t, Entry> entries_;
};

// Read-only normalized view of a field: sum / count where the count is
// positive, the zero matrix otherwise.
class NormalizedField {
 public:
  explicit NormalizedField(const TokenField& field) : field_(&field) {}

  std::uint32_t count(std::uint32_t point) const { return field_->count(point); }
  TokenMat at(std::uint32_t point) const;
  const TokenField& field() const { return *field_; }

 private:
  const TokenField* field_;
};

// Per-point floor pixel index for points passing the depth test in this
// frame, -1 otherwise. Order matches the cloud. A point passes when its
// projected depth is positive, its floor pixel lies inside the image,
// the captured depth there is valid, and |d - D| <= tau_depth.
std::vector<std::int64_t> project_visible_pixels(const PointCloud& cloud,
                                                 const FrameRecord& frame,
                                                 const LiftConfig& config);

// The mask must belong to the frame. Throws ConfigError when image
// dimensions disagree between the mask, the depth map, and the config.
VisibilityRecord compute_visibility(const PointCloud& cloud, const FrameRecord& frame,
                                    const Mask2D& mask, const LiftConfig& config);

struct LiftOptions {
  int threads = 1;        // 0 = hardware concurrency
  bool deterministic = false;  // sort frames (and masks) canonically first
  bool wide_accumulation = false;  // accumulate in float64, round once at the end
};

// Accumulates every visible (frame, mask) token matrix into per-point
// sums and counts. Projection runs per frame (in parallel when
// threads != 1); the floating-point reduction is always sequential in
// frame order, so the result is bitwise identical to the plain
// (frame, mask, point) loop at any thread count.
TokenField accumulate_tokens(const PointCloud& cloud, const std::vector<FrameRecord>& frames,
                             const LiftConfig& config, const LiftOptions& options = {});

NormalizedField normalize_field(const TokenField& field);

// Field file: magic "OEF3", then little-endian u32 version, N, E, C, M,
// then M records (point index u32, count u32, E*C float32 sums) in
// ascending point order. load(save(x)) is bitwise identical to x.
void save_field(const TokenField& field, const std::filesystem::path& path);
TokenField load_field(const std::filesystem::path& path);

}  // namespace oelift
