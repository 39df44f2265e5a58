#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "oelift/error.hpp"

namespace oelift {

// Pinhole intrinsics
//   [fx  0 cx]
//   [ 0 fy cy]
//   [ 0  0  1]
// with focal lengths and principal point in pixels. The bottom row must
// be exactly (0, 0, 1) and fx, fy must be positive.
class CameraIntrinsics {
 public:
  CameraIntrinsics() : k_(Eigen::Matrix3d::Identity()) {}
  explicit CameraIntrinsics(const Eigen::Matrix3d& k);
  static CameraIntrinsics from_params(double fx, double fy, double cx, double cy);

  const Eigen::Matrix3d& matrix() const { return k_; }
  double fx() const { return k_(0, 0); }
  double fy() const { return k_(1, 1); }
  double cx() const { return k_(0, 2); }
  double cy() const { return k_(1, 2); }

 private:
  Eigen::Matrix3d k_;
};

// Rigid camera pose. `direction` says whether (R, t) maps world
// coordinates into the camera frame or camera coordinates into the
// world. R must be orthonormal with determinant +1 within 1e-6.
class CameraPose {
 public:
  enum class Direction { kWorldToCamera, kCameraToWorld };

  CameraPose()
      : rotation_(Eigen::Matrix3d::Identity()),
        translation_(Eigen::Vector3d::Zero()),
        direction_(Direction::kWorldToCamera) {}
  CameraPose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
             Direction direction);
  static CameraPose identity();
  // Upper-left 3x3 is the rotation, last column the translation. The
  // bottom row must be (0, 0, 0, 1) within 1e-9.
  static CameraPose from_matrix4(const Eigen::Matrix4d& m, Direction direction);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Direction direction() const { return direction_; }

  CameraPose inverse() const;
  // This pose normalized to the world-to-camera direction.
  CameraPose world_to_camera() const;
  Eigen::Matrix4d matrix4() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  Direction direction_;
};

// Projection of a 3D point into a view: pixel column u, pixel row v,
// and the camera-frame depth d in meters. d <= 0 means the point lies
// behind (or on) the camera plane; callers filter on d > 0 instead of
// this being an error.
struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
};

// Row-major depth image in meters. 0 marks a missing sample.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> meters;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), meters(static_cast<std::size_t>(w) * h, 0.0) {}
  static DepthMap from_millimeters(int w, int h, const std::vector<std::uint16_t>& mm);

  double at(int row, int col) const { return meters[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return meters[static_cast<std::size_t>(row) * width + col]; }
};

// Projects a world point through the pose (normalized to world-to-camera
// internally) and the intrinsics. Satisfies
//   d * (u, v, 1)^T = K * [R | t] * (x, y, z, 1)^T
// with d the camera-frame z coordinate.
PixelProjection project_point(const Eigen::Vector3d& point, const CameraIntrinsics& intrinsics,
                              const CameraPose& pose);

// Inverse of project_point for d > 0; rejects d <= 0.
Eigen::Vector3d unproject_pixel(double u, double v, double d, const CameraIntrinsics& intrinsics,
                                const CameraPose& pose);

// Floor-indexed depth read: sample at (row floor(v), col floor(u)).
// Returns nullopt for out-of-bounds coordinates or missing (zero)
// samples; invalid is a value, not a failure.
std::optional<double> depth_lookup(const DepthMap& depth, double u, double v);

}  // namespace oelift
