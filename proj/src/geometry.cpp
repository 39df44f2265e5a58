#include "oelift/geometry.hpp"

#include <cmath>

#include <Eigen/LU>

namespace oelift {

namespace {
constexpr double kRotationTol = 1e-6;
}

CameraIntrinsics::CameraIntrinsics(const Eigen::Matrix3d& k) : k_(k) {
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
    throw Error("intrinsics: focal lengths must be positive");
  }
  if (k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0) {
    throw Error("intrinsics: bottom row must be exactly (0, 0, 1)");
  }
  if (!k.allFinite()) {
    throw Error("intrinsics: matrix has non-finite entries");
  }
}

CameraIntrinsics CameraIntrinsics::from_params(double fx, double fy, double cx, double cy) {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return CameraIntrinsics(k);
}

CameraPose::CameraPose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                       Direction direction)
    : rotation_(rotation), translation_(translation), direction_(direction) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error("pose: non-finite entries");
  }
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  if (ortho > kRotationTol) {
    throw Error("pose: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > kRotationTol) {
    throw Error("pose: rotation determinant is not +1");
  }
}

CameraPose CameraPose::identity() {
  return CameraPose(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(),
                    Direction::kWorldToCamera);
}

CameraPose CameraPose::from_matrix4(const Eigen::Matrix4d& m, Direction direction) {
  const Eigen::Vector4d bottom = m.row(3).transpose();
  if ((bottom - Eigen::Vector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error("pose: bottom row of 4x4 matrix must be (0, 0, 0, 1)");
  }
  return CameraPose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), direction);
}

CameraPose CameraPose::inverse() const {
  const Direction flipped = direction_ == Direction::kWorldToCamera
                                ? Direction::kCameraToWorld
                                : Direction::kWorldToCamera;
  return CameraPose(rotation_.transpose(), -(rotation_.transpose() * translation_), flipped);
}

CameraPose CameraPose::world_to_camera() const {
  return direction_ == Direction::kWorldToCamera ? *this : inverse();
}

Eigen::Matrix4d CameraPose::matrix4() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

PixelProjection project_point(const Eigen::Vector3d& point, const CameraIntrinsics& intrinsics,
                              const CameraPose& pose) {
  const CameraPose w2c = pose.world_to_camera();
  const Eigen::Vector3d cam = w2c.apply(point);
  const Eigen::Vector3d h = intrinsics.matrix() * cam;
  PixelProjection out;
  out.d = cam.z();
  if (out.d != 0.0) {
    out.u = h.x() / out.d;
    out.v = h.y() / out.d;
  }
  return out;
}

Eigen::Vector3d unproject_pixel(double u, double v, double d, const CameraIntrinsics& intrinsics,
                                const CameraPose& pose) {
  if (!(d > 0.0)) {
    throw Error("unproject_pixel: depth must be positive");
  }
  const Eigen::Vector3d cam((u - intrinsics.cx()) / intrinsics.fx() * d,
                            (v - intrinsics.cy()) / intrinsics.fy() * d, d);
  const CameraPose c2w = pose.world_to_camera().inverse();
  return c2w.apply(cam);
}

DepthMap DepthMap::from_millimeters(int w, int h, const std::vector<std::uint16_t>& mm) {
  if (mm.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw Error("depth map: sample count does not match dimensions");
  }
  DepthMap map(w, h);
  for (std::size_t i = 0; i < mm.size(); ++i) {
    map.meters[i] = mm[i] / 1000.0;
  }
  return map;
}

std::optional<double> depth_lookup(const DepthMap& depth, double u, double v) {
  const double col = std::floor(u);
  const double row = std::floor(v);
  if (!(col >= 0.0) || !(row >= 0.0) || col >= depth.width || row >= depth.height) {
    return std::nullopt;
  }
  const double sample = depth.at(static_cast<int>(row), static_cast<int>(col));
  if (sample == 0.0) {
    return std::nullopt;
  }
  return sample;
}

}  // namespace oelift
