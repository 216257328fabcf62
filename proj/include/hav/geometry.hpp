#pragma once

#include <Eigen/Dense>

namespace hav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using FaceMatrix = Eigen::Matrix<int, Eigen::Dynamic, 3>;

Mat3 axis_angle_to_matrix(const Vec3& aa);

// Rigid head pose: x -> R x + t, rotation as an axis-angle vector with
// magnitude < pi.
struct HeadPose {
  Vec3 rotation{0, 0, 0};
  Vec3 translation{0, 0, 0};

  Mat3 R() const { return axis_angle_to_matrix(rotation); }
  Vec3 apply(const Vec3& x) const { return R() * x + translation; }
  bool is_identity() const {
    return rotation.isZero(0.0) && translation.isZero(0.0);
  }
};

struct Mesh {
  VertexMatrix V;
  FaceMatrix F;
  VertexMatrix C; // per-vertex rgb in [0,1]; may be empty
};

// Pinhole camera, OpenCV-style frame: +z forward, +x right, +y down.
// Extrinsics map world to camera: x_cam = R x + t.
struct Camera {
  double focal = 1.0;
  Vec2 pp{0, 0};
  int width = 0, height = 0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Camera look_at(const Vec3& position, const Vec3& target,
                        const Vec3& up, double focal, int w, int h);

  Vec3 position() const { return -R.transpose() * t; }
  Vec3 forward() const { return R.row(2).transpose(); }

  // pixel coordinates and camera-space depth; depth <= 0 means behind
  void project(const Vec3& x, double& px, double& py, double& depth) const;
  // unit world direction through pixel coords (px, py); origin is position()
  Vec3 ray_dir(double px, double py) const;

  // camera composed with a rigid pre-transform: world' = P(world)
  Camera composed_with(const HeadPose& p) const;
};

// Ray / axis-aligned canonical box [-1,1]^3 intersection. Returns false when
// the ray misses; otherwise [t0, t1] is the inside interval.
bool intersect_canonical_box(const Vec3& origin, const Vec3& dir, double& t0,
                             double& t1);

} // namespace hav
