#include "hav/geometry.hpp"

#include <cmath>

namespace hav {

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  double angle = aa.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

Camera Camera::look_at(const Vec3& position, const Vec3& target, const Vec3& up,
                       double focal, int w, int h) {
  Camera c;
  c.focal = focal;
  c.width = w;
  c.height = h;
  c.pp = Vec2(w / 2.0, h / 2.0);
  Vec3 fwd = (target - position).normalized();
  Vec3 right = fwd.cross(up).normalized();
  Vec3 down = fwd.cross(right); // +y is down in the camera frame
  c.R.row(0) = right.transpose();
  c.R.row(1) = down.transpose();
  c.R.row(2) = fwd.transpose();
  c.t = -c.R * position;
  return c;
}

void Camera::project(const Vec3& x, double& px, double& py, double& depth) const {
  Vec3 xc = R * x + t;
  depth = xc.z();
  px = focal * xc.x() / xc.z() + pp.x();
  py = focal * xc.y() / xc.z() + pp.y();
}

Vec3 Camera::ray_dir(double px, double py) const {
  Vec3 d_cam((px - pp.x()) / focal, (py - pp.y()) / focal, 1.0);
  return (R.transpose() * d_cam).normalized();
}

Camera Camera::composed_with(const HeadPose& p) const {
  Camera c = *this;
  Mat3 rp = p.R();
  c.R = R * rp;
  c.t = R * p.translation + t;
  return c;
}

bool intersect_canonical_box(const Vec3& origin, const Vec3& dir, double& t0,
                             double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < -1.0 || origin[a] > 1.0) return false;
      continue;
    }
    double ta = (-1.0 - origin[a]) / dir[a];
    double tb = (1.0 - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

} // namespace hav
