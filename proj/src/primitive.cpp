#include "fsplat/primitive.hpp"

#include <cmath>

namespace fsplat {

Mat3 tangent_frame(const Vec4& q) {
  double n = q.norm();
  double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 rot;
  rot << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return rot;
}

Mat4 surfel_to_world(const Primitive& prim) {
  Mat3 frame = tangent_frame(prim.rotation);
  double radius = prim.shape.circumradius();
  Mat4 h = Mat4::Zero();
  h.col(0).head<3>() = radius * frame.col(0);
  h.col(1).head<3>() = radius * frame.col(1);
  // Column 2 stays zero: local points are (u, v, 1, 1) and the dummy
  // third coordinate must not contribute.
  h.col(3).head<3>() = prim.center;
  h(3, 3) = 1.0;
  return h;
}

Mat4 world_to_screen(const Camera& cam) {
  Mat4 proj = Mat4::Zero();
  if (cam.projection == Camera::Projection::Perspective) {
    proj(0, 0) = cam.fx;
    proj(0, 2) = cam.cx;
    proj(1, 1) = cam.fy;
    proj(1, 2) = cam.cy;
    proj(2, 2) = 1.0;  // depth row
    proj(3, 2) = 1.0;  // homogeneous w = camera z
  } else {
    proj(0, 0) = cam.fx;
    proj(0, 3) = cam.cx;
    proj(1, 1) = cam.fy;
    proj(1, 3) = cam.cy;
    proj(2, 2) = 1.0;
    proj(3, 3) = 1.0;
  }
  return proj * cam.world_to_camera;
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  Vec3 fwd = (target - eye).normalized();
  Vec3 right = fwd.cross(up).normalized();
  Vec3 down = fwd.cross(right);
  Mat4 pose = Mat4::Identity();
  pose.row(0).head<3>() = right.transpose();
  pose.row(1).head<3>() = down.transpose();
  pose.row(2).head<3>() = fwd.transpose();
  pose.topRightCorner<3, 1>() = pose.topLeftCorner<3, 3>() * (-eye);
  return pose;
}

}  // namespace fsplat
