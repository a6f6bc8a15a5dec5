#include "optiview/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace optiview::geometry {

namespace {

constexpr double kDegenerateEps = 1e-9;
constexpr double kUpParallelEps = 1e-6;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

UnitQuaternion::UnitQuaternion(double w_, double x_, double y_, double z_) {
    const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
    if (!(std::abs(n - 1.0) <= 1e-6)) {
        throw Error("UnitQuaternion: components not unit-norm (|q| = " + std::to_string(n) + ")");
    }
    w = w_ / n;
    x = x_ / n;
    y = y_ / n;
    z = z_ / n;
}

UnitQuaternion UnitQuaternion::from_stored(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(std::abs(n - 1.0) <= 1e-6)) {
        throw Error("UnitQuaternion: components not unit-norm (|q| = " + std::to_string(n) + ")");
    }
    return make_unchecked(w, x, y, z);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle_rad;
    const double s = std::sin(h);
    return make_unchecked(std::cos(h), a.x * s, a.y * s, a.z * s);
}

UnitQuaternion UnitQuaternion::from_raw(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n < 1e-300) throw Error("UnitQuaternion::from_raw: zero quaternion");
    return make_unchecked(w / n, x / n, y / n, z / n);
}

std::array<std::array<double, 3>, 3> UnitQuaternion::rotation_matrix() const {
    const double ww = w * w, xx = x * x, yy = y * y, zz = z * z;
    const double wx = w * x, wy = w * y, wz = w * z;
    const double xy = x * y, xz = x * z, yz = y * z;
    return {{{ww + xx - yy - zz, 2 * (xy - wz), 2 * (xz + wy)},
             {2 * (xy + wz), ww - xx + yy - zz, 2 * (yz - wx)},
             {2 * (xz - wy), 2 * (yz + wx), ww - xx - yy + zz}}};
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
    const double w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
    const double x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
    const double y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
    const double z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    return UnitQuaternion::make_unchecked(w / n, x / n, y / n, z / n);
}

UnitQuaternion quat_inverse(const UnitQuaternion& q) { return q.conjugate(); }

Vec3 rotate_vector(const UnitQuaternion& q, const Vec3& v) {
    // v' = v + 2*w*(u x v) + 2*(u x (u x v)), u = (x, y, z)
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 uv = u.cross(v);
    const Vec3 uuv = u.cross(uv);
    return v + 2.0 * q.w * uv + 2.0 * uuv;
}

namespace {

UnitQuaternion quat_from_axes(const Vec3& x_cam, const Vec3& y_cam, const Vec3& z_cam) {
    // Columns of R are the camera axes in world coordinates.
    const double m00 = x_cam.x, m01 = y_cam.x, m02 = z_cam.x;
    const double m10 = x_cam.y, m11 = y_cam.y, m12 = z_cam.y;
    const double m20 = x_cam.z, m21 = y_cam.z, m22 = z_cam.z;
    const double tr = m00 + m11 + m22;
    double w, x, y, z;
    if (tr > 0.0) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        w = 0.25 * s;
        x = (m21 - m12) / s;
        y = (m02 - m20) / s;
        z = (m10 - m01) / s;
    } else if (m00 > m11 && m00 > m22) {
        const double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
        w = (m21 - m12) / s;
        x = 0.25 * s;
        y = (m01 + m10) / s;
        z = (m02 + m20) / s;
    } else if (m11 > m22) {
        const double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
        w = (m02 - m20) / s;
        x = (m01 + m10) / s;
        y = 0.25 * s;
        z = (m12 + m21) / s;
    } else {
        const double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
        w = (m10 - m01) / s;
        x = (m02 + m20) / s;
        y = (m12 + m21) / s;
        z = 0.25 * s;
    }
    return UnitQuaternion::from_raw(w, x, y, z);
}

}  // namespace

UnitQuaternion look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
    const Vec3 diff = target - eye;
    const double d = diff.norm();
    if (d <= kDegenerateEps) {
        throw DegenerateDirection("look_at_rotation: target coincides with eye");
    }
    const Vec3 forward = diff / d;
    const Vec3 z_cam = -forward;

    Vec3 x_cam;
    const Vec3 up = up_hint.normalized();
    if (up.cross(z_cam).norm() > kUpParallelEps) {
        x_cam = up.cross(z_cam).normalized();
    } else {
        // View parallel to the up hint. Fix roll from a right-axis hint
        // instead: (1,0,0), or (0,1,0) if the view is along x. This makes
        // a straight-down view with a +z hint come out as the identity.
        Vec3 right_hint{1.0, 0.0, 0.0};
        Vec3 projected = right_hint - z_cam * right_hint.dot(z_cam);
        if (projected.norm() <= kUpParallelEps) {
            right_hint = Vec3{0.0, 1.0, 0.0};
            projected = right_hint - z_cam * right_hint.dot(z_cam);
        }
        x_cam = projected.normalized();
    }
    const Vec3 y_cam = z_cam.cross(x_cam);
    return quat_from_axes(x_cam, y_cam, z_cam);
}

Vec3 optimal_view_world(const Vec3& t_obj, const UnitQuaternion& q_obj, const Vec3& p_cam_obj) {
    return t_obj + rotate_vector(q_obj, p_cam_obj);
}

Vec3 object_frame_viewpoint(const Vec3& t_best, const Vec3& t_obj, const UnitQuaternion& q_obj) {
    return rotate_vector(quat_inverse(q_obj), t_best - t_obj);
}

PoseDelta pose_delta(const Pose& camera, const Vec3& t_best, const Vec3& t_obj,
                     const Vec3& up_hint, FaceSign face_sign) {
    const UnitQuaternion q_cam_inv = quat_inverse(camera.rotation);
    PoseDelta delta;
    delta.dt = rotate_vector(q_cam_inv, t_best - camera.translation);
    const Vec3 gaze_target =
        face_sign == FaceSign::kTowardObject ? t_obj : t_best + (t_best - t_obj);
    const UnitQuaternion q_target = look_at_rotation(t_best, gaze_target, up_hint);
    delta.dq = quat_multiply(q_cam_inv, q_target);
    return delta;
}

Pose apply_delta(const Pose& camera, const PoseDelta& delta) {
    Pose out;
    out.translation = camera.translation + rotate_vector(camera.rotation, delta.dt);
    out.rotation = quat_multiply(camera.rotation, delta.dq);
    return out;
}

double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
    return 2.0 * std::acos(clamp_unit(std::abs(a.dot(b))));
}

Vec3 optical_axis(const UnitQuaternion& q) {
    return rotate_vector(q, Vec3{0.0, 0.0, -1.0});
}

}  // namespace optiview::geometry
