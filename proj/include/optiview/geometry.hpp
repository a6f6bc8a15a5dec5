#pragma once

#include <array>
#include <cmath>

#include "optiview/errors.hpp"

namespace optiview::geometry {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double squared_norm() const { return dot(*this); }
    Vec3 normalized() const { return *this / norm(); }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Scalar-first (w, x, y, z) unit quaternion; Hamilton product, active
// rotation convention. Construction renormalizes; inputs more than 1e-6
// away from unit norm are rejected.
struct UnitQuaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    UnitQuaternion() = default;
    UnitQuaternion(double w_, double x_, double y_, double z_);

    static UnitQuaternion identity() { return {}; }
    static UnitQuaternion from_axis_angle(const Vec3& axis, double angle_rad);
    // Normalizes an arbitrary non-zero 4-vector.
    static UnitQuaternion from_raw(double w, double x, double y, double z);
    // Deserialization path: validates unit norm like the constructor but
    // keeps the components bit-identical instead of renormalizing, so a
    // written quaternion reads back exactly.
    static UnitQuaternion from_stored(double w, double x, double y, double z);

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    double dot(const UnitQuaternion& o) const {
        return w * o.w + x * o.x + y * o.y + z * o.z;
    }
    UnitQuaternion conjugate() const { return make_unchecked(w, -x, -y, -z); }
    UnitQuaternion negated() const { return make_unchecked(-w, -x, -y, -z); }
    // Flips sign so that w >= 0 (double-cover canonical form).
    UnitQuaternion canonicalized() const { return w < 0.0 ? negated() : *this; }

    std::array<std::array<double, 3>, 3> rotation_matrix() const;

private:
    static UnitQuaternion make_unchecked(double w, double x, double y, double z) {
        UnitQuaternion q;
        q.w = w; q.x = x; q.y = y; q.z = z;
        return q;
    }
    friend UnitQuaternion quat_multiply(const UnitQuaternion&, const UnitQuaternion&);
};

struct Pose {
    Vec3 translation;
    UnitQuaternion rotation;
};

// Camera pose adjustment: dt is expressed in the initial camera frame.
struct PoseDelta {
    Vec3 dt;
    UnitQuaternion dq;
};

// Hamilton product a*b: the rotation b followed by a.
UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);

UnitQuaternion quat_inverse(const UnitQuaternion& q);

Vec3 rotate_vector(const UnitQuaternion& q, const Vec3& v);

// Camera frame convention: optical axis -z, up +y. The returned rotation
// maps camera-frame vectors to world-frame vectors, with the optical axis
// pointing from eye toward target and roll fixed by up_hint.
// Throws DegenerateDirection if target is within 1e-9 of eye.
UnitQuaternion look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up_hint);

// t_best = t_obj + R(q_obj) * p_cam_obj
Vec3 optimal_view_world(const Vec3& t_obj, const UnitQuaternion& q_obj, const Vec3& p_cam_obj);

// Inverse of optimal_view_world: world viewpoint -> object-frame offset.
Vec3 object_frame_viewpoint(const Vec3& t_best, const Vec3& t_obj, const UnitQuaternion& q_obj);

// Which way the goal orientation faces relative to the object.
enum class FaceSign {
    kTowardObject,  // optical axis from t_best toward t_obj
    kAlongOffset,   // literal reading: axis along t_best - t_obj, away from the object
};

// Adjustment moving `camera` to position t_best with the goal orientation
// looking at t_obj (roll from up_hint):
//   dt = R(q_cam)^-1 * (t_best - t_cam),   dq = q_cam^-1 * q_target
PoseDelta pose_delta(const Pose& camera, const Vec3& t_best, const Vec3& t_obj,
                     const Vec3& up_hint, FaceSign face_sign = FaceSign::kTowardObject);

// Executes an adjustment: translation = t_cam + R(q_cam)*dt, rotation = q_cam*dq.
Pose apply_delta(const Pose& camera, const PoseDelta& delta);

// 2*arccos(|<a,b>|), in [0, pi]; symmetric and sign-flip invariant.
double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b);

// Direction the camera's optical axis points in the world frame.
Vec3 optical_axis(const UnitQuaternion& q);

}  // namespace optiview::geometry
