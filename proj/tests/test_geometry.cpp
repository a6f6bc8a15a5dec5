#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"

using namespace optiview;
using namespace optiview::geometry;
using optiview::testing::from_eigen;
using optiview::testing::random_quat;
using optiview::testing::random_vec3;
using optiview::testing::to_eigen;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool vec_close(const Vec3& a, const Vec3& b, double tol) {
    return (a - b).norm() <= tol;
}

}  // namespace

TEST_CASE("quat_multiply identity and inverse") {
    RngStream rng(101);
    for (int i = 0; i < 50; ++i) {
        const UnitQuaternion q = random_quat(rng);
        const UnitQuaternion iq = quat_multiply(UnitQuaternion::identity(), q);
        CHECK(std::abs(std::abs(iq.dot(q)) - 1.0) < 1e-12);

        const UnitQuaternion e = quat_multiply(q, quat_inverse(q));
        CHECK(std::abs(std::abs(e.w) - 1.0) < 1e-12);
    }
}

TEST_CASE("quat_multiply composes like rotation matrices") {
    const UnitQuaternion rz90 = UnitQuaternion::from_axis_angle({0, 0, 1}, kPi / 2);
    const UnitQuaternion rz180 = quat_multiply(rz90, rz90);
    // Oracle: compose the two rotations as matrices.
    Eigen::Matrix3d expected =
        to_eigen(rz90).toRotationMatrix() * to_eigen(rz90).toRotationMatrix();
    CHECK((to_eigen(rz180).toRotationMatrix() - expected).norm() < 1e-12);

    RngStream rng(102);
    for (int i = 0; i < 100; ++i) {
        const UnitQuaternion a = random_quat(rng);
        const UnitQuaternion b = random_quat(rng);
        Eigen::Matrix3d oracle =
            to_eigen(a).toRotationMatrix() * to_eigen(b).toRotationMatrix();
        CHECK((to_eigen(quat_multiply(a, b)).toRotationMatrix() - oracle).norm() < 1e-12);
    }
}

TEST_CASE("quat_inverse is the conjugate and undoes rotations") {
    CHECK(quat_inverse(UnitQuaternion::identity()).w == doctest::Approx(1.0));

    RngStream rng(103);
    for (int i = 0; i < 100; ++i) {
        const UnitQuaternion q = random_quat(rng);
        const UnitQuaternion qi = quat_inverse(q);
        CHECK(qi.w == doctest::Approx(q.w));
        CHECK(qi.x == doctest::Approx(-q.x));
        CHECK(qi.y == doctest::Approx(-q.y));
        CHECK(qi.z == doctest::Approx(-q.z));

        const Vec3 v = random_vec3(rng, -2.0, 2.0);
        CHECK(vec_close(rotate_vector(qi, rotate_vector(q, v)), v, 1e-12));
    }
}

TEST_CASE("rotate_vector matches the rotation matrix oracle") {
    const UnitQuaternion id = UnitQuaternion::identity();
    CHECK(vec_close(rotate_vector(id, {1, 2, 3}), {1, 2, 3}, 0.0));

    const UnitQuaternion rz90 = UnitQuaternion::from_axis_angle({0, 0, 1}, kPi / 2);
    CHECK(vec_close(rotate_vector(rz90, {1, 0, 0}), {0, 1, 0}, 1e-12));

    RngStream rng(104);
    for (int i = 0; i < 100; ++i) {
        const UnitQuaternion q = random_quat(rng);
        const Vec3 v = random_vec3(rng, -3.0, 3.0);
        const Vec3 oracle = from_eigen(to_eigen(q).toRotationMatrix() * to_eigen(v));
        CHECK(vec_close(rotate_vector(q, v), oracle, 1e-12));
        CHECK(vec_close(rotate_vector(q, {0, 0, 0}), {0, 0, 0}, 0.0));
        // Norm preservation.
        CHECK(std::abs(rotate_vector(q, v).norm() - v.norm()) < 1e-12);
    }
}

TEST_CASE("look_at_rotation canonical cases") {
    // Target along the canonical optical axis (-z), degenerate up hint:
    // the axis convention forces the identity.
    const UnitQuaternion q = look_at_rotation({0, 0, 0}, {0, 0, -1}, {0, 0, 1});
    CHECK(geodesic_distance(q, UnitQuaternion::identity()) < 1e-9);

    const UnitQuaternion q2 = look_at_rotation({1, 0, 0}, {0, 0, 0}, {0, 0, 1});
    CHECK(vec_close(optical_axis(q2), {-1, 0, 0}, 1e-12));

    // Swapping eye and target flips the optical axis.
    const UnitQuaternion q3 = look_at_rotation({0, 0, 0}, {1, 0, 0}, {0, 0, 1});
    CHECK(optical_axis(q2).dot(optical_axis(q3)) == doctest::Approx(-1.0));

    CHECK_THROWS_AS(look_at_rotation({1, 1, 1}, {1, 1, 1}, {0, 0, 1}), DegenerateDirection);
}

TEST_CASE("look_at_rotation always faces the target and is orthonormal") {
    RngStream rng(105);
    for (int i = 0; i < 200; ++i) {
        const Vec3 eye = random_vec3(rng, -2.0, 2.0);
        Vec3 target = random_vec3(rng, -2.0, 2.0);
        if ((target - eye).norm() < 1e-6) target.x += 1.0;
        const UnitQuaternion q = look_at_rotation(eye, target, {0, 0, 1});
        const Vec3 axis = optical_axis(q);
        CHECK(vec_close(axis, (target - eye).normalized(), 1e-9));
        CHECK(std::abs(q.norm() - 1.0) <= 1e-12);
    }
}

TEST_CASE("optimal_view_world and object_frame_viewpoint") {
    CHECK(vec_close(optimal_view_world({0, 0, 0}, UnitQuaternion::identity(), {0.3, 0, 0.2}),
                    {0.3, 0, 0.2}, 0.0));
    CHECK(vec_close(optimal_view_world({1, 1, 0}, UnitQuaternion::identity(), {0.3, 0, 0.2}),
                    {1.3, 1, 0.2}, 1e-15));
    const UnitQuaternion rz90 = UnitQuaternion::from_axis_angle({0, 0, 1}, kPi / 2);
    CHECK(vec_close(optimal_view_world({0, 0, 0}, rz90, {0.3, 0, 0.2}), {0, 0.3, 0.2}, 1e-12));

    CHECK(vec_close(object_frame_viewpoint({0.3, 0, 0.2}, {0, 0, 0}, UnitQuaternion::identity()),
                    {0.3, 0, 0.2}, 0.0));
    CHECK(vec_close(object_frame_viewpoint({1, 2, 3}, {1, 2, 3}, rz90), {0, 0, 0}, 1e-12));

    RngStream rng(106);
    for (int i = 0; i < 100; ++i) {
        const Vec3 t_obj = random_vec3(rng);
        const UnitQuaternion q_obj = random_quat(rng);
        const Vec3 p = random_vec3(rng);
        const Vec3 t_best = optimal_view_world(t_obj, q_obj, p);
        CHECK(vec_close(object_frame_viewpoint(t_best, t_obj, q_obj), p, 1e-9));
        CHECK(vec_close(optimal_view_world(t_obj, q_obj, object_frame_viewpoint(t_best, t_obj, q_obj)),
                        t_best, 1e-9));
    }
}

TEST_CASE("pose_delta fixed point and identity cases") {
    // Camera already at t_best facing t_obj: no adjustment.
    const Vec3 t_best{0.5, 0.2, 0.3};
    const Vec3 t_obj{0, 0, 0};
    Pose camera;
    camera.translation = t_best;
    camera.rotation = look_at_rotation(t_best, t_obj, {0, 0, 1});
    const PoseDelta d = pose_delta(camera, t_best, t_obj, {0, 0, 1});
    CHECK(d.dt.norm() < 1e-12);
    CHECK(geodesic_distance(d.dq, UnitQuaternion::identity()) < 1e-9);

    // Identity camera pose; goal orientation equals the camera's.
    Pose ident;
    const Vec3 t_best2{1, 0, 0};
    const Vec3 t_obj2{1, 0, -1};  // look-at from t_best2 gives the identity orientation
    const PoseDelta d2 = pose_delta(ident, t_best2, t_obj2, {0, 1, 0});
    CHECK(vec_close(d2.dt, {1, 0, 0}, 1e-12));
    CHECK(geodesic_distance(d2.dq, UnitQuaternion::identity()) < 1e-9);
}

TEST_CASE("apply_delta trivial cases") {
    Pose camera;
    camera.translation = {0.2, -0.1, 0.4};
    camera.rotation = UnitQuaternion::from_axis_angle({1, 2, 2}, 0.7);

    const Pose same = apply_delta(camera, PoseDelta{});
    CHECK(vec_close(same.translation, camera.translation, 0.0));
    CHECK(geodesic_distance(same.rotation, camera.rotation) < 1e-12);

    Pose ident;
    const Pose moved = apply_delta(ident, PoseDelta{{1, 2, 3}, UnitQuaternion::identity()});
    CHECK(vec_close(moved.translation, {1, 2, 3}, 0.0));
}

TEST_CASE("pose_delta / apply_delta round trip on 1000 random cases") {
    RngStream rng(107);
    for (int i = 0; i < 1000; ++i) {
        Pose camera;
        camera.translation = random_vec3(rng, -1.0, 1.0);
        camera.rotation = random_quat(rng);
        const Vec3 t_obj = random_vec3(rng, -1.0, 1.0);
        Vec3 t_best = random_vec3(rng, -1.0, 1.0);
        if ((t_best - t_obj).norm() < 1e-3) t_best.z += 0.5;

        const PoseDelta d = pose_delta(camera, t_best, t_obj, {0, 0, 1});
        const Pose landed = apply_delta(camera, d);
        CHECK((landed.translation - t_best).norm() < 1e-9);
        // Optical axis must point from t_best toward the object.
        const Vec3 want = (t_obj - t_best).normalized();
        const double axis_err =
            std::acos(std::clamp(optical_axis(landed.rotation).dot(want), -1.0, 1.0));
        CHECK(axis_err < 1e-7);
    }
}

TEST_CASE("pose_delta literal face sign looks away from the object") {
    Pose camera;
    camera.translation = {0.1, 0.0, 0.2};
    camera.rotation = UnitQuaternion::from_axis_angle({0, 1, 0}, 0.3);
    const Vec3 t_obj{0, 0, 0};
    const Vec3 t_best{0.4, 0.1, 0.3};
    const PoseDelta d = pose_delta(camera, t_best, t_obj, {0, 0, 1}, FaceSign::kAlongOffset);
    const Pose landed = apply_delta(camera, d);
    const Vec3 away = (t_best - t_obj).normalized();
    CHECK(optical_axis(landed.rotation).dot(away) == doctest::Approx(1.0));
}

TEST_CASE("geodesic_distance properties and axis-angle oracle") {
    RngStream rng(108);
    const UnitQuaternion rz90 = UnitQuaternion::from_axis_angle({0, 0, 1}, kPi / 2);
    CHECK(geodesic_distance(UnitQuaternion::identity(), rz90) == doctest::Approx(kPi / 2));

    for (int i = 0; i < 1000; ++i) {
        const UnitQuaternion a = random_quat(rng);
        const UnitQuaternion b = random_quat(rng);
        CHECK(geodesic_distance(a, a) == doctest::Approx(0.0));
        CHECK(geodesic_distance(a, a.negated()) == doctest::Approx(0.0));
        CHECK(geodesic_distance(a, b) == doctest::Approx(geodesic_distance(b, a)));
        CHECK(geodesic_distance(a, b.negated()) == doctest::Approx(geodesic_distance(a, b)));

        // Oracle: angle of the relative rotation via Eigen's AngleAxis.
        const Eigen::AngleAxisd rel(to_eigen(a).conjugate() * to_eigen(b));
        double angle = rel.angle();
        if (angle > kPi) angle = 2 * kPi - angle;
        CHECK(std::abs(geodesic_distance(a, b) - angle) < 1e-9);
    }
}

TEST_CASE("geodesic_distance triangle inequality on 1000 triples") {
    RngStream rng(109);
    for (int i = 0; i < 1000; ++i) {
        const UnitQuaternion a = random_quat(rng);
        const UnitQuaternion b = random_quat(rng);
        const UnitQuaternion c = random_quat(rng);
        CHECK(geodesic_distance(a, c) <=
              geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-9);
    }
}

TEST_CASE("quaternion results stay renormalized") {
    RngStream rng(110);
    for (int i = 0; i < 200; ++i) {
        UnitQuaternion q = random_quat(rng);
        for (int k = 0; k < 20; ++k) q = quat_multiply(q, random_quat(rng));
        CHECK(std::abs(q.norm() - 1.0) <= 1e-12);
    }
}

TEST_CASE("UnitQuaternion rejects non-unit components") {
    CHECK_THROWS_AS(UnitQuaternion(0.5, 0.5, 0.0, 0.0), Error);
    CHECK_NOTHROW(UnitQuaternion(1.0, 0.0, 0.0, 0.0));
}
