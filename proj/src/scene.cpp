#include "optiview/scene.hpp"

#include <algorithm>
#include <cmath>

#include "optiview/errors.hpp"

namespace optiview::scene {
namespace {

// Conservative local-frame AABB half extents of a primitive (before its
// local pose is applied).
Vec3 shape_half_extents(const PrimitiveShape& s) {
    switch (s.kind) {
        case ShapeKind::kBox:
            return {s.a, s.b, s.c};
        case ShapeKind::kCylinder:
            return {s.a, s.a, s.c};
        case ShapeKind::kSphere:
            return {s.a, s.a, s.a};
        case ShapeKind::kCappedCone: {
            const double r = std::max(s.a, s.b);
            return {r, r, s.c};
        }
    }
    return {0.0, 0.0, 0.0};
}

double shape_area(const PrimitiveShape& s) {
    switch (s.kind) {
        case ShapeKind::kBox:
            return 8.0 * (s.a * s.b + s.b * s.c + s.c * s.a);
        case ShapeKind::kCylinder:
            return 2.0 * M_PI * s.a * (2.0 * s.c) + 2.0 * M_PI * s.a * s.a;
        case ShapeKind::kSphere:
            return 4.0 * M_PI * s.a * s.a;
        case ShapeKind::kCappedCone: {
            const double dr = s.a - s.b;
            const double slant = std::sqrt(dr * dr + 4.0 * s.c * s.c);
            return M_PI * (s.a + s.b) * slant + M_PI * (s.a * s.a + s.b * s.b);
        }
    }
    return 0.0;
}

const char* kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::kBox: return "box";
        case ShapeKind::kCylinder: return "cylinder";
        case ShapeKind::kSphere: return "sphere";
        case ShapeKind::kCappedCone: return "capped_cone";
    }
    return "box";
}

ShapeKind kind_from_name(const std::string& name) {
    if (name == "box") return ShapeKind::kBox;
    if (name == "cylinder") return ShapeKind::kCylinder;
    if (name == "sphere") return ShapeKind::kSphere;
    if (name == "capped_cone") return ShapeKind::kCappedCone;
    throw DataError("unknown shape kind '" + name + "'");
}

nlohmann::json pose_to_json(const Pose& p) {
    return {{"t", {p.translation.x, p.translation.y, p.translation.z}},
            {"q", {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}}};
}

Pose pose_from_json(const nlohmann::json& j) {
    const auto& t = j.at("t");
    const auto& q = j.at("q");
    return {Vec3{t.at(0), t.at(1), t.at(2)},
            UnitQuaternion(q.at(0), q.at(1), q.at(2), q.at(3))};
}

nlohmann::json shape_to_json(const PrimitiveShape& s) {
    return {{"kind", kind_name(s.kind)},
            {"a", s.a},
            {"b", s.b},
            {"c", s.c},
            {"pose", pose_to_json(s.local_pose)}};
}

PrimitiveShape shape_from_json(const nlohmann::json& j) {
    PrimitiveShape s;
    s.kind = kind_from_name(j.at("kind").get<std::string>());
    s.a = j.at("a");
    s.b = j.at("b");
    s.c = j.at("c");
    s.local_pose = pose_from_json(j.at("pose"));
    return s;
}

}  // namespace

CameraIntrinsics CameraIntrinsics::scaled_to(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
}

void object_local_bounds(const ObjectSpec& spec, Vec3& lo, Vec3& hi) {
    if (spec.shapes.empty()) throw EmptyInput("object has no shapes");
    lo = {1e30, 1e30, 1e30};
    hi = {-1e30, -1e30, -1e30};
    for (const auto& s : spec.shapes) {
        const Vec3 h = shape_half_extents(s);
        const auto R = s.local_pose.rotation.rotation_matrix();
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 c{(corner & 1) ? h.x : -h.x, (corner & 2) ? h.y : -h.y,
                         (corner & 4) ? h.z : -h.z};
            Vec3 p = s.local_pose.translation;
            for (int r = 0; r < 3; ++r) {
                const double v = R[r][0] * c.x + R[r][1] * c.y + R[r][2] * c.z;
                (r == 0 ? p.x : r == 1 ? p.y : p.z) += v;
            }
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
    }
    lo = lo * spec.scale;
    hi = hi * spec.scale;
}

Vec3 object_aim_point(const ObjectSpec& spec) {
    Vec3 lo, hi;
    object_local_bounds(spec, lo, hi);
    return (lo + hi) * 0.5;
}

double object_bound_radius(const ObjectSpec& spec) {
    Vec3 lo, hi;
    object_local_bounds(spec, lo, hi);
    double r = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 c{(corner & 1) ? hi.x : lo.x, (corner & 2) ? hi.y : lo.y,
                     (corner & 4) ? hi.z : lo.z};
        r = std::max(r, c.norm());
    }
    return r;
}

double object_surface_area(const ObjectSpec& spec) {
    double area = 0.0;
    for (const auto& s : spec.shapes) area += shape_area(s);
    return area * spec.scale * spec.scale;
}

Vec3 scene_aim_point(const SceneSpec& scene) {
    const Vec3 local = object_aim_point(scene.target);
    return scene.target.pose.translation +
           geometry::rotate_vector(scene.target.pose.rotation, local);
}

EnclosureSpec make_shelf_enclosure(double depth, double width, double height,
                                   double wall_thickness, double elevation_max) {
    if (depth <= 0 || width <= 0 || height <= 0 || wall_thickness <= 0)
        throw DataError("enclosure dimensions must be positive");
    const double hd = depth / 2.0, hw = width / 2.0, t = wall_thickness;
    EnclosureSpec enc;
    enc.opening_dir = {1.0, 0.0, 0.0};
    enc.elevation_max = elevation_max;
    auto slab = [](Vec3 center, Vec3 half) {
        PrimitiveShape s;
        s.kind = ShapeKind::kBox;
        s.a = half.x;
        s.b = half.y;
        s.c = half.z;
        s.local_pose = {center, UnitQuaternion::identity()};
        return s;
    };
    // Back wall, then left/right walls (stop at the opening plane x = hd),
    // then floor and top slabs spanning the side walls.
    enc.walls.push_back(slab({-hd - t / 2, 0, height / 2}, {t / 2, hw + t, height / 2}));
    enc.walls.push_back(slab({-t / 2, -hw - t / 2, height / 2}, {hd + t / 2, t / 2, height / 2}));
    enc.walls.push_back(slab({-t / 2, hw + t / 2, height / 2}, {hd + t / 2, t / 2, height / 2}));
    enc.walls.push_back(slab({-t / 2, 0, -t / 2}, {hd + t / 2, hw + t, t / 2}));
    enc.walls.push_back(slab({-t / 2, 0, height + t / 2}, {hd + t / 2, hw + t, t / 2}));
    return enc;
}

Pose sample_side_viewpoint(const SceneSpec& scene, const ViewBand& band, RngStream& rng) {
    if (band.radius_min > band.radius_max ||
        band.elevation_min > band.elevation_max || band.radius_min <= 0)
        throw DataError("invalid view band");
    const Vec3 center = scene_aim_point(scene);
    const double azimuth0 =
        std::atan2(scene.enclosure.opening_dir.y, scene.enclosure.opening_dir.x);

    // Draw order is part of the contract: azimuth, elevation, radius, then
    // jitter axis (3 normals) and jitter angle. Elevation is sin-uniform so
    // positions are area-uniform on the band.
    const double azimuth =
        azimuth0 + rng.uniform(-band.azimuth_half_angle, band.azimuth_half_angle);
    const double sin_e = rng.uniform(std::sin(band.elevation_min), std::sin(band.elevation_max));
    const double elevation = std::asin(std::clamp(sin_e, -1.0, 1.0));
    const double radius = rng.uniform(band.radius_min, band.radius_max);

    const double ce = std::cos(elevation);
    const Vec3 eye = center + Vec3{radius * ce * std::cos(azimuth),
                                   radius * ce * std::sin(azimuth),
                                   radius * std::sin(elevation)};
    UnitQuaternion q = geometry::look_at_rotation(eye, center, {0.0, 0.0, 1.0});

    Vec3 axis{rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)};
    const double angle = std::abs(rng.normal(0.0, band.jitter_sigma));
    if (axis.norm() < 1e-12) axis = {1.0, 0.0, 0.0};
    q = geometry::quat_multiply(q, UnitQuaternion::from_axis_angle(axis.normalized(), angle));
    return {eye, q};
}

nlohmann::json scene_to_json(const SceneSpec& scene) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& s : scene.target.shapes) shapes.push_back(shape_to_json(s));
    nlohmann::json walls = nlohmann::json::array();
    for (const auto& w : scene.enclosure.walls) walls.push_back(shape_to_json(w));
    return {{"seed", scene.seed},
            {"depth_noise_sigma", scene.depth_noise_sigma},
            {"dropout_rate", scene.dropout_rate},
            {"target",
             {{"category_id", scene.target.category_id},
              {"scale", scene.target.scale},
              {"pose", pose_to_json(scene.target.pose)},
              {"shapes", shapes}}},
            {"enclosure",
             {{"opening_dir",
               {scene.enclosure.opening_dir.x, scene.enclosure.opening_dir.y,
                scene.enclosure.opening_dir.z}},
              {"elevation_max", scene.enclosure.elevation_max},
              {"walls", walls}}}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec scene;
    scene.seed = j.at("seed");
    scene.depth_noise_sigma = j.at("depth_noise_sigma");
    scene.dropout_rate = j.at("dropout_rate");
    const auto& t = j.at("target");
    scene.target.category_id = t.at("category_id");
    scene.target.scale = t.at("scale");
    scene.target.pose = pose_from_json(t.at("pose"));
    for (const auto& s : t.at("shapes")) scene.target.shapes.push_back(shape_from_json(s));
    const auto& e = j.at("enclosure");
    const auto& dir = e.at("opening_dir");
    scene.enclosure.opening_dir = {dir.at(0), dir.at(1), dir.at(2)};
    scene.enclosure.elevation_max = e.at("elevation_max");
    for (const auto& w : e.at("walls")) scene.enclosure.walls.push_back(shape_from_json(w));
    return scene;
}

}  // namespace optiview::scene
