#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "optiview/geometry.hpp"
#include "optiview/rng.hpp"

namespace optiview::scene {

using geometry::Pose;
using geometry::UnitQuaternion;
using geometry::Vec3;

enum class ShapeKind { kBox, kCylinder, kSphere, kCappedCone };

// Convex primitive in its own local frame (z is the symmetry axis).
// Size parameters by kind:
//   Box:        a, b, c = half extents along x, y, z
//   Cylinder:   a = radius, c = half height
//   Sphere:     a = radius
//   CappedCone: a = bottom radius, b = top radius, c = half height
struct PrimitiveShape {
    ShapeKind kind = ShapeKind::kBox;
    double a = 0.0, b = 0.0, c = 0.0;
    Pose local_pose;  // shape frame -> object frame (or world frame for walls)
};

struct ObjectSpec {
    int category_id = 0;
    std::vector<PrimitiveShape> shapes;
    double scale = 1.0;
    Pose pose;  // object frame -> world; origin at the base center
};

struct EnclosureSpec {
    std::vector<PrimitiveShape> walls;  // world-frame slabs
    Vec3 opening_dir{1.0, 0.0, 0.0};
    // Any ray to the object from elevation above this (radians) hits a wall.
    double elevation_max = 0.0;
};

struct SceneSpec {
    ObjectSpec target;
    EnclosureSpec enclosure;
    double depth_noise_sigma = 0.0;  // meters
    double dropout_rate = 0.0;       // [0, 1]
    std::uint64_t seed = 0;
};

struct CameraIntrinsics {
    double fx = 140.0, fy = 140.0;
    double cx = 80.0, cy = 60.0;
    int width = 160, height = 120;

    CameraIntrinsics scaled_to(int new_width, int new_height) const;
};

// What the camera sees from one pose. `points` is exactly the
// back-projection of masked pixels with a valid depth return.
struct Observation {
    int width = 0, height = 0;
    std::vector<float> depth;         // row-major, meters along the optical axis, 0 = miss
    std::vector<std::uint8_t> mask;   // row-major, 1 = target
    std::vector<Vec3> points;         // camera frame
    Pose camera;
    int target_id = 0;
};

// Category layout: [0, kSimilarCategories) are "similar" (training)
// categories; [kSimilarCategories, kSimilarCategories+kNovelCategories)
// are "novel" (held-out) categories built from a disjoint template set.
inline constexpr int kSimilarCategories = 65;
inline constexpr int kNovelCategories = 18;
inline constexpr int kTotalCategories = kSimilarCategories + kNovelCategories;

bool is_novel_category(int category_id);

// Index of the shape-composition template behind a category. Similar and
// novel categories draw from disjoint template sets.
int template_id(int category_id);

// Deterministic primitive composition for (category_id, rng_seed).
// Throws UnknownCategory for ids outside [0, kTotalCategories).
ObjectSpec make_procedural_object(int category_id, std::uint64_t rng_seed);

// Derived object properties (object frame, at scale = spec.scale).
Vec3 object_aim_point(const ObjectSpec& spec);       // approx center, object frame
double object_bound_radius(const ObjectSpec& spec);  // from the origin
double object_surface_area(const ObjectSpec& spec);  // sum of primitive areas
// Axis-aligned bounds in the object frame (before pose, after scale).
void object_local_bounds(const ObjectSpec& spec, Vec3& lo, Vec3& hi);

// World-frame aim point (object center) of a scene's target.
Vec3 scene_aim_point(const SceneSpec& scene);

// Five-sided open-front shelf; interior x in [-depth/2, depth/2],
// y in [-width/2, width/2], z in [0, height], opening toward +x.
EnclosureSpec make_shelf_enclosure(double depth, double width, double height,
                                   double wall_thickness, double elevation_max);

struct ViewBand {
    double radius_min = 0.35, radius_max = 0.75;       // meters
    double elevation_min = 0.0873, elevation_max = 0.96;  // radians
    double azimuth_half_angle = M_PI;  // about the enclosure opening direction
    double jitter_sigma = 0.0;         // radians, orientation perturbation
};

// Random viewpoint on the spherical band around the target's aim point,
// oriented at the aim point and then perturbed by a random axis-angle
// rotation with angle ~ |N(0, jitter_sigma)|.
Pose sample_side_viewpoint(const SceneSpec& scene, const ViewBand& band, RngStream& rng);

// One-document JSON serialization of a full scene (all fields + seed).
nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);

}  // namespace optiview::scene
