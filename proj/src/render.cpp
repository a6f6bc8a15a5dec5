#include "optiview/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "optiview/errors.hpp"

namespace optiview::scene {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRayEps = 1e-9;

struct Mat3 {
    double m[3][3];
    Vec3 apply(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }
};

Mat3 transpose_of(const std::array<std::array<double, 3>, 3>& r) {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.m[i][j] = r[j][i];
    return out;
}

Mat3 mul_scaled(const Mat3& a, const Mat3& b, double s) {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a.m[i][k] * b.m[k][j];
            out.m[i][j] = acc * s;
        }
    return out;
}

// World ray -> shape-local ray with the ray parameter preserved, plus a
// world-frame bounding sphere for a cheap reject before the exact test.
struct ScenePrim {
    Mat3 world_to_local;    // includes inverse scale
    Vec3 offset;            // p_local = world_to_local * p_world + offset
    const PrimitiveShape* shape;
    bool is_target;
    Vec3 bound_center;      // world frame
    double bound_radius_sq;
};

double local_bound_radius(const PrimitiveShape& s) {
    switch (s.kind) {
        case ShapeKind::kBox:
            return std::sqrt(s.a * s.a + s.b * s.b + s.c * s.c);
        case ShapeKind::kCylinder:
            return std::sqrt(s.a * s.a + s.c * s.c);
        case ShapeKind::kSphere:
            return s.a;
        case ShapeKind::kCappedCone: {
            const double r = std::max(s.a, s.b);
            return std::sqrt(r * r + s.c * s.c);
        }
    }
    return 0.0;
}

void append_prims(std::vector<ScenePrim>& prims, const std::vector<PrimitiveShape>& shapes,
                  const Pose& frame, double scale, bool is_target) {
    const Mat3 R_frame_t = transpose_of(frame.rotation.rotation_matrix());
    for (const auto& s : shapes) {
        const Mat3 R_shape_t = transpose_of(s.local_pose.rotation.rotation_matrix());
        ScenePrim p;
        p.world_to_local = mul_scaled(R_shape_t, R_frame_t, 1.0 / scale);
        const Vec3 a = p.world_to_local.apply(frame.translation);
        const Vec3 b = R_shape_t.apply(s.local_pose.translation);
        p.offset = -a - b;
        p.shape = &s;
        p.is_target = is_target;
        p.bound_center =
            frame.translation +
            geometry::rotate_vector(frame.rotation, s.local_pose.translation * scale);
        const double r = local_bound_radius(s) * scale + 1e-9;
        p.bound_radius_sq = r * r;
        prims.push_back(p);
    }
}

// Smallest root of A t^2 + B t + C = 0 greater than kRayEps satisfying
// `valid`, else infinity.
template <typename F>
double quadratic_hit(double A, double B, double C, const F& valid) {
    double best = kInf;
    if (std::abs(A) < 1e-14) {
        if (std::abs(B) > 1e-14) {
            const double t = -C / B;
            if (t > kRayEps && valid(t)) best = t;
        }
        return best;
    }
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return kInf;
    const double sq = std::sqrt(disc);
    // Stable pair of roots regardless of the sign of B.
    const double q = -0.5 * (B + (B >= 0.0 ? sq : -sq));
    double t0 = q / A, t1 = (std::abs(q) > 1e-300) ? C / q : kInf;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > kRayEps && valid(t0)) best = t0;
    else if (t1 > kRayEps && valid(t1)) best = t1;
    return best;
}

double hit_box(const PrimitiveShape& s, const Vec3& o, const Vec3& d) {
    double tmin = -kInf, tmax = kInf;
    const double oo[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double hh[3] = {s.a, s.b, s.c};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dd[i]) < 1e-14) {
            if (std::abs(oo[i]) > hh[i]) return kInf;
            continue;
        }
        double t0 = (-hh[i] - oo[i]) / dd[i];
        double t1 = (hh[i] - oo[i]) / dd[i];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmax < tmin) return kInf;
    }
    if (tmax < kRayEps) return kInf;
    return tmin > kRayEps ? tmin : tmax;  // starting inside hits the exit face
}

double hit_sphere(const PrimitiveShape& s, const Vec3& o, const Vec3& d) {
    return quadratic_hit(d.dot(d), 2.0 * o.dot(d), o.dot(o) - s.a * s.a,
                         [](double) { return true; });
}

double hit_disc(double z_plane, double radius, const Vec3& o, const Vec3& d) {
    if (std::abs(d.z) < 1e-14) return kInf;
    const double t = (z_plane - o.z) / d.z;
    if (t <= kRayEps) return kInf;
    const double x = o.x + t * d.x, y = o.y + t * d.y;
    return (x * x + y * y <= radius * radius) ? t : kInf;
}

double hit_cylinder(const PrimitiveShape& s, const Vec3& o, const Vec3& d) {
    const double r = s.a, h = s.c;
    double best = quadratic_hit(
        d.x * d.x + d.y * d.y, 2.0 * (o.x * d.x + o.y * d.y),
        o.x * o.x + o.y * o.y - r * r,
        [&](double t) { return std::abs(o.z + t * d.z) <= h; });
    best = std::min(best, hit_disc(-h, r, o, d));
    best = std::min(best, hit_disc(h, r, o, d));
    return best;
}

double hit_capped_cone(const PrimitiveShape& s, const Vec3& o, const Vec3& d) {
    const double rb = s.a, rt = s.b, h = s.c;
    // Radius varies linearly in z: r(z) = m + n * t along the ray.
    const double k = (rt - rb) / (2.0 * h);
    const double m = rb + k * (o.z + h);
    const double n = k * d.z;
    double best = quadratic_hit(
        d.x * d.x + d.y * d.y - n * n,
        2.0 * (o.x * d.x + o.y * d.y - m * n),
        o.x * o.x + o.y * o.y - m * m,
        [&](double t) {
            const double z = o.z + t * d.z;
            return z >= -h && z <= h && m + n * t >= 0.0;
        });
    if (rb > 0.0) best = std::min(best, hit_disc(-h, rb, o, d));
    if (rt > 0.0) best = std::min(best, hit_disc(h, rt, o, d));
    return best;
}

double hit_shape(const PrimitiveShape& s, const Vec3& o, const Vec3& d) {
    switch (s.kind) {
        case ShapeKind::kBox: return hit_box(s, o, d);
        case ShapeKind::kSphere: return hit_sphere(s, o, d);
        case ShapeKind::kCylinder: return hit_cylinder(s, o, d);
        case ShapeKind::kCappedCone: return hit_capped_cone(s, o, d);
    }
    return kInf;
}

bool bound_may_hit(const ScenePrim& p, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - p.bound_center;
    const double c = oc.dot(oc) - p.bound_radius_sq;
    if (c <= 0.0) return true;  // ray starts inside the bound
    const double b = oc.dot(d);
    if (b > 0.0) return false;  // moving away
    return b * b >= d.dot(d) * c;
}

struct RenderRaw {
    std::vector<float> depth;
    std::vector<std::uint8_t> mask;
};

RenderRaw render_core(const SceneSpec& scene, const Pose& camera,
                      const CameraIntrinsics& intr) {
    if (intr.width <= 0 || intr.height <= 0 || intr.fx <= 0 || intr.fy <= 0)
        throw DataError("invalid camera intrinsics");

    std::vector<ScenePrim> prims;
    prims.reserve(scene.target.shapes.size() + scene.enclosure.walls.size());
    append_prims(prims, scene.target.shapes, scene.target.pose, scene.target.scale, true);
    static const Pose kIdentityPose{};
    append_prims(prims, scene.enclosure.walls, kIdentityPose, 1.0, false);

    const auto R = camera.rotation.rotation_matrix();
    const Vec3 col_x{R[0][0], R[1][0], R[2][0]};
    const Vec3 col_y{R[0][1], R[1][1], R[2][1]};
    const Vec3 col_z{R[0][2], R[1][2], R[2][2]};
    const Vec3& origin = camera.translation;

    RenderRaw out;
    out.depth.assign(static_cast<size_t>(intr.width) * intr.height, 0.0f);
    out.mask.assign(out.depth.size(), 0);

    // Local-frame ray origins per primitive are pixel-independent.
    std::vector<Vec3> local_origins(prims.size());
    for (size_t i = 0; i < prims.size(); ++i)
        local_origins[i] = prims[i].world_to_local.apply(origin) + prims[i].offset;

    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            // Ray through the integer pixel coordinate; the parameter t is
            // the distance along the optical axis because dir_cam.z = -1.
            const double xc = (u - intr.cx) / intr.fx;
            const double yc = (v - intr.cy) / intr.fy;
            const Vec3 dir = col_x * xc + col_y * yc - col_z;

            double best_t = kInf;
            bool best_target = false;
            for (size_t i = 0; i < prims.size(); ++i) {
                if (!bound_may_hit(prims[i], origin, dir)) continue;
                const Vec3 dl = prims[i].world_to_local.apply(dir);
                const double t = hit_shape(*prims[i].shape, local_origins[i], dl);
                if (t < best_t) {
                    best_t = t;
                    best_target = prims[i].is_target;
                }
            }
            if (best_t < kInf) {
                const size_t idx = static_cast<size_t>(v) * intr.width + u;
                out.depth[idx] = static_cast<float>(best_t);
                out.mask[idx] = best_target ? 1 : 0;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<float> render_depth(const SceneSpec& scene, const Pose& camera,
                                const CameraIntrinsics& intr) {
    return render_core(scene, camera, intr).depth;
}

std::vector<std::uint8_t> render_mask(const SceneSpec& scene, const Pose& camera,
                                      const CameraIntrinsics& intr) {
    return render_core(scene, camera, intr).mask;
}

std::vector<Vec3> depth_to_pointcloud(const std::vector<float>& depth,
                                      const std::vector<std::uint8_t>& mask,
                                      const CameraIntrinsics& intr) {
    const size_t n = static_cast<size_t>(intr.width) * intr.height;
    if (depth.size() != n || mask.size() != n)
        throw ShapeMismatch("depth/mask size does not match intrinsics");
    std::vector<Vec3> points;
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const size_t idx = static_cast<size_t>(v) * intr.width + u;
            if (!mask[idx] || depth[idx] <= 0.0f) continue;
            const double d = depth[idx];
            points.push_back({d * (u - intr.cx) / intr.fx, d * (v - intr.cy) / intr.fy, -d});
        }
    }
    return points;
}

Observation observe(const SceneSpec& scene, const Pose& camera,
                    const CameraIntrinsics& intr, RngStream& rng) {
    RenderRaw raw = render_core(scene, camera, intr);

    // Advance the caller's stream once, then branch independent child
    // streams so the dropout pattern does not depend on how many noise
    // draws happened.
    const RngStream sub = rng.derive(rng.next_u64());
    RngStream noise = sub.derive(1);
    RngStream drop = sub.derive(2);
    const size_t n = raw.depth.size();
    for (size_t i = 0; i < n; ++i) {
        if (raw.depth[i] <= 0.0f) continue;
        if (scene.depth_noise_sigma > 0.0) {
            const double noisy = raw.depth[i] + noise.normal(0.0, scene.depth_noise_sigma);
            raw.depth[i] = static_cast<float>(std::max(noisy, 1e-6));
        }
        if (scene.dropout_rate > 0.0 && drop.bernoulli(scene.dropout_rate))
            raw.depth[i] = 0.0f;  // sensor hole; the mask label is kept
    }

    Observation obs;
    obs.width = intr.width;
    obs.height = intr.height;
    obs.depth = std::move(raw.depth);
    obs.mask = std::move(raw.mask);
    obs.points = depth_to_pointcloud(obs.depth, obs.mask, intr);
    obs.camera = camera;
    obs.target_id = scene.target.category_id;
    if (obs.points.empty())
        throw EmptyObservation("no target pixel produced a depth return");
    return obs;
}

}  // namespace optiview::scene
