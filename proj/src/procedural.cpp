#include <cmath>
#include <vector>

#include "optiview/errors.hpp"
#include "optiview/scene.hpp"

// Shape-composition templates for procedural objects. Every object stands
// on the z = 0 plane of its own frame with the origin at the base center.
// Categories sharing a template differ by a proportion variant (width and
// height factors), and every dimension gets a small deterministic jitter
// from the category/seed RNG stream, so two categories never coincide and
// two seeds of one category are near-but-not-identical instances.

namespace optiview::scene {
namespace {

using geometry::UnitQuaternion;

// Proportion factors for a category variant: wf scales footprint (x, y),
// hf scales heights (z).
struct Dims {
    double wf = 1.0;
    double hf = 1.0;
};

PrimitiveShape make_box(double hx, double hy, double hz, Vec3 center,
                        UnitQuaternion q = UnitQuaternion::identity()) {
    PrimitiveShape s;
    s.kind = ShapeKind::kBox;
    s.a = hx;
    s.b = hy;
    s.c = hz;
    s.local_pose = {center, q};
    return s;
}

PrimitiveShape make_cyl(double r, double half_h, Vec3 center,
                        UnitQuaternion q = UnitQuaternion::identity()) {
    PrimitiveShape s;
    s.kind = ShapeKind::kCylinder;
    s.a = r;
    s.c = half_h;
    s.local_pose = {center, q};
    return s;
}

PrimitiveShape make_sph(double r, Vec3 center) {
    PrimitiveShape s;
    s.kind = ShapeKind::kSphere;
    s.a = r;
    s.local_pose = {center, UnitQuaternion::identity()};
    return s;
}

PrimitiveShape make_cone(double r_bottom, double r_top, double half_h, Vec3 center,
                         UnitQuaternion q = UnitQuaternion::identity()) {
    PrimitiveShape s;
    s.kind = ShapeKind::kCappedCone;
    s.a = r_bottom;
    s.b = r_top;
    s.c = half_h;
    s.local_pose = {center, q};
    return s;
}

double jit(RngStream& rng) { return rng.uniform(0.92, 1.08); }

// --- similar-set templates -------------------------------------------------

// Cylinder body plus a handle arc of boxes approximating a torus segment.
std::vector<PrimitiveShape> build_mug(RngStream& rng, Dims d) {
    const double r = 0.036 * d.wf * jit(rng);
    const double hh = 0.045 * d.hf * jit(rng);
    const double arc_r = 0.018 * d.wf * jit(rng);
    std::vector<PrimitiveShape> shapes;
    shapes.push_back(make_cyl(r, hh, {0, 0, hh}));
    const Vec3 arc_center{r + 0.006, 0, hh};
    for (int k = 0; k < 4; ++k) {
        const double beta = (75.0 - 50.0 * k) * M_PI / 180.0;
        const Vec3 c = arc_center + Vec3{arc_r * std::cos(beta), 0, arc_r * std::sin(beta)};
        shapes.push_back(make_box(0.005, 0.005, 0.011, c,
                                  UnitQuaternion::from_axis_angle({0, 1, 0}, -beta)));
    }
    return shapes;
}

std::vector<PrimitiveShape> build_bottle(RngStream& rng, Dims d) {
    const double r = 0.030 * d.wf * jit(rng);
    const double hh = 0.055 * d.hf * jit(rng);
    const double neck_hh = 0.020 * d.hf * jit(rng);
    const double neck_r = 0.012 * d.wf;
    return {make_cyl(r, hh, {0, 0, hh}),
            make_cone(r, neck_r, neck_hh, {0, 0, 2 * hh + neck_hh}),
            make_cyl(neck_r + 0.002, 0.008, {0, 0, 2 * hh + 2 * neck_hh + 0.008})};
}

std::vector<PrimitiveShape> build_crate(RngStream& rng, Dims d) {
    const double hx = 0.045 * d.wf * jit(rng);
    const double hy = 0.036 * d.wf * jit(rng);
    const double hz = 0.050 * d.hf * jit(rng);
    return {make_box(hx, hy, hz, {0, 0, hz})};
}

std::vector<PrimitiveShape> build_bowl(RngStream& rng, Dims d) {
    const double rb = 0.026 * d.wf * jit(rng);
    const double rt = 0.056 * d.wf * jit(rng);
    const double hh = 0.028 * d.hf * jit(rng);
    return {make_cone(rb, rt, hh, {0, 0, hh})};
}

std::vector<PrimitiveShape> build_can(RngStream& rng, Dims d) {
    const double r = 0.032 * d.wf * jit(rng);
    const double hh = 0.050 * d.hf * jit(rng);
    return {make_cyl(r, hh, {0, 0, hh}),
            make_cyl(r + 0.003, 0.004, {0, 0, 2 * hh + 0.004})};
}

std::vector<PrimitiveShape> build_bracket(RngStream& rng, Dims d) {
    const double foot_h = 0.010 * d.hf * jit(rng);
    const double wall_h = 0.055 * d.hf * jit(rng);
    const double hy = 0.035 * d.wf * jit(rng);
    return {make_box(0.035 * d.wf, hy, foot_h, {0.003, 0, foot_h}),
            make_box(0.012, hy, wall_h, {-0.020 * d.wf, 0, wall_h})};
}

std::vector<PrimitiveShape> build_hammer(RngStream& rng, Dims d) {
    const double handle_hh = 0.055 * d.hf * jit(rng);
    const double head_hx = 0.032 * d.wf * jit(rng);
    return {make_box(0.010, 0.010, handle_hh, {0, 0, handle_hh}),
            make_box(head_hx, 0.014, 0.013, {0, 0, 2 * handle_hh + 0.012})};
}

std::vector<PrimitiveShape> build_dumbbell(RngStream& rng, Dims d) {
    const double r = 0.024 * d.wf * jit(rng);
    const double gap = 0.033 * d.wf * jit(rng);
    const UnitQuaternion axis_x = UnitQuaternion::from_axis_angle({0, 1, 0}, M_PI / 2);
    return {make_sph(r, {-gap, 0, r}), make_sph(r, {gap, 0, r}),
            make_cyl(0.010, gap, {0, 0, r}, axis_x)};
}

std::vector<PrimitiveShape> build_cup(RngStream& rng, Dims d) {
    const double rb = 0.020 * d.wf * jit(rng);
    const double rt = 0.042 * d.wf * jit(rng);
    const double hh = 0.048 * d.hf * jit(rng);
    return {make_cone(rb, rt, hh, {0, 0, hh})};
}

std::vector<PrimitiveShape> build_stack(RngStream& rng, Dims d) {
    const double base_hz = 0.028 * d.hf * jit(rng);
    const double top_hz = 0.030 * d.hf * jit(rng);
    return {make_box(0.042 * d.wf, 0.034 * d.wf, base_hz, {0, 0, base_hz}),
            make_box(0.026 * d.wf, 0.022 * d.wf, top_hz,
                     {0, 0, 2 * base_hz + top_hz})};
}

std::vector<PrimitiveShape> build_lamp(RngStream& rng, Dims d) {
    const double base_r = 0.040 * d.wf * jit(rng);
    const double pole_hh = 0.045 * d.hf * jit(rng);
    const double shade_hh = 0.022 * d.hf * jit(rng);
    const double z0 = 0.012;
    return {make_cyl(base_r, 0.006, {0, 0, 0.006}),
            make_cyl(0.007, pole_hh, {0, 0, z0 + pole_hh}),
            make_cone(0.040 * d.wf, 0.018 * d.wf, shade_hh,
                      {0, 0, z0 + 2 * pole_hh + shade_hh})};
}

std::vector<PrimitiveShape> build_ball_stand(RngStream& rng, Dims d) {
    const double base_hz = 0.012 * d.hf * jit(rng);
    const double r = 0.034 * d.wf * jit(rng);
    return {make_box(0.030 * d.wf, 0.030 * d.wf, base_hz, {0, 0, base_hz}),
            make_sph(r, {0, 0, 2 * base_hz + r - 0.004})};
}

std::vector<PrimitiveShape> build_easel(RngStream& rng, Dims d) {
    const double base_hz = 0.008 * d.hf * jit(rng);
    const double back_hz = 0.048 * d.hf * jit(rng);
    return {make_box(0.040 * d.wf, 0.030 * d.wf, base_hz, {0, 0, base_hz}),
            make_box(0.036 * d.wf, 0.008, back_hz,
                     {0, -0.015 * d.wf, 2 * base_hz + back_hz})};
}

// --- novel-set templates (never used by similar categories) ----------------

std::vector<PrimitiveShape> build_ring(RngStream& rng, Dims d) {
    const double ring_r = 0.040 * d.wf * jit(rng);
    const double seg_hz = 0.020 * d.hf * jit(rng);
    std::vector<PrimitiveShape> shapes;
    shapes.push_back(make_cyl(ring_r + 0.008, 0.010, {0, 0, 0.010}));
    for (int k = 0; k < 6; ++k) {
        const double yaw = k * M_PI / 3.0;
        const Vec3 c{ring_r * std::cos(yaw), ring_r * std::sin(yaw), 0.020 + seg_hz};
        shapes.push_back(make_box(0.015, 0.018, seg_hz, c,
                                  UnitQuaternion::from_axis_angle({0, 0, 1}, yaw)));
    }
    return shapes;
}

std::vector<PrimitiveShape> build_h_frame(RngStream& rng, Dims d) {
    const double leg_hz = 0.045 * d.hf * jit(rng);
    const double span = 0.030 * d.wf * jit(rng);
    return {make_box(0.010, 0.012, leg_hz, {-span, 0, leg_hz}),
            make_box(0.010, 0.012, leg_hz, {span, 0, leg_hz}),
            make_box(span + 0.010, 0.010, 0.008, {0, 0, leg_hz})};
}

std::vector<PrimitiveShape> build_goblet(RngStream& rng, Dims d) {
    const double base_r = 0.034 * d.wf * jit(rng);
    const double stem_hh = 0.020 * d.hf * jit(rng);
    const double cup_hh = 0.022 * d.hf * jit(rng);
    const double z_stem = 0.024;
    return {make_cone(base_r, 0.010, 0.012, {0, 0, 0.012}),
            make_cyl(0.008, stem_hh, {0, 0, z_stem + stem_hh}),
            make_cone(0.012, 0.036 * d.wf, cup_hh,
                      {0, 0, z_stem + 2 * stem_hh + cup_hh})};
}

std::vector<PrimitiveShape> build_plus(RngStream& rng, Dims d) {
    const double arm = 0.038 * d.wf * jit(rng);
    const double arm_hz = 0.014 * d.hf * jit(rng);
    const double z = 0.016 + arm_hz;
    return {make_box(0.040 * d.wf, 0.040 * d.wf, 0.008, {0, 0, 0.008}),
            make_box(arm, 0.011, arm_hz, {0, 0, z}),
            make_box(0.011, arm, arm_hz, {0, 0, z})};
}

std::vector<PrimitiveShape> build_arch(RngStream& rng, Dims d) {
    const double leg_hz = 0.042 * d.hf * jit(rng);
    const double span = 0.032 * d.wf * jit(rng);
    return {make_box(0.010, 0.025 * d.wf, leg_hz, {-span, 0, leg_hz}),
            make_box(0.010, 0.025 * d.wf, leg_hz, {span, 0, leg_hz}),
            make_box(span + 0.012, 0.025 * d.wf, 0.010, {0, 0, 2 * leg_hz + 0.010})};
}

std::vector<PrimitiveShape> build_cone_ball(RngStream& rng, Dims d) {
    const double rb = 0.040 * d.wf * jit(rng);
    const double hh = 0.032 * d.hf * jit(rng);
    const double ball_r = 0.020 * d.wf * jit(rng);
    return {make_cone(rb, 0.016, hh, {0, 0, hh}),
            make_sph(ball_r, {0, 0, 2 * hh + ball_r - 0.006})};
}

using Builder = std::vector<PrimitiveShape> (*)(RngStream&, Dims);

constexpr int kSimilarTemplates = 13;
constexpr int kNovelTemplates = 6;

const Builder kSimilarBuilders[kSimilarTemplates] = {
    build_mug,     build_bottle, build_crate, build_bowl,  build_can,
    build_bracket, build_hammer, build_dumbbell, build_cup, build_stack,
    build_lamp,    build_ball_stand, build_easel,
};

const Builder kNovelBuilders[kNovelTemplates] = {
    build_ring, build_h_frame, build_goblet, build_plus, build_arch, build_cone_ball,
};

static_assert(kSimilarCategories == kSimilarTemplates * 5,
              "similar categories = templates x 5 proportion variants");
static_assert(kNovelCategories == kNovelTemplates * 3,
              "novel categories = templates x 3 proportion variants");

constexpr std::uint64_t kObjectStreamTag = 0x6f626a;  // "obj"

}  // namespace

bool is_novel_category(int category_id) {
    return category_id >= kSimilarCategories && category_id < kTotalCategories;
}

int template_id(int category_id) {
    if (category_id < 0 || category_id >= kTotalCategories)
        throw UnknownCategory("category id out of range: " + std::to_string(category_id));
    if (category_id < kSimilarCategories) return category_id % kSimilarTemplates;
    return kSimilarTemplates + (category_id - kSimilarCategories) % kNovelTemplates;
}

ObjectSpec make_procedural_object(int category_id, std::uint64_t rng_seed) {
    const int tmpl = template_id(category_id);
    RngStream rng = RngStream(rng_seed).derive(kObjectStreamTag, static_cast<std::uint64_t>(category_id));

    Dims dims;
    Builder builder = nullptr;
    if (category_id < kSimilarCategories) {
        const int variant = category_id / kSimilarTemplates;  // 0..4
        dims = {1.10 - 0.05 * variant, 0.80 + 0.10 * variant};
        builder = kSimilarBuilders[tmpl];
    } else {
        const int variant = (category_id - kSimilarCategories) / kNovelTemplates;  // 0..2
        dims = {1.08 - 0.08 * variant, 0.85 + 0.12 * variant};
        builder = kNovelBuilders[tmpl - kSimilarTemplates];
    }

    ObjectSpec spec;
    spec.category_id = category_id;
    spec.scale = 1.0;
    spec.pose = {Vec3{0, 0, 0}, UnitQuaternion::identity()};
    spec.shapes = builder(rng, dims);
    return spec;
}

}  // namespace optiview::scene
