#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <vector>

#include "optiview/errors.hpp"
#include "optiview/render.hpp"
#include "optiview/rng.hpp"
#include "optiview/viewscore.hpp"

using namespace optiview;
using namespace optiview::viewscore;
using geometry::Pose;
using geometry::Vec3;
using scene::CameraIntrinsics;
using scene::Observation;
using scene::PrimitiveShape;
using scene::SceneSpec;
using scene::ShapeKind;
using scene::ViewBand;

namespace {

// ---------------------------------------------------------------------------
// Test scaffolding

Observation cloud_observation(std::vector<Vec3> points) {
    Observation obs;
    obs.width = 1;
    obs.height = 1;
    obs.points = std::move(points);
    return obs;
}

// Two 10x10 point grids in x = +-gap/2 planes (a slab seen edge-on), plus a
// single such grid on its own. Spacing keeps k-nearest neighborhoods within
// one plate.
std::vector<Vec3> plate_points(double x, double z_center) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            pts.push_back({x, (i - 4.5) * 0.004, z_center + (j - 4.5) * 0.004});
    return pts;
}

// Straight re-derivation of the surrogate from its definition: estimated
// normals, exhaustive pair enumeration, full sort, top-k mean, coverage.
double oracle_surrogate(const Observation& obs, double gripper_width, double antipodal_tol,
                        int top_k, int normal_knn, double expected_points) {
    if (obs.points.empty()) return 0.0;
    std::vector<Vec3> normals;
    std::vector<double> planarity;
    estimate_normals(obs.points, normal_knn, normals, planarity);
    const double cos_tol = std::cos(antipodal_tol);
    std::vector<double> scores;
    const int n = static_cast<int>(obs.points.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Vec3 d = obs.points[j] - obs.points[i];
            const double len = d.norm();
            if (len > gripper_width || len < 1e-4) continue;
            const Vec3 axis = d / len;
            const double a1 = std::abs(normals[i].dot(axis));
            const double a2 = std::abs(normals[j].dot(axis));
            const double opp = -normals[i].dot(normals[j]);
            if (a1 < cos_tol || a2 < cos_tol || opp < cos_tol) continue;
            scores.push_back(a1 * a2 * opp * planarity[i] * planarity[j]);
        }
    }
    if (scores.empty()) return 0.0;
    std::sort(scores.begin(), scores.end(), std::greater<double>());
    const int keep = std::min<int>(top_k, scores.size());
    double mean = std::accumulate(scores.begin(), scores.begin() + keep, 0.0) / keep;
    if (expected_points > 0.0)
        mean *= std::clamp(static_cast<double>(obs.points.size()) / expected_points, 0.0, 1.0);
    return mean;
}

// Independent DBSCAN: neighbor graph, union-find over core points, clusters
// renumbered by their smallest core index, borders to the lowest adjacent
// cluster id. This canonical form must coincide with the library's output.
std::vector<int> oracle_dbscan(const std::vector<Vec3>& pts, double eps, int min_pts) {
    const int n = static_cast<int>(pts.size());
    std::vector<std::vector<int>> nb(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if ((pts[j] - pts[i]).squared_norm() <= eps * eps) nb[i].push_back(j);

    std::vector<char> core(n, 0);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(nb[i].size()) >= min_pts;

    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (int j : nb[i])
            if (core[j]) parent[find(i)] = find(j);
    }

    // Components in ascending order of their smallest core member.
    std::vector<int> comp_id(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i)
        if (core[i] && comp_id[find(i)] == -1) comp_id[find(i)] = next++;

    std::vector<int> labels(n, kNoise);
    for (int i = 0; i < n; ++i)
        if (core[i]) labels[i] = comp_id[find(i)];
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = kNoise;
        for (int j : nb[i])
            if (core[j] && (best == kNoise || comp_id[find(j)] < best)) best = comp_id[find(j)];
        labels[i] = best;
    }
    return labels;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (i + j) + 1.0;  // 1-based
        for (int k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
    const int n = static_cast<int>(a.size());
    double ma = 0, mb = 0;
    for (int i = 0; i < n; ++i) ma += ra[i], mb += rb[i];
    ma /= n, mb /= n;
    double num = 0, da = 0, db = 0;
    for (int i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

SceneSpec bare_sphere_scene(double radius) {
    SceneSpec scn;
    scn.target.category_id = 0;
    scn.target.shapes.push_back({ShapeKind::kSphere, radius, 0, 0, Pose{}});
    return scn;
}

// Score = number of surviving target points; deterministic and cheap.
struct CountEvaluator final : QualityEvaluator {
    double score(const Observation& obs) const override {
        return static_cast<double>(obs.points.size());
    }
    std::string name() const override { return "count"; }
    bool deterministic() const override { return true; }
};

ViewpointSample sample_at(const Vec3& p, double score) {
    ViewpointSample s;
    s.camera.translation = p;
    s.score = score;
    return s;
}

std::string temp_path(const char* stem) {
    return std::string("/tmp/optiview_") + stem + "_" + std::to_string(::getpid()) + ".txt";
}

}  // namespace

// ---------------------------------------------------------------------------
// surrogate_grasp_score

TEST_CASE("empty observation scores zero") {
    CHECK(surrogate_grasp_score(cloud_observation({}), 0.08, 0.35, 10, 12, -1.0) == 0.0);
}

TEST_CASE("parallel plates score positive, a lone plate scores zero") {
    std::vector<Vec3> pair = plate_points(-0.02, -0.4);
    const std::vector<Vec3> right = plate_points(0.02, -0.4);
    pair.insert(pair.end(), right.begin(), right.end());
    const Observation both = cloud_observation(pair);
    const Observation lone = cloud_observation(plate_points(-0.02, -0.4));

    const double s_both = surrogate_grasp_score(both, 0.08, 0.35, 10, 12, -1.0);
    const double s_lone = surrogate_grasp_score(lone, 0.08, 0.35, 10, 12, -1.0);
    CHECK(s_both > 0.0);
    CHECK(s_lone == 0.0);
    CHECK(s_both > s_lone);
    CHECK(s_both == doctest::Approx(oracle_surrogate(both, 0.08, 0.35, 10, 12, -1.0))
                        .epsilon(1e-12));
}

TEST_CASE("surrogate matches the exhaustive pair oracle on random clouds") {
    for (int trial = 0; trial < 10; ++trial) {
        RngStream rng(900 + trial);
        const int n = 60 + static_cast<int>(rng.uniform_index(141));  // <= 200: no thinning
        std::vector<Vec3> pts;
        for (int i = 0; i < n; ++i)
            pts.push_back({rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                           -0.4 + rng.uniform(-0.04, 0.04)});
        const Observation obs = cloud_observation(pts);
        const double expected = trial % 2 == 0 ? -1.0 : 150.0;  // with and without coverage
        CHECK(surrogate_grasp_score(obs, 0.08, 0.5, 10, 12, expected) ==
              doctest::Approx(oracle_surrogate(obs, 0.08, 0.5, 10, 12, expected))
                  .epsilon(1e-12));
    }
}

TEST_CASE("scoring the same observation twice is bit-identical") {
    RngStream rng(77);
    std::vector<Vec3> pts;
    for (int i = 0; i < 150; ++i)
        pts.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                       -0.5 + rng.uniform(-0.02, 0.02)});
    const Observation obs = cloud_observation(pts);
    const ViewScoreConfig cfg;
    const CameraIntrinsics intr;
    const SurrogateGraspEvaluator eval(cfg, intr, 0.05);
    CHECK(eval.deterministic());
    CHECK(eval.score(obs) == eval.score(obs));
    CHECK(surrogate_grasp_score(obs, 0.08, 0.35, 10, 12, 500.0) ==
          surrogate_grasp_score(obs, 0.08, 0.35, 10, 12, 500.0));
}

TEST_CASE("oversized clouds are thinned but still score deterministically") {
    RngStream rng(5150);
    std::vector<Vec3> pts;
    for (int i = 0; i < 1200; ++i)
        pts.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                       -0.5 + rng.uniform(-0.02, 0.02)});
    const Observation obs = cloud_observation(pts);
    const double s = surrogate_grasp_score(obs, 0.1, 0.6, 10, 12, -1.0);
    CHECK(s >= 0.0);
    CHECK(s == surrogate_grasp_score(obs, 0.1, 0.6, 10, 12, -1.0));
}

// ---------------------------------------------------------------------------
// evaluate_candidates

TEST_CASE("candidate evaluation emits one sample per candidate with distinct views") {
    const SceneSpec scn = bare_sphere_scene(0.06);
    const ViewBand band{0.35, 0.75, 0.1, 0.9, 1.0, 0.05};
    const CameraIntrinsics intr;
    const CountEvaluator eval;
    const auto out = evaluate_candidates(scn, band, intr, 3, eval, 2, RngStream(11));
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK(s.n_trials == 2);
    for (size_t i = 0; i < out.size(); ++i)
        for (size_t j = i + 1; j < out.size(); ++j)
            CHECK((out[i].camera.translation - out[j].camera.translation).norm() > 1e-9);

    CHECK_THROWS_AS(evaluate_candidates(scn, band, intr, 0, eval, 1, RngStream(1)), DataError);
    CHECK_THROWS_AS(evaluate_candidates(scn, band, intr, 1, eval, 0, RngStream(1)), DataError);
}

TEST_CASE("with a noiseless scene the trial mean equals the single score") {
    const SceneSpec scn = bare_sphere_scene(0.06);  // sigma = 0, dropout = 0
    const ViewBand band{0.4, 0.6, 0.2, 0.8, 0.8, 0.0};
    const CameraIntrinsics intr;
    const CountEvaluator eval;
    const auto once = evaluate_candidates(scn, band, intr, 4, eval, 1, RngStream(21));
    const auto many = evaluate_candidates(scn, band, intr, 4, eval, 4, RngStream(21));
    REQUIRE(once.size() == many.size());
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK((once[i].camera.translation - many[i].camera.translation).norm() == 0.0);
        CHECK(once[i].score == doctest::Approx(many[i].score).epsilon(1e-14));
    }
}

TEST_CASE("worker count does not change candidate results") {
    const SceneSpec scn = bare_sphere_scene(0.05);
    const ViewBand band{0.35, 0.7, 0.1, 0.9, 1.2, 0.05};
    const CameraIntrinsics intr;
    const CountEvaluator eval;
    const auto serial = evaluate_candidates(scn, band, intr, 8, eval, 2, RngStream(31), 1);
    const auto threaded = evaluate_candidates(scn, band, intr, 8, eval, 2, RngStream(31), 3);
    REQUIRE(serial.size() == threaded.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].score == threaded[i].score);
        CHECK((serial[i].camera.translation - threaded[i].camera.translation).norm() == 0.0);
    }
}

TEST_CASE("fully blocked viewpoints score zero instead of failing") {
    SceneSpec scn = bare_sphere_scene(0.06);
    // A wall slab between the whole candidate band and the target.
    scn.enclosure.walls.push_back(
        {ShapeKind::kBox, 0.025, 2.0, 2.0, Pose{{0.275, 0.0, 0.0}, {}}});
    const ViewBand band{0.4, 0.5, 0.1, 0.2, 0.1, 0.0};
    const CameraIntrinsics intr;
    const CountEvaluator eval;
    const auto out = evaluate_candidates(scn, band, intr, 5, eval, 2, RngStream(41));
    REQUIRE(out.size() == 5);
    for (const auto& s : out) CHECK(s.score == 0.0);
}

TEST_CASE("more repeats per candidate shrink the rerun-to-rerun variance") {
    SceneSpec scn = bare_sphere_scene(0.06);
    scn.depth_noise_sigma = 0.003;
    scn.dropout_rate = 0.4;
    // Degenerate band: every draw lands on the identical viewpoint, so the
    // only variation across reruns is the sensor noise.
    const ViewBand band{0.45, 0.45, 0.4, 0.4, 0.0, 0.0};
    const CameraIntrinsics intr;
    const CountEvaluator eval;

    auto rerun_variance = [&](int repeats) {
        std::vector<double> scores;
        for (int rerun = 0; rerun < 50; ++rerun) {
            const auto out =
                evaluate_candidates(scn, band, intr, 1, eval, repeats, RngStream(5000 + rerun));
            scores.push_back(out[0].score);
        }
        const double mean =
            std::accumulate(scores.begin(), scores.end(), 0.0) / scores.size();
        double var = 0.0;
        for (double s : scores) var += (s - mean) * (s - mean);
        return var / (scores.size() - 1);
    };

    const double v1 = rerun_variance(1);
    const double v5 = rerun_variance(5);
    CHECK(v1 > 0.0);
    CHECK(v5 < v1);
}

// ---------------------------------------------------------------------------
// dbscan

TEST_CASE("a single point with min_pts 1 forms one cluster") {
    const auto labels = dbscan({{0.3, 0.2, 0.1}}, {0.05, 1});
    REQUIRE(labels.size() == 1);
    CHECK(labels[0] == 0);
}

TEST_CASE("two tight blobs a meter apart form exactly two clusters") {
    std::vector<Vec3> pts;
    RngStream rng(61);
    for (int b = 0; b < 2; ++b) {
        const Vec3 center{b * 1.0, 0.0, 0.0};
        for (int i = 0; i < 50; ++i)
            pts.push_back(center + Vec3{rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                                        rng.uniform(-0.02, 0.02)});
    }
    const auto labels = dbscan(pts, {0.1, 8});
    CHECK(*std::max_element(labels.begin(), labels.end()) == 1);
    CHECK(std::count(labels.begin(), labels.end(), kNoise) == 0);
    CHECK(labels == oracle_dbscan(pts, 0.1, 8));
    // Blob membership must follow construction order.
    for (int i = 0; i < 50; ++i) CHECK(labels[i] == 0);
    for (int i = 50; i < 100; ++i) CHECK(labels[i] == 1);
}

TEST_CASE("mutually distant points are all noise") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({i * 1.0, 0.0, 0.0});
    const auto labels = dbscan(pts, {0.5, 2});
    for (int l : labels) CHECK(l == kNoise);
}

TEST_CASE("dbscan rejects invalid input") {
    CHECK_THROWS_AS(dbscan({{0, 0, 0}}, {0.0, 1}), DataError);
    CHECK_THROWS_AS(dbscan({{0, 0, 0}}, {0.1, 0}), DataError);
    const double nan = std::nan("");
    CHECK_THROWS_AS(dbscan({{nan, 0, 0}}, {0.1, 1}), DataError);
}

TEST_CASE("dbscan matches the union-find oracle across instances and settings") {
    const struct { double eps; int min_pts; } settings[5] = {
        {0.05, 3}, {0.08, 2}, {0.12, 8}, {0.2, 5}, {0.3, 1}};
    for (int inst = 0; inst < 50; ++inst) {
        RngStream rng(7000 + inst);
        const int n = 20 + static_cast<int>(rng.uniform_index(181));
        std::vector<Vec3> pts;
        for (int i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)});
        for (const auto& s : settings) {
            CHECK(dbscan(pts, {s.eps, s.min_pts}) == oracle_dbscan(pts, s.eps, s.min_pts));
        }
    }
}

TEST_CASE("permutation only renames labels when there are no border points") {
    // min_pts = 1 makes every point core, so no borders can exist.
    RngStream rng(81);
    const int n = 120;
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
        pts.push_back({rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4)});
    const auto base = dbscan(pts, {0.09, 1});

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    std::vector<Vec3> shuffled(n);
    for (int i = 0; i < n; ++i) shuffled[i] = pts[perm[i]];
    const auto permuted = dbscan(shuffled, {0.09, 1});

    // Same partition: points share a cluster before iff they do after.
    for (int i = 0; i < n; ++i) {
        CHECK(base[perm[i]] != kNoise);
        CHECK(permuted[i] != kNoise);
        for (int j = i + 1; j < n; ++j)
            CHECK((base[perm[i]] == base[perm[j]]) == (permuted[i] == permuted[j]));
    }
}

// ---------------------------------------------------------------------------
// select_optimal_view

TEST_CASE("a single sample is its own optimal view") {
    const Vec3 p{0.4, -0.1, 0.3};
    const auto res = select_optimal_view({sample_at(p, 1.0)}, 10, {0.05, 1}, Pose{});
    CHECK(res.t_best.x == p.x);
    CHECK(res.t_best.y == p.y);
    CHECK(res.t_best.z == p.z);
    CHECK(res.largest_cluster_size == 1);
    REQUIRE(res.labels.size() == 1);
    CHECK(res.labels[0] == 0);
}

TEST_CASE("the larger of two clusters supplies the centroid") {
    std::vector<ViewpointSample> samples;
    RngStream rng(91);
    Vec3 sum_a{0, 0, 0};
    for (int i = 0; i < 30; ++i) {
        const Vec3 p = Vec3{1, 0, 0} + Vec3{rng.uniform(-0.004, 0.004),
                                            rng.uniform(-0.004, 0.004),
                                            rng.uniform(-0.004, 0.004)};
        sum_a += p;
        samples.push_back(sample_at(p, 100.0 - samples.size()));
    }
    for (int i = 0; i < 10; ++i) {
        const Vec3 p = Vec3{0, 1, 0} + Vec3{rng.uniform(-0.004, 0.004),
                                            rng.uniform(-0.004, 0.004),
                                            rng.uniform(-0.004, 0.004)};
        samples.push_back(sample_at(p, 100.0 - samples.size()));
    }
    for (int i = 0; i < 5; ++i)
        samples.push_back(sample_at({5.0 + i, -4.0, 2.0 * i}, 100.0 - samples.size()));

    const auto res = select_optimal_view(samples, 45, {0.05, 4}, Pose{});
    CHECK(res.largest_cluster_size == 30);
    const Vec3 centroid = sum_a / 30.0;
    CHECK(res.t_best.x == doctest::Approx(centroid.x).epsilon(1e-12));
    CHECK(res.t_best.y == doctest::Approx(centroid.y).epsilon(1e-12));
    CHECK(res.t_best.z == doctest::Approx(centroid.z).epsilon(1e-12));
    CHECK(res.cluster_mean_score == doctest::Approx(100.0 - 14.5));
    for (int i = 0; i < 30; ++i) CHECK(res.labels[i] == 0);
    for (int i = 30; i < 40; ++i) CHECK(res.labels[i] == 1);
    for (int i = 40; i < 45; ++i) CHECK(res.labels[i] == kNoise);
}

TEST_CASE("identical sample positions collapse to that exact point") {
    const Vec3 p{0.125, -0.25, 0.5};
    std::vector<ViewpointSample> samples;
    for (int i = 0; i < 30; ++i) samples.push_back(sample_at(p, 1.0 + i));
    const auto res = select_optimal_view(samples, 30, {0.05, 8}, Pose{});
    CHECK(res.t_best.x == p.x);
    CHECK(res.t_best.y == p.y);
    CHECK(res.t_best.z == p.z);
    CHECK(res.largest_cluster_size == 30);
}

TEST_CASE("equal-size clusters break ties by mean score") {
    std::vector<ViewpointSample> samples;
    // Low-mean cluster A contains the single top-scoring sample, so it is
    // discovered first (id 0); higher-mean cluster B must still win.
    samples.push_back(sample_at({1.0, 0.0, 0.0}, 90.0));
    for (int i = 1; i < 8; ++i)
        samples.push_back(sample_at({1.0 + i * 0.004, 0.0, 0.0}, 10.0 - i * 0.5));
    Vec3 sum_b{0, 0, 0};
    for (int i = 0; i < 8; ++i) {
        const Vec3 p{0.0, 1.0 + i * 0.004, 0.0};
        sum_b += p;
        samples.push_back(sample_at(p, 80.0 - i));
    }
    const auto res = select_optimal_view(samples, 16, {0.05, 4}, Pose{});
    CHECK(res.largest_cluster_size == 8);
    const Vec3 centroid = sum_b / 8.0;
    CHECK(res.t_best.y == doctest::Approx(centroid.y).epsilon(1e-12));
    CHECK(res.t_best.x == doctest::Approx(0.0));
    CHECK(res.cluster_mean_score == doctest::Approx(76.5));
}

TEST_CASE("top_n truncation drops low-scoring samples before clustering") {
    std::vector<ViewpointSample> samples;
    // Ten high scorers in a tight cluster, then twenty low scorers in a
    // bigger far-away cluster that truncation must discard.
    for (int i = 0; i < 10; ++i)
        samples.push_back(sample_at({2.0 + i * 0.004, 0.0, 0.0}, 50.0 - i));
    for (int i = 0; i < 20; ++i)
        samples.push_back(sample_at({-3.0 + i * 0.004, 0.0, 0.0}, 20.0 - i * 0.1));
    const auto res = select_optimal_view(samples, 10, {0.05, 4}, Pose{});
    CHECK(res.samples.size() == 10);
    CHECK(res.largest_cluster_size == 10);
    CHECK(res.t_best.x == doctest::Approx(2.0 + 4.5 * 0.004));
}

TEST_CASE("translating every sample translates the optimum exactly") {
    // Dyadic coordinates and a power-of-two cluster size keep the centroid
    // arithmetic exact, so the shift must match bit for bit.
    std::vector<ViewpointSample> base;
    for (int i = 0; i < 32; ++i) base.push_back(sample_at({i / 128.0, 0.0, 0.0}, 100.0 - i));
    for (int i = 0; i < 8; ++i)
        base.push_back(sample_at({i / 128.0, 2.0, 0.0}, 100.0 - 32 - i));
    for (int i = 0; i < 4; ++i)
        base.push_back(sample_at({10.0 + 3 * i, -7.0, 5.0 + i}, 10.0 - i));

    const Vec3 w{4.0, -8.0, 16.0};
    std::vector<ViewpointSample> shifted = base;
    for (auto& s : shifted) s.camera.translation += w;

    const ClusterParams params{0.05, 6};
    const auto r1 = select_optimal_view(base, 64, params, Pose{});
    const auto r2 = select_optimal_view(shifted, 64, params, Pose{});
    CHECK(r1.labels == r2.labels);
    CHECK(r2.t_best.x == r1.t_best.x + w.x);
    CHECK(r2.t_best.y == r1.t_best.y + w.y);
    CHECK(r2.t_best.z == r1.t_best.z + w.z);
}

TEST_CASE("an all-noise field falls back to the best single sample") {
    std::vector<ViewpointSample> samples;
    for (int i = 0; i < 5; ++i) samples.push_back(sample_at({i * 2.0, 0.0, 0.0}, 10.0 + i));
    const auto res = select_optimal_view(samples, 5, {0.05, 3}, Pose{});
    for (int l : res.labels) CHECK(l == kNoise);
    // Highest score (14, input index 4) sorts first and wins the fallback.
    CHECK(res.t_best.x == 8.0);
    CHECK(res.cluster_mean_score == 14.0);
}

TEST_CASE("optimal view reports the object-frame offset for a posed object") {
    Pose obj;
    obj.translation = {0.2, -0.1, 0.05};
    obj.rotation = geometry::UnitQuaternion::from_axis_angle({0, 0, 1}, 0.7);
    std::vector<ViewpointSample> samples;
    for (int i = 0; i < 12; ++i)
        samples.push_back(sample_at({0.5 + i * 0.003, 0.3, 0.2}, 50.0 - i));
    const auto res = select_optimal_view(samples, 12, {0.05, 5}, obj);
    const Vec3 expect =
        geometry::object_frame_viewpoint(res.t_best, obj.translation, obj.rotation);
    CHECK((res.p_cam_obj - expect).norm() == 0.0);
    // Round trip back to the world point.
    const Vec3 world = geometry::optimal_view_world(obj.translation, obj.rotation, res.p_cam_obj);
    CHECK((world - res.t_best).norm() < 1e-12);
}

TEST_CASE("select_optimal_view rejects empty input") {
    CHECK_THROWS_AS(select_optimal_view({}, 10, {0.05, 8}, Pose{}), EmptyInput);
}

// ---------------------------------------------------------------------------
// export / read score distributions

TEST_CASE("score files round-trip bit-equal") {
    std::vector<ViewpointSample> samples;
    samples.push_back(sample_at({0.123456789012345, -0.987654321098765, 0.5}, 0.333333333333333));
    samples.push_back(sample_at({1.0 / 3.0, 2.0 / 7.0, -1.0 / 9.0}, 0.1));
    samples.push_back(sample_at({-0.4, 0.7, 0.2}, 0.0));
    const std::string path = temp_path("scores");
    export_score_distribution(samples, path, 8);

    const auto rows = read_score_distribution(path);
    REQUIRE(rows.size() == 3);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].position.x == samples[i].camera.translation.x);
        CHECK(rows[i].position.y == samples[i].camera.translation.y);
        CHECK(rows[i].position.z == samples[i].camera.translation.z);
        CHECK(rows[i].score == samples[i].score);
    }
    std::remove(path.c_str());
    for (const char* suffix : {"_xy.txt", "_xz.txt", "_yz.txt"}) {
        const std::string p =
            path.substr(0, path.rfind('.')) + suffix;
        std::remove(p.c_str());
    }
    CHECK_THROWS_AS(read_score_distribution("/nonexistent/scores.txt"), DataError);
    CHECK_THROWS_AS(export_score_distribution({}, temp_path("empty")), EmptyInput);
}

TEST_CASE("projection grids put the peak in the expected angular sector") {
    // Samples on a unit circle in the xy plane with a closed-form score
    // field peaked at phi0: the xy projection's max cell must be the cell
    // containing the peak-direction sample.
    const double phi0 = M_PI / 4.0;
    const int n = 64, bins = 12;
    std::vector<ViewpointSample> samples;
    for (int i = 0; i < n; ++i) {
        const double phi = 2.0 * M_PI * i / n - M_PI;
        const double d = phi - phi0;
        samples.push_back(sample_at({std::cos(phi), std::sin(phi), 0.01 * i}, std::exp(-d * d)));
    }
    int peak_index = 0;
    for (int i = 1; i < n; ++i)
        if (samples[i].score > samples[peak_index].score) peak_index = i;

    const std::string path = temp_path("radial");
    export_score_distribution(samples, path, bins);
    const std::string xy = path.substr(0, path.rfind('.')) + "_xy.txt";
    std::ifstream in(xy);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "bin_x bin_y score_max");
    int ba, bb, best_a = -1, best_b = -1, rows = 0;
    double sc, best = -1.0;
    while (in >> ba >> bb >> sc) {
        ++rows;
        if (sc > best) best = sc, best_a = ba, best_b = bb;
    }
    CHECK(rows == bins * bins);

    // Expected cell from the documented binning over the sample bounds.
    double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
    for (const auto& s : samples) {
        lo_x = std::min(lo_x, s.camera.translation.x);
        hi_x = std::max(hi_x, s.camera.translation.x);
        lo_y = std::min(lo_y, s.camera.translation.y);
        hi_y = std::max(hi_y, s.camera.translation.y);
    }
    const Vec3 peak = samples[peak_index].camera.translation;
    const int want_a =
        std::min(bins - 1, static_cast<int>((peak.x - lo_x) / (hi_x - lo_x) * bins));
    const int want_b =
        std::min(bins - 1, static_cast<int>((peak.y - lo_y) / (hi_y - lo_y) * bins));
    CHECK(best_a == want_a);
    CHECK(best_b == want_b);
    CHECK(best == samples[peak_index].score);

    std::remove(path.c_str());
    for (const char* suffix : {"_xy.txt", "_xz.txt", "_yz.txt"})
        std::remove((path.substr(0, path.rfind('.')) + suffix).c_str());
}

// ---------------------------------------------------------------------------
// Monotonicity harness: score vs analytic visible fraction

TEST_CASE("surrogate score tracks the analytic visible fraction of an occluded sphere") {
    // Diameter must sit inside the default gripper width or no antipodal
    // pair can ever form.
    const double r = 0.035;
    SceneSpec scn = bare_sphere_scene(r);
    // Slab x in [0.23, 0.27] covering y <= 0: as the camera slides in +y,
    // the slab edge uncovers an analytically known circular segment.
    scn.enclosure.walls.push_back(
        {ShapeKind::kBox, 0.02, 0.5, 0.4, Pose{{0.25, -0.5, 0.0}, {}}});

    const CameraIntrinsics intr{280.0, 280.0, 160.0, 120.0, 320, 240};
    const ViewScoreConfig vcfg;
    const SurrogateGraspEvaluator eval(vcfg, intr, 4.0 * M_PI * r * r);

    std::vector<double> fractions, scores;
    for (int k = 0; k < 100; ++k) {
        const double yk = -0.01 + 0.11 * k / 99.0;
        Pose cam;
        cam.translation = {0.5, yk, 0.0};
        cam.rotation = geometry::look_at_rotation(cam.translation, {0, 0, 0}, {0, 0, 1});

        // Ray from (0.5, yk) to disc point (0, yp) is blocked iff its y drops
        // below the slab edge somewhere across x in [0.23, 0.27].
        const double cut = std::max(-(0.54 / 0.46) * yk, -(0.46 / 0.54) * yk);
        double blocked_frac;
        if (cut <= -r) {
            blocked_frac = 0.0;
        } else if (cut >= r) {
            blocked_frac = 1.0;
        } else {
            const double area = cut * std::sqrt(r * r - cut * cut) +
                                r * r * std::asin(cut / r) + 0.5 * M_PI * r * r;
            blocked_frac = area / (M_PI * r * r);
        }
        fractions.push_back(1.0 - blocked_frac);

        RngStream rng(4242 + k);
        double score = 0.0;
        try {
            score = eval.score(scene::observe(scn, cam, intr, rng));
        } catch (const EmptyObservation&) {
        }
        scores.push_back(score);
    }

    // Sanity on the harness itself: fractions must span a wide range.
    CHECK(*std::min_element(fractions.begin(), fractions.end()) < 0.4);
    CHECK(*std::max_element(fractions.begin(), fractions.end()) > 0.99);
    CHECK(spearman(scores, fractions) > 0.5);
}
