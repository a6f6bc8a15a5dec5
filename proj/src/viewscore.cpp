#include "optiview/viewscore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

#include <Eigen/Dense>

#include "optiview/errors.hpp"
#include "optiview/parallel.hpp"

namespace optiview::viewscore {

void estimate_normals(const std::vector<Vec3>& points, int k,
                      std::vector<Vec3>& normals, std::vector<double>& planarity) {
    const int n = static_cast<int>(points.size());
    normals.assign(n, Vec3{0, 0, 1});
    planarity.assign(n, 0.0);
    if (n < 3) return;
    const int kk = std::min(k, n);

    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) dist[j] = {(points[j] - points[i]).squared_norm(), j};
        std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());

        Vec3 mean{0, 0, 0};
        for (int j = 0; j < kk; ++j) mean += points[dist[j].second];
        mean = mean / kk;
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j = 0; j < kk; ++j) {
            const Vec3 d = points[dist[j].second] - mean;
            const Eigen::Vector3d v(d.x, d.y, d.z);
            cov += v * v.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        const Eigen::Vector3d nrm = es.eigenvectors().col(0);  // smallest eigenvalue
        Vec3 normal{nrm.x(), nrm.y(), nrm.z()};
        // Orient toward the sensor at the camera-frame origin.
        if (normal.dot(points[i]) > 0.0) normal = -normal;
        normals[i] = normal;
        const double l_min = std::max(es.eigenvalues()(0), 0.0);
        const double l_mid = es.eigenvalues()(1);
        planarity[i] = l_mid > 1e-18 ? std::clamp(1.0 - l_min / l_mid, 0.0, 1.0) : 0.0;
    }
}

double surrogate_grasp_score(const Observation& obs, double gripper_width,
                             double antipodal_tol, int top_k, int normal_knn,
                             double expected_points, int max_points) {
    const auto& all = obs.points;
    if (all.empty()) return 0.0;

    std::vector<Vec3> pts;
    if (static_cast<int>(all.size()) > max_points) {
        const size_t stride = (all.size() + max_points - 1) / max_points;
        for (size_t i = 0; i < all.size(); i += stride) pts.push_back(all[i]);
    } else {
        pts = all;
    }

    std::vector<Vec3> normals;
    std::vector<double> planarity;
    estimate_normals(pts, normal_knn, normals, planarity);

    const double cos_tol = std::cos(antipodal_tol);
    const int n = static_cast<int>(pts.size());
    std::vector<double> pair_scores;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Vec3 d = pts[j] - pts[i];
            const double len = d.norm();
            if (len > gripper_width || len < 1e-4) continue;
            const Vec3 axis = d / len;
            // Fingers close along the axis: both normals must line up with it
            // and oppose each other. The axis terms use magnitudes because the
            // camera-facing orientation heuristic is unreliable exactly at
            // silhouette points (n . p ~ 0), where antipodal pairs live.
            const double a1 = std::abs(normals[i].dot(axis));
            const double a2 = std::abs(normals[j].dot(axis));
            const double opp = -normals[i].dot(normals[j]);
            if (a1 < cos_tol || a2 < cos_tol || opp < cos_tol) continue;
            pair_scores.push_back(a1 * a2 * opp * planarity[i] * planarity[j]);
        }
    }
    if (pair_scores.empty()) return 0.0;

    const int keep = std::min<int>(top_k, pair_scores.size());
    std::partial_sort(pair_scores.begin(), pair_scores.begin() + keep, pair_scores.end(),
                      std::greater<double>());
    double score = std::accumulate(pair_scores.begin(), pair_scores.begin() + keep, 0.0) / keep;

    if (expected_points > 0.0)
        score *= std::clamp(static_cast<double>(all.size()) / expected_points, 0.0, 1.0);
    return score;
}

double SurrogateGraspEvaluator::score(const Observation& obs) const {
    if (obs.points.empty()) return 0.0;
    double depth_sum = 0.0;
    for (const Vec3& p : obs.points) depth_sum += -p.z;
    const double mean_d = depth_sum / obs.points.size();
    // Ideal pixel count for a fully visible target of this surface area at
    // this range, derated by the coverage factor.
    const double expected = cfg_.coverage_px_factor * area_ * intr_.fx * intr_.fy /
                            std::max(mean_d * mean_d, 1e-6);
    return surrogate_grasp_score(obs, cfg_.gripper_width, cfg_.antipodal_tol,
                                 cfg_.top_pairs, cfg_.normal_knn, expected);
}

std::vector<ViewpointSample> evaluate_candidates(const scene::SceneSpec& scn,
                                                 const scene::ViewBand& band,
                                                 const scene::CameraIntrinsics& intr,
                                                 int n_candidates,
                                                 const QualityEvaluator& evaluator,
                                                 int repeats, const RngStream& rng,
                                                 int workers) {
    if (n_candidates < 1 || repeats < 1)
        throw DataError("evaluate_candidates needs n_candidates >= 1, repeats >= 1");

    std::vector<ViewpointSample> out(n_candidates);
    parallel_for(static_cast<size_t>(n_candidates), workers, [&](size_t i) {
        RngStream stream = rng.derive(i);
        const Pose cam = sample_side_viewpoint(scn, band, stream);
        double total = 0.0;
        for (int r = 0; r < repeats; ++r) {
            try {
                RngStream obs_rng = stream.derive(1 + static_cast<std::uint64_t>(r));
                total += evaluator.score(scene::observe(scn, cam, intr, obs_rng));
            } catch (const EmptyObservation&) {
                // A blind viewpoint is simply worthless, not an error.
            }
        }
        out[i] = {cam, total / repeats, repeats};
    });
    return out;
}

std::vector<int> dbscan(const std::vector<Vec3>& points, const ClusterParams& params) {
    if (params.eps <= 0 || params.min_pts < 1) throw DataError("invalid DBSCAN params");
    const int n = static_cast<int>(points.size());
    const double eps_sq = params.eps * params.eps;

    std::vector<std::vector<int>> neighbors(n);
    for (int i = 0; i < n; ++i) {
        if (!points[i].finite()) throw DataError("DBSCAN input must be finite");
        for (int j = 0; j < n; ++j)
            if ((points[j] - points[i]).squared_norm() <= eps_sq) neighbors[i].push_back(j);
    }

    std::vector<int> labels(n, kNoise);
    std::vector<char> is_core(n, 0);
    for (int i = 0; i < n; ++i)
        is_core[i] = static_cast<int>(neighbors[i].size()) >= params.min_pts;

    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (labels[i] != kNoise || !is_core[i]) continue;
        const int cluster = next_cluster++;
        // Grow from this seed; only cores extend the frontier, and any
        // unclaimed point in a core's neighborhood joins as a border.
        std::queue<int> frontier;
        labels[i] = cluster;
        frontier.push(i);
        while (!frontier.empty()) {
            const int p = frontier.front();
            frontier.pop();
            for (int q : neighbors[p]) {
                if (labels[q] != kNoise) continue;
                labels[q] = cluster;
                if (is_core[q]) frontier.push(q);
            }
        }
    }
    return labels;
}

OptimalViewResult select_optimal_view(const std::vector<ViewpointSample>& samples,
                                      int top_n, const ClusterParams& params,
                                      const Pose& object_pose) {
    if (samples.empty()) throw EmptyInput("select_optimal_view needs samples");
    if (top_n < 1) throw DataError("top_n must be >= 1");

    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (samples[a].score != samples[b].score) return samples[a].score > samples[b].score;
        return a < b;
    });
    const int kept = std::min<int>(top_n, order.size());

    OptimalViewResult res;
    res.samples.reserve(kept);
    std::vector<Vec3> positions;
    positions.reserve(kept);
    for (int i = 0; i < kept; ++i) {
        res.samples.push_back(samples[order[i]]);
        positions.push_back(samples[order[i]].camera.translation);
    }
    res.labels = dbscan(positions, params);

    const int n_clusters = 1 + *std::max_element(res.labels.begin(), res.labels.end());
    if (n_clusters == 0) {
        // Everything is noise; the best single sample wins.
        res.t_best = res.samples[0].camera.translation;
        res.largest_cluster_size = 1;
        res.cluster_mean_score = res.samples[0].score;
    } else {
        std::vector<int> size(n_clusters, 0);
        std::vector<double> score_sum(n_clusters, 0.0);
        std::vector<Vec3> centroid(n_clusters, Vec3{0, 0, 0});
        for (int i = 0; i < kept; ++i) {
            const int c = res.labels[i];
            if (c == kNoise) continue;
            size[c] += 1;
            score_sum[c] += res.samples[i].score;
            centroid[c] += positions[i];
        }
        int best = 0;
        for (int c = 1; c < n_clusters; ++c) {
            if (size[c] > size[best]) best = c;
            else if (size[c] == size[best] &&
                     score_sum[c] / size[c] > score_sum[best] / size[best])
                best = c;
            // equal size and mean score: keep the lower cluster id
        }
        res.t_best = centroid[best] / size[best];
        res.largest_cluster_size = size[best];
        res.cluster_mean_score = score_sum[best] / size[best];
    }
    res.p_cam_obj =
        geometry::object_frame_viewpoint(res.t_best, object_pose.translation, object_pose.rotation);
    return res;
}

void export_score_distribution(const std::vector<ViewpointSample>& samples,
                               const std::string& path, int bins) {
    if (samples.empty()) throw EmptyInput("no samples to export");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out.precision(17);
    out << "x y z score\n";
    for (const auto& s : samples)
        out << s.camera.translation.x << ' ' << s.camera.translation.y << ' '
            << s.camera.translation.z << ' ' << s.score << '\n';
    if (!out) throw DataError("write failed: " + path);

    // Binned max-score projections onto the three coordinate planes.
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const auto& s : samples) {
        const Vec3& p = s.camera.translation;
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const char* names[3] = {"xy", "xz", "yz"};
    const int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    const double los[3] = {lo.x, lo.y, lo.z}, his[3] = {hi.x, hi.y, hi.z};
    const std::string stem = path.rfind('.') == std::string::npos
                                 ? path
                                 : path.substr(0, path.rfind('.'));
    for (int proj = 0; proj < 3; ++proj) {
        const int a = axes[proj][0], b = axes[proj][1];
        const double wa = std::max(his[a] - los[a], 1e-12);
        const double wb = std::max(his[b] - los[b], 1e-12);
        std::vector<double> grid(static_cast<size_t>(bins) * bins, 0.0);
        for (const auto& s : samples) {
            const double pv[3] = {s.camera.translation.x, s.camera.translation.y,
                                  s.camera.translation.z};
            const int ba = std::min(bins - 1, static_cast<int>((pv[a] - los[a]) / wa * bins));
            const int bb = std::min(bins - 1, static_cast<int>((pv[b] - los[b]) / wb * bins));
            auto& cell = grid[static_cast<size_t>(bb) * bins + ba];
            cell = std::max(cell, s.score);
        }
        std::ofstream pout(stem + "_" + names[proj] + ".txt");
        if (!pout) throw DataError("cannot write projection file for " + path);
        pout.precision(17);
        pout << "bin_" << names[proj][0] << " bin_" << names[proj][1] << " score_max\n";
        for (int r = 0; r < bins; ++r)
            for (int c = 0; c < bins; ++c)
                pout << c << ' ' << r << ' ' << grid[static_cast<size_t>(r) * bins + c] << '\n';
    }
}

std::vector<ScoreRow> read_score_distribution(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string header;
    std::getline(in, header);
    if (header != "x y z score") throw DataError("bad score-distribution header in " + path);
    std::vector<ScoreRow> rows;
    ScoreRow r;
    while (in >> r.position.x >> r.position.y >> r.position.z >> r.score) rows.push_back(r);
    return rows;
}

}  // namespace optiview::viewscore
