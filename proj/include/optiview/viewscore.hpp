#pragma once

#include <memory>
#include <string>
#include <vector>

#include "optiview/config.hpp"
#include "optiview/render.hpp"
#include "optiview/scene.hpp"

namespace optiview::viewscore {

using geometry::Pose;
using geometry::Vec3;
using scene::Observation;

// Pluggable viewpoint-quality score. The shipped implementation is the
// antipodal surrogate below; a learned grasp model can slot in instead.
struct QualityEvaluator {
    virtual ~QualityEvaluator() = default;
    virtual double score(const Observation& obs) const = 0;  // >= 0
    virtual std::string name() const = 0;
    virtual bool deterministic() const = 0;
};

struct ViewpointSample {
    Pose camera;
    double score = 0.0;
    int n_trials = 1;
};

struct ClusterParams {
    double eps = 0.05;   // meters
    int min_pts = 8;
};

inline constexpr int kNoise = -1;

struct OptimalViewResult {
    Vec3 t_best;
    Vec3 p_cam_obj;
    int largest_cluster_size = 0;
    double cluster_mean_score = 0.0;
    std::vector<ViewpointSample> samples;  // the sorted top-N actually clustered
    std::vector<int> labels;               // cluster id per samples[i], or kNoise
};

// Per-point unit normals from k-nearest-neighbor plane fits, oriented
// toward the sensor (camera-frame points; flipped so n . p <= 0). Also
// reports a planarity weight 1 - lambda_min/lambda_mid in [0, 1].
void estimate_normals(const std::vector<Vec3>& points, int k,
                      std::vector<Vec3>& normals, std::vector<double>& planarity);

// One candidate grasp: two finger contacts in the camera frame and the
// antipodal quality in [0, 1] (alignment cosines times planarity weights).
struct GraspPair {
    Vec3 a, b;
    double score = 0.0;
};

// All antipodal pairs of the observation: pairs closer than gripper_width
// whose normals oppose each other and the pair axis within antipodal_tol.
// Point clouds larger than max_points are thinned by a deterministic
// stride before pairing. Discovery (index) order.
std::vector<GraspPair> enumerate_grasp_pairs(const Observation& obs, double gripper_width,
                                             double antipodal_tol, int normal_knn,
                                             int max_points = 400);

// Antipodal-pair viewpoint quality: the mean of the top_k pair scores from
// enumerate_grasp_pairs (all pairs if fewer), times a target-coverage
// ratio points/expected_points (skipped if expected_points <= 0).
double surrogate_grasp_score(const Observation& obs, double gripper_width,
                             double antipodal_tol, int top_k, int normal_knn,
                             double expected_points, int max_points = 400);

class SurrogateGraspEvaluator final : public QualityEvaluator {
public:
    SurrogateGraspEvaluator(const ViewScoreConfig& cfg, scene::CameraIntrinsics intr,
                            double target_surface_area)
        : cfg_(cfg), intr_(intr), area_(target_surface_area) {}

    double score(const Observation& obs) const override;
    std::string name() const override { return "antipodal_surrogate"; }
    bool deterministic() const override { return true; }

private:
    ViewScoreConfig cfg_;
    scene::CameraIntrinsics intr_;
    double area_;
};

// Scores n_candidates random band viewpoints of the scene, each as the
// mean over `repeats` observations with independent sensor-noise draws
// (EmptyObservation trials contribute 0). Candidate i uses the stream
// rng.derive(i), so results are order- and worker-count independent.
std::vector<ViewpointSample> evaluate_candidates(const scene::SceneSpec& scn,
                                                 const scene::ViewBand& band,
                                                 const scene::CameraIntrinsics& intr,
                                                 int n_candidates,
                                                 const QualityEvaluator& evaluator,
                                                 int repeats, const RngStream& rng,
                                                 int workers = 1);

// Classic density clustering. A point is core iff it has >= min_pts
// neighbors within eps (itself included). Clusters are discovered in
// ascending index order of their first core point; border points go to
// the first (lowest-id) cluster that reaches them.
std::vector<int> dbscan(const std::vector<Vec3>& points, const ClusterParams& params);

// Sorts by score (desc, ties by index asc), keeps top_n, clusters the
// positions, and returns the centroid of the largest cluster (ties by
// higher mean score, then lower cluster id). All-noise inputs fall back
// to the single best sample. p_cam_obj is the object-frame offset.
OptimalViewResult select_optimal_view(const std::vector<ViewpointSample>& samples,
                                      int top_n, const ClusterParams& params,
                                      const Pose& object_pose);

// Writes "x y z score" rows (header + one row per sample) to path, plus
// three binned max-score projection files path_xy.txt / _xz.txt / _yz.txt.
void export_score_distribution(const std::vector<ViewpointSample>& samples,
                               const std::string& path, int bins = 24);

struct ScoreRow {
    Vec3 position;
    double score;
};
std::vector<ScoreRow> read_score_distribution(const std::string& path);

}  // namespace optiview::viewscore
