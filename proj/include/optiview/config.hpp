#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "optiview/scene.hpp"

namespace optiview {

// Domain-randomization ranges and camera setup.
struct SceneConfig {
    scene::CameraIntrinsics intrinsics;        // observation resolution
    int score_width = 96, score_height = 72;   // cheaper renders for view scoring
    double enclosure_depth = 0.44;
    double enclosure_width = 0.90;
    double enclosure_height = 0.30;
    double wall_thickness = 0.03;
    double enclosure_elevation_max = 1.1868;   // radians; blocked above this
    double workspace_x_min = -0.10, workspace_x_max = 0.0;
    double workspace_y_min = -0.08, workspace_y_max = 0.08;
    double yaw_min = 0.0, yaw_max = 2.0 * M_PI;
    double scale_min = 0.9, scale_max = 1.1;
    double noise_sigma_min = 0.0, noise_sigma_max = 0.003;   // meters
    double dropout_min = 0.0, dropout_max = 0.15;
};

// Candidate scoring and clustering for optimal-view selection.
struct ViewScoreConfig {
    int n_candidates = 1500;
    int n_repeats = 5;        // observations averaged per candidate
    int top_m = 800;          // candidates fed to DBSCAN
    int top_pairs = 10;       // grasp pairs averaged into one view score
    scene::ViewBand band{0.35, 0.75, 0.0873, 0.96, 1.05, 0.0};
    double dbscan_eps = 0.05;
    int dbscan_min_pts = 8;
    double gripper_width = 0.08;       // max antipodal pair separation, meters
    // Pair-test alignment tolerance. Generous because normals estimated from
    // a raster depth image can never reach tangency at silhouettes (the
    // outermost recoverable surface sits a pixel inside the true rim), so
    // opposing rim normals on curved objects arrive ~30-40 degrees apart.
    double antipodal_tol = 0.8;        // radians
    int normal_knn = 12;
    double coverage_px_factor = 0.25;  // fraction of ideal pixel count for full coverage
    double scale_bucket_width = 0.1;   // library entries per (category, bucket)
};

struct DatasetConfig {
    int n_records = 17000;
    int n_points = 1024;               // model point budget per record
    double train_fraction = 0.9;
    double augment_dropout_max = 0.10; // train-time extra point dropout
    scene::ViewBand initial_band{0.40, 0.70, 0.14, 0.7854, 0.70, 0.08};
    std::vector<int> categories;       // empty = all similar categories
};

struct ModelConfig {
    int embed_dim = 128;
    int n_heads = 4;
    int n_layers = 4;
    int mask_input = 128;     // resampled mask side; token grid = mask_input/16
    int sa1_centroids = 256;  // point encoder stage 1
    int sa1_k = 16;
    int local_tokens = 64;    // point encoder stage 2 output tokens
    int sa2_k = 16;
    int global_res_blocks = 2;
    std::vector<int> head_hidden{128, 64};
    double lambda_rot = 1.0;
    // Ablation switches; a disabled branch contributes zero tokens/gradient.
    bool use_mask_branch = true;
    bool use_local_points = true;
    bool use_global_points = true;
    bool use_position_embedding = true;
    // Point groups carry raw camera-frame coordinates next to the centered
    // offsets; off = centered-coordinates-only (translation-invariant)
    // encoders.
    bool use_absolute_coords = true;
    // When off, transformer fusion is replaced by mean-pooling the tokens.
    bool use_transformer = true;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double lr_main = 5e-5;
    double lr_backbone = 5e-6;   // mask-encoder parameter group
    double weight_decay = 1e-4;
    double lr_decay = 0.7;
    int lr_step_epochs = 20;
    double clip_norm = 1.0;
    double diverge_threshold = 1e4;
};

struct EvalConfig {
    int n_trials = 250;
    int n_percentile_candidates = 200;
    double tau_exec = 0.18;    // executability threshold on the grasp score
    int exec_top = 5;          // candidate grasps tried per attempt
    int attempt_cap = 2;       // attempts per scene for GSR/DR
    int n_gsr_scenes = 50;
    double landing_tol = 1e-6; // oracle-policy landing check
};

struct PipelineConfig {
    std::uint64_t seed = 20240001;
    std::string output_root = "out";
    int workers = 1;  // results are worker-count independent by design
    SceneConfig scene;
    ViewScoreConfig viewscore;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    // Reads a JSON file (or uses defaults if path is empty), applies
    // "a.b.c=value" overrides, validates. Unknown keys are rejected.
    static PipelineConfig load(const std::string& path,
                               const std::vector<std::string>& overrides = {});

    // FNV-1a 64 over the canonical (sorted-key, compact) JSON dump.
    std::uint64_t config_hash() const;
    void validate() const;  // throws ConfigError
};

std::uint64_t fnv1a64(const std::string& data);
std::string hash_hex(std::uint64_t h);

// Applies one "dotted.path=json_value" override in place; the path must
// exist in j. Values parse as JSON, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace optiview
