#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optiview/autodiff.hpp"
#include "optiview/config.hpp"
#include "optiview/geometry.hpp"

namespace optiview::nn {

using geometry::UnitQuaternion;
using geometry::Vec3;

// Named, ordered parameter set. Order is fixed by construction and shared
// by checkpoints, the optimizer and the tape binding.
class ParamStore {
public:
    int add(const std::string& name, Matrix value);
    int index(const std::string& name) const;  // -1 when absent
    const Matrix& at(const std::string& name) const;
    Matrix& at(const std::string& name);
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Matrix>& values() { return values_; }
    const std::vector<Matrix>& values() const { return values_; }
    std::size_t count() const { return values_.size(); }
    std::size_t scalar_count() const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

struct PosePrediction {
    Vec3 dt;            // camera-frame translation adjustment
    UnitQuaternion dq;  // unit, w >= 0
};

struct LossBreakdown {
    double total = 0.0;
    double trans = 0.0;
    double rot = 0.0;
};

// --- structure helpers (pure functions of the input, no parameters) ------

// Nearest-neighbor resample of a binary mask to side×side, returned as a
// 1×(side·side) row in row-major pixel order with values in {0, 1}.
Matrix resize_mask_nearest(const std::vector<std::uint8_t>& mask, int height, int width,
                           int side);

// 2D sinusoidal position embedding for a gh×gw token grid: first dim/2
// channels encode the row index, the rest the column index, alternating
// sin/cos per frequency. Tokens in row-major grid order.
Matrix position_embedding_2d(int gh, int gw, int dim);

// Column index map for one 3×3 tap at the given offset, stride 2, pad 1;
// -1 marks out-of-image taps (read as zero).
std::vector<int> conv_tap_index(int h, int w, int tap_r, int tap_c);

// Farthest point sampling with permutation-invariant tie-breaking: the
// seed is the point nearest the cloud centroid and every comparison falls
// back to lexicographic coordinate order, so the selected coordinates do
// not depend on input order. Selects n indices, cycling when n > distinct
// points.
std::vector<int> fps_permutation_invariant(const std::vector<Vec3>& pts, int n);

struct SaPlan {
    std::vector<int> centroids;            // indices into the input cloud
    std::vector<std::vector<int>> groups;  // per centroid: member indices
};

// Set-abstraction structure: FPS centroids plus up-to-k nearest neighbors
// within radius (the centroid itself always included).
SaPlan plan_set_abstraction(const std::vector<Vec3>& pts, int n_centroids, int k, double radius);

// --- the network ---------------------------------------------------------

class Mvpnet {
public:
    // Randomly initialized parameters; creation order and shapes are a
    // pure function of the config.
    Mvpnet(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // True for parameters in the mask-encoder group, which trains at the
    // separate backbone learning rate.
    static bool is_backbone_param(const std::string& name);

    // Per-parameter flag: does the parameter belong to a branch enabled by
    // the current ablation config? Disabled branches receive no gradient
    // and must not be updated.
    std::vector<bool> active_parameters() const;

    // Leaf ids for all parameters on the given tape, aligned with
    // params().names(). One binding serves every forward in a batch.
    std::vector<int> bind(Tape& tape) const;

    struct ForwardNodes {
        int dt;  // 1×3
        int dq;  // 1×4, unit norm, w >= 0
    };
    ForwardNodes forward(Tape& tape, const std::vector<int>& leaves,
                         const std::vector<std::uint8_t>& mask, int height, int width,
                         const std::vector<Vec3>& points) const;

    struct LossNodes {
        int total;
        int trans;
        int rot;
    };
    LossNodes loss(Tape& tape, const ForwardNodes& pred, const Vec3& label_dt,
                   const UnitQuaternion& label_dq) const;

    // Inference convenience: forward on a private tape, no gradients.
    PosePrediction predict(const std::vector<std::uint8_t>& mask, int height, int width,
                           const std::vector<Vec3>& points) const;

    // The individual stages, exposed for weight-surgery and invariance
    // checks. Token fragments are L×embed_dim nodes.
    int encode_mask(Tape& t, const std::vector<int>& leaves,
                    const std::vector<std::uint8_t>& mask, int height, int width) const;
    // prefix selects the weight family ("local" or "global"); res_blocks
    // and append_pooled distinguish the two encoder variants.
    int encode_points(Tape& t, const std::vector<int>& leaves, const std::string& prefix,
                      const std::vector<Vec3>& points, int res_blocks,
                      bool append_pooled) const;
    int fuse(Tape& t, const std::vector<int>& leaves, const std::vector<int>& fragments) const;
    int head(Tape& t, const std::vector<int>& leaves, int cls) const;

private:
    int leaf_of(const std::vector<int>& leaves, const std::string& name) const;

    ModelConfig cfg_;
    ParamStore params_;
};

// Loss on concrete values (evaluation path); same formula as the graph.
LossBreakdown pose_loss(const PosePrediction& pred, const Vec3& label_dt,
                        const UnitQuaternion& label_dq, double lambda);

}  // namespace optiview::nn
