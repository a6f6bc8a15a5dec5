#include "optiview/mvpnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "optiview/errors.hpp"
#include "optiview/rng.hpp"

namespace optiview::nn {

namespace {

// Group radii for the two set-abstraction stages (meters, camera frame).
constexpr double kSa1Radius = 0.04;
constexpr double kSa2Radius = 0.10;

// Strictly-less on coordinates; the permutation-invariant tie-breaker.
bool lex_less(const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
}

// Order-independent mean: summing sorted values makes the reference point
// a function of the coordinate multiset, not of the input order.
Vec3 sorted_mean(const std::vector<Vec3>& pts) {
    std::vector<double> xs, ys, zs;
    xs.reserve(pts.size());
    ys.reserve(pts.size());
    zs.reserve(pts.size());
    for (const Vec3& p : pts) {
        xs.push_back(p.x);
        ys.push_back(p.y);
        zs.push_back(p.z);
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    std::sort(zs.begin(), zs.end());
    const double n = static_cast<double>(pts.size());
    return {std::accumulate(xs.begin(), xs.end(), 0.0) / n,
            std::accumulate(ys.begin(), ys.end(), 0.0) / n,
            std::accumulate(zs.begin(), zs.end(), 0.0) / n};
}

}  // namespace

// --- ParamStore ----------------------------------------------------------

int ParamStore::add(const std::string& name, Matrix value) {
    if (index(name) >= 0) throw Error("ParamStore: duplicate parameter " + name);
    names_.push_back(name);
    values_.push_back(std::move(value));
    return static_cast<int>(values_.size()) - 1;
}

int ParamStore::index(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

const Matrix& ParamStore::at(const std::string& name) const {
    const int i = index(name);
    if (i < 0) throw Error("ParamStore: unknown parameter " + name);
    return values_[static_cast<std::size_t>(i)];
}

Matrix& ParamStore::at(const std::string& name) {
    const int i = index(name);
    if (i < 0) throw Error("ParamStore: unknown parameter " + name);
    return values_[static_cast<std::size_t>(i)];
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const Matrix& m : values_) n += static_cast<std::size_t>(m.size());
    return n;
}

// --- structure helpers ---------------------------------------------------

Matrix resize_mask_nearest(const std::vector<std::uint8_t>& mask, int height, int width,
                           int side) {
    if (height <= 0 || width <= 0 || side <= 0 ||
        mask.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
        throw ShapeMismatch("resize_mask_nearest: mask size does not match height*width");
    Matrix out(1, static_cast<long>(side) * side);
    for (int r = 0; r < side; ++r) {
        int sr = static_cast<int>((static_cast<double>(r) + 0.5) * height / side);
        sr = std::clamp(sr, 0, height - 1);
        for (int c = 0; c < side; ++c) {
            int sc = static_cast<int>((static_cast<double>(c) + 0.5) * width / side);
            sc = std::clamp(sc, 0, width - 1);
            out(0, static_cast<long>(r) * side + c) = mask[static_cast<std::size_t>(sr) * width + sc] ? 1.0 : 0.0;
        }
    }
    return out;
}

Matrix position_embedding_2d(int gh, int gw, int dim) {
    if (gh <= 0 || gw <= 0 || dim <= 0) throw ShapeMismatch("position_embedding_2d: bad shape");
    const int half = dim / 2;
    Matrix out(static_cast<long>(gh) * gw, dim);
    for (int r = 0; r < gh; ++r) {
        for (int c = 0; c < gw; ++c) {
            const long row = static_cast<long>(r) * gw + c;
            for (int ch = 0; ch < dim; ++ch) {
                // First half encodes the row index, second half the column.
                const bool row_axis = ch < half;
                const int a = row_axis ? ch : ch - half;
                const int axis_width = row_axis ? half : dim - half;
                const double pos = row_axis ? r : c;
                const double freq =
                    std::pow(10000.0, -2.0 * static_cast<double>(a / 2) /
                                          std::max(1, axis_width));
                const double angle = pos * freq;
                out(row, ch) = (a % 2 == 0) ? std::sin(angle) : std::cos(angle);
            }
        }
    }
    return out;
}

std::vector<int> conv_tap_index(int h, int w, int tap_r, int tap_c) {
    // 3x3 kernel, stride 2, pad 1: output (h/2)×(w/2) for even h, w.
    const int oh = (h - 1) / 2 + 1;
    const int ow = (w - 1) / 2 + 1;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(oh) * ow);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            const int sr = 2 * r - 1 + tap_r;
            const int sc = 2 * c - 1 + tap_c;
            idx.push_back((sr < 0 || sr >= h || sc < 0 || sc >= w) ? -1 : sr * w + sc);
        }
    }
    return idx;
}

std::vector<int> fps_permutation_invariant(const std::vector<Vec3>& pts, int n) {
    if (pts.empty() || n < 1) throw EmptyInput("fps_permutation_invariant: empty input");
    const int m = static_cast<int>(pts.size());
    const Vec3 center = sorted_mean(pts);

    int seed = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const double d = (pts[i] - center).squared_norm();
        if (d < best || (d == best && lex_less(pts[i], pts[seed]))) {
            best = d;
            seed = i;
        }
    }

    std::vector<int> selected{seed};
    std::vector<double> dist(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) dist[i] = (pts[i] - pts[seed]).squared_norm();
    while (static_cast<int>(selected.size()) < std::min(n, m)) {
        int arg = -1;
        double far = -1.0;
        for (int i = 0; i < m; ++i) {
            if (dist[i] > far || (arg >= 0 && dist[i] == far && lex_less(pts[i], pts[arg]))) {
                far = dist[i];
                arg = i;
            }
        }
        selected.push_back(arg);
        for (int i = 0; i < m; ++i) dist[i] = std::min(dist[i], (pts[i] - pts[arg]).squared_norm());
    }
    for (int s = std::min(n, m); s < n; ++s) selected.push_back(selected[s % std::min(n, m)]);
    return selected;
}

SaPlan plan_set_abstraction(const std::vector<Vec3>& pts, int n_centroids, int k, double radius) {
    if (k < 1 || radius <= 0.0) throw DataError("plan_set_abstraction: bad k or radius");
    SaPlan plan;
    plan.centroids = fps_permutation_invariant(pts, n_centroids);
    plan.groups.reserve(plan.centroids.size());
    const double r2 = radius * radius;
    for (int ci : plan.centroids) {
        std::vector<std::pair<double, int>> near;
        for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
            const double d = (pts[i] - pts[ci]).squared_norm();
            if (d <= r2) near.push_back({d, i});
        }
        // Sort by distance with coordinate ties, then collapse duplicate
        // coordinates: membership becomes a pure function of the distinct
        // coordinate set, so duplicated or permuted inputs group alike.
        std::sort(near.begin(), near.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return lex_less(pts[a.second], pts[b.second]);
        });
        near.erase(std::unique(near.begin(), near.end(),
                               [&](const auto& a, const auto& b) {
                                   const Vec3& p = pts[a.second];
                                   const Vec3& q = pts[b.second];
                                   return p.x == q.x && p.y == q.y && p.z == q.z;
                               }),
                   near.end());
        if (static_cast<int>(near.size()) > k) near.resize(static_cast<std::size_t>(k));
        std::vector<int> group;
        group.reserve(near.size());
        for (const auto& [d, i] : near) group.push_back(i);
        plan.groups.push_back(std::move(group));
    }
    return plan;
}

// --- Mvpnet construction -------------------------------------------------

namespace {

struct Init {
    RngStream rng;
    ParamStore* store;

    void dense(const std::string& name, int in, int out, double gain) {
        Matrix w(in, out);
        const double std_dev = gain / std::sqrt(static_cast<double>(in));
        for (int r = 0; r < in; ++r)
            for (int c = 0; c < out; ++c) w(r, c) = std_dev * rng.normal();
        store->add(name + ".w", std::move(w));
        store->add(name + ".b", Matrix::Zero(1, out));
    }
    // Convolution weights live transposed: (out × in·9).
    void conv(const std::string& name, int c_in, int c_out) {
        const int fan = c_in * 9;
        Matrix w(c_out, fan);
        const double std_dev = std::sqrt(2.0 / fan);
        for (int r = 0; r < c_out; ++r)
            for (int c = 0; c < fan; ++c) w(r, c) = std_dev * rng.normal();
        store->add(name + ".w", std::move(w));
        store->add(name + ".b", Matrix::Zero(c_out, 1));
    }
    void layer_norm(const std::string& name, int dim) {
        store->add(name + ".g", Matrix::Ones(1, dim));
        store->add(name + ".b", Matrix::Zero(1, dim));
    }
};

constexpr double kRelGain = 1.4142135623730951;  // sqrt(2), He for ReLU

}  // namespace

Mvpnet::Mvpnet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    const int d = cfg.embed_dim;
    const int h1 = std::max(4, d / 2);
    const int h2 = d;
    const int c1 = std::max(4, d / 8), c2 = std::max(8, d / 4), c3 = std::max(16, d / 2),
              c4 = d;
    const int pc = cfg.use_absolute_coords ? 6 : 3;  // per-point coord channels
    Init init{RngStream(seed), &params_};

    init.conv("mask_enc.conv1", 1, c1);
    init.conv("mask_enc.conv2", c1, c2);
    init.conv("mask_enc.conv3", c2, c3);
    init.conv("mask_enc.conv4", c3, c4);
    init.dense("mask_enc.proj", c4, d, 1.0);

    init.dense("local.sa1.l1", pc, h1, kRelGain);
    init.dense("local.sa1.l2", h1, h1, kRelGain);
    init.dense("local.sa2.l1", pc + h1, h2, kRelGain);
    init.dense("local.sa2.l2", h2, h2, kRelGain);
    init.dense("local.proj", h2, d, 1.0);

    init.dense("global.sa1.l1", pc, h1, kRelGain);
    init.dense("global.sa1.l2", h1, h1, kRelGain);
    for (int k = 0; k < cfg.global_res_blocks; ++k) {
        init.dense("global.sa1.res" + std::to_string(k) + ".a", h1, h1, kRelGain);
        init.dense("global.sa1.res" + std::to_string(k) + ".b", h1, h1, 1.0);
    }
    init.dense("global.sa2.l1", pc + h1, h2, kRelGain);
    init.dense("global.sa2.l2", h2, h2, kRelGain);
    for (int k = 0; k < cfg.global_res_blocks; ++k) {
        init.dense("global.sa2.res" + std::to_string(k) + ".a", h2, h2, kRelGain);
        init.dense("global.sa2.res" + std::to_string(k) + ".b", h2, h2, 1.0);
    }
    init.dense("global.proj", h2, d, 1.0);

    {
        Matrix cls(1, d);
        for (int c = 0; c < d; ++c) cls(0, c) = 0.02 * init.rng.normal();
        params_.add("cls.token", std::move(cls));
    }
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "tf.l" + std::to_string(l);
        init.layer_norm(p + ".ln1", d);
        init.dense(p + ".attn.q", d, d, 1.0);
        init.dense(p + ".attn.k", d, d, 1.0);
        init.dense(p + ".attn.v", d, d, 1.0);
        init.dense(p + ".attn.o", d, d, 1.0);
        init.layer_norm(p + ".ln2", d);
        init.dense(p + ".mlp.l1", d, 4 * d, 1.0);
        init.dense(p + ".mlp.l2", 4 * d, d, 1.0);
    }
    init.layer_norm("tf.final", d);

    int prev = d;
    for (std::size_t j = 0; j < cfg.head_hidden.size(); ++j) {
        init.dense("head.l" + std::to_string(j), prev, cfg.head_hidden[j], kRelGain);
        prev = cfg.head_hidden[j];
    }
    init.dense("head.out", prev, 7, 1.0);
    // Shrink the translation columns so an untrained model predicts a
    // near-zero adjustment (stay put) rather than a random metre-scale
    // jump; training then refines from the no-op pose instead of first
    // unlearning the init transient.
    params_.at("head.out.w").middleCols(0, 3) *= 0.1;
    // Widen the raw-quaternion columns so untrained rotation predictions
    // spread well away from the residual identity (typical angles around
    // 1.5 rad) instead of collapsing onto "no rotation"; an untrained
    // model should score like an uninformed baseline, not like one that
    // learned to predict small corrections.
    params_.at("head.out.w").middleCols(3, 4) *= 2.0;
}

bool Mvpnet::is_backbone_param(const std::string& name) {
    return name.rfind("mask_enc.", 0) == 0;
}

std::vector<bool> Mvpnet::active_parameters() const {
    std::vector<bool> active(params_.count(), false);
    for (std::size_t i = 0; i < params_.count(); ++i) {
        const std::string& n = params_.names()[i];
        if (n.rfind("mask_enc.", 0) == 0) active[i] = cfg_.use_mask_branch;
        else if (n.rfind("local.", 0) == 0) active[i] = cfg_.use_local_points;
        else if (n.rfind("global.", 0) == 0) active[i] = cfg_.use_global_points;
        else if (n.rfind("tf.", 0) == 0 || n == "cls.token") active[i] = cfg_.use_transformer;
        else active[i] = true;  // head
    }
    return active;
}

std::vector<int> Mvpnet::bind(Tape& tape) const {
    std::vector<int> leaves;
    leaves.reserve(params_.count());
    for (const Matrix& v : params_.values()) leaves.push_back(tape.leaf(v));
    return leaves;
}

int Mvpnet::leaf_of(const std::vector<int>& leaves, const std::string& name) const {
    const int i = params_.index(name);
    if (i < 0 || static_cast<std::size_t>(i) >= leaves.size())
        throw Error("Mvpnet: unbound parameter " + name);
    return leaves[static_cast<std::size_t>(i)];
}

int Mvpnet::encode_mask(Tape& t, const std::vector<int>& leaves,
                        const std::vector<std::uint8_t>& mask, int height, int width) const {
    const int side = cfg_.mask_input;
    int x = t.constant(resize_mask_nearest(mask, height, width, side));
    int h = side, w = side;
    for (int stage = 1; stage <= 4; ++stage) {
        std::vector<int> taps;
        taps.reserve(9);
        for (int tr = 0; tr < 3; ++tr)
            for (int tc = 0; tc < 3; ++tc)
                taps.push_back(t.gather_cols_zero(x, conv_tap_index(h, w, tr, tc)));
        const int patches = t.concat_rows(taps);  // (Cin·9) × (oh·ow)
        const std::string p = "mask_enc.conv" + std::to_string(stage);
        x = t.relu(t.add_col_vector(t.matmul(leaf_of(leaves, p + ".w"), patches),
                                    leaf_of(leaves, p + ".b")));
        h = (h - 1) / 2 + 1;
        w = (w - 1) / 2 + 1;
    }
    // Cells become tokens: (gh·gw) × embed_dim.
    int tokens = t.add_row_vector(t.matmul(t.transpose(x), leaf_of(leaves, "mask_enc.proj.w")),
                                  leaf_of(leaves, "mask_enc.proj.b"));
    if (cfg_.use_position_embedding)
        tokens = t.add(tokens, t.constant(position_embedding_2d(h, w, cfg_.embed_dim)));
    return tokens;
}

int Mvpnet::encode_points(Tape& t, const std::vector<int>& leaves, const std::string& prefix,
                          const std::vector<Vec3>& points, int res_blocks,
                          bool append_pooled) const {
    if (points.empty()) throw ShapeMismatch("encode_points: empty cloud");

    // Per-group inputs: centered offsets for local shape, plus the raw
    // coordinates so the camera-frame position of the cloud stays visible
    // to the network (the translation label depends on it). With
    // use_absolute_coords off the encoder sees offsets only and becomes
    // translation invariant.
    const long coord_cols = cfg_.use_absolute_coords ? 6 : 3;
    auto group_matrix = [&](const std::vector<Vec3>& pts, const std::vector<int>& members,
                            const Vec3& center) {
        Matrix g(static_cast<long>(members.size()), coord_cols);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const Vec3& p = pts[members[i]];
            const Vec3 q = p - center;
            g(static_cast<long>(i), 0) = q.x;
            g(static_cast<long>(i), 1) = q.y;
            g(static_cast<long>(i), 2) = q.z;
            if (coord_cols == 6) {
                g(static_cast<long>(i), 3) = p.x;
                g(static_cast<long>(i), 4) = p.y;
                g(static_cast<long>(i), 5) = p.z;
            }
        }
        return g;
    };
    auto mlp = [&](int x, const std::string& stage) {
        int h = t.relu(t.add_row_vector(t.matmul(x, leaf_of(leaves, stage + ".l1.w")),
                                        leaf_of(leaves, stage + ".l1.b")));
        h = t.relu(t.add_row_vector(t.matmul(h, leaf_of(leaves, stage + ".l2.w")),
                                    leaf_of(leaves, stage + ".l2.b")));
        for (int k = 0; k < res_blocks; ++k) {
            const std::string rb = stage + ".res" + std::to_string(k);
            const int branch = t.add_row_vector(
                t.matmul(t.relu(t.add_row_vector(t.matmul(h, leaf_of(leaves, rb + ".a.w")),
                                                 leaf_of(leaves, rb + ".a.b"))),
                         leaf_of(leaves, rb + ".b.w")),
                leaf_of(leaves, rb + ".b.b"));
            h = t.add(h, branch);
        }
        return h;
    };

    // Stage 1: fine structure over the raw cloud.
    const SaPlan sa1 = plan_set_abstraction(points, cfg_.sa1_centroids, cfg_.sa1_k, kSa1Radius);
    std::vector<int> feats1;
    std::vector<Vec3> centers1;
    feats1.reserve(sa1.centroids.size());
    for (std::size_t j = 0; j < sa1.centroids.size(); ++j) {
        const Vec3 c = points[sa1.centroids[j]];
        centers1.push_back(c);
        const int g = t.constant(group_matrix(points, sa1.groups[j], c));
        feats1.push_back(t.max_over_rows(mlp(g, prefix + ".sa1")));
    }
    const int f1 = t.concat_rows(feats1);  // n1 × h1

    // Stage 2: regroup the stage-1 centroids, carrying their features.
    const SaPlan sa2 = plan_set_abstraction(centers1, cfg_.local_tokens, cfg_.sa2_k, kSa2Radius);
    std::vector<int> feats2;
    feats2.reserve(sa2.centroids.size());
    for (std::size_t j = 0; j < sa2.centroids.size(); ++j) {
        const Vec3 c = centers1[static_cast<std::size_t>(sa2.centroids[j])];
        const int coords = t.constant(group_matrix(centers1, sa2.groups[j], c));
        const int carried = t.gather_rows(f1, sa2.groups[j]);
        const int g = t.concat_cols({coords, carried});
        feats2.push_back(t.max_over_rows(mlp(g, prefix + ".sa2")));
    }
    const int f2 = t.concat_rows(feats2);  // n2 × h2

    int tokens = t.add_row_vector(t.matmul(f2, leaf_of(leaves, prefix + ".proj.w")),
                                  leaf_of(leaves, prefix + ".proj.b"));
    if (append_pooled) tokens = t.concat_rows({tokens, t.max_over_rows(tokens)});
    return tokens;
}

int Mvpnet::fuse(Tape& t, const std::vector<int>& leaves,
                 const std::vector<int>& fragments) const {
    if (fragments.empty()) throw EmptySequence("fuse: every modality is ablated");
    if (!cfg_.use_transformer) {
        // Ablated fusion: average the tokens instead of attending.
        return t.mean_over_rows(t.concat_rows(fragments));
    }
    std::vector<int> seq{leaf_of(leaves, "cls.token")};
    for (int f : fragments) seq.push_back(f);
    int x = t.concat_rows(seq);

    const int d = cfg_.embed_dim;
    const int dh = d / cfg_.n_heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "tf.l" + std::to_string(l);
        const int n1 = t.layer_norm_rows(x, leaf_of(leaves, p + ".ln1.g"),
                                         leaf_of(leaves, p + ".ln1.b"));
        const int q = t.add_row_vector(t.matmul(n1, leaf_of(leaves, p + ".attn.q.w")),
                                       leaf_of(leaves, p + ".attn.q.b"));
        const int k = t.add_row_vector(t.matmul(n1, leaf_of(leaves, p + ".attn.k.w")),
                                       leaf_of(leaves, p + ".attn.k.b"));
        const int v = t.add_row_vector(t.matmul(n1, leaf_of(leaves, p + ".attn.v.w")),
                                       leaf_of(leaves, p + ".attn.v.b"));
        std::vector<int> heads;
        heads.reserve(static_cast<std::size_t>(cfg_.n_heads));
        for (int hh = 0; hh < cfg_.n_heads; ++hh) {
            const int qh = t.slice_cols(q, hh * dh, dh);
            const int kh = t.slice_cols(k, hh * dh, dh);
            const int vh = t.slice_cols(v, hh * dh, dh);
            const int scores = t.scale(t.matmul(qh, kh, false, true), att_scale);
            heads.push_back(t.matmul(t.softmax_rows(scores), vh));
        }
        const int attn = t.add_row_vector(
            t.matmul(t.concat_cols(heads), leaf_of(leaves, p + ".attn.o.w")),
            leaf_of(leaves, p + ".attn.o.b"));
        x = t.add(x, attn);

        const int n2 = t.layer_norm_rows(x, leaf_of(leaves, p + ".ln2.g"),
                                         leaf_of(leaves, p + ".ln2.b"));
        const int m1 = t.gelu(t.add_row_vector(t.matmul(n2, leaf_of(leaves, p + ".mlp.l1.w")),
                                               leaf_of(leaves, p + ".mlp.l1.b")));
        const int m2 = t.add_row_vector(t.matmul(m1, leaf_of(leaves, p + ".mlp.l2.w")),
                                        leaf_of(leaves, p + ".mlp.l2.b"));
        x = t.add(x, m2);
    }
    x = t.layer_norm_rows(x, leaf_of(leaves, "tf.final.g"), leaf_of(leaves, "tf.final.b"));
    return t.slice_rows(x, 0, 1);
}

int Mvpnet::head(Tape& t, const std::vector<int>& leaves, int cls) const {
    int h = cls;
    for (std::size_t j = 0; j < cfg_.head_hidden.size(); ++j) {
        const std::string p = "head.l" + std::to_string(j);
        h = t.relu(t.add_row_vector(t.matmul(h, leaf_of(leaves, p + ".w")),
                                    leaf_of(leaves, p + ".b")));
    }
    return t.add_row_vector(t.matmul(h, leaf_of(leaves, "head.out.w")),
                            leaf_of(leaves, "head.out.b"));
}

Mvpnet::ForwardNodes Mvpnet::forward(Tape& t, const std::vector<int>& leaves,
                                     const std::vector<std::uint8_t>& mask, int height,
                                     int width, const std::vector<Vec3>& points) const {
    std::vector<int> fragments;
    if (cfg_.use_mask_branch) fragments.push_back(encode_mask(t, leaves, mask, height, width));
    if (cfg_.use_local_points)
        fragments.push_back(encode_points(t, leaves, "local", points, 0, false));
    if (cfg_.use_global_points)
        fragments.push_back(
            encode_points(t, leaves, "global", points, cfg_.global_res_blocks, true));
    const int cls = fuse(t, leaves, fragments);
    const int out = head(t, leaves, cls);

    const int dt = t.slice_cols(out, 0, 3);
    // Residual rotation: the head predicts an offset from the identity
    // quaternion, so an untrained (near-zero) output already means "keep
    // the current orientation" and small corrections are easy to express.
    Matrix identity(1, 4);
    identity << 1.0, 0.0, 0.0, 0.0;
    int raw = t.add(t.slice_cols(out, 3, 4), t.constant(identity));
    int nsq = t.sum_squares(raw);
    if (std::sqrt(t.value(nsq)(0, 0)) < 1e-8) {
        // Raw output landed on exactly minus identity: nudge once more so
        // normalization stays well-defined (the result is identity, which
        // is also where w >= 0 canonicalization would send it).
        raw = t.add(raw, t.constant(identity));
        nsq = t.sum_squares(raw);
    }
    int dq = t.div_by_scalar(raw, t.sqrt_all(nsq));
    if (t.value(dq)(0, 0) < 0.0) dq = t.scale(dq, -1.0);  // canonical w >= 0
    return {dt, dq};
}

Mvpnet::LossNodes Mvpnet::loss(Tape& t, const ForwardNodes& pred, const Vec3& label_dt,
                               const UnitQuaternion& label_dq) const {
    Matrix lt(1, 3);
    lt << label_dt.x, label_dt.y, label_dt.z;
    const UnitQuaternion lq = label_dq.canonicalized();
    Matrix lqm(1, 4);
    lqm << lq.w, lq.x, lq.y, lq.z;

    const int trans = t.sum_squares(t.sub(pred.dt, t.constant(lt)));
    const int dot = t.matmul(pred.dq, t.constant(lqm), false, true);
    // Clamp keeps the arccos gradient finite at |dot| -> 1.
    const int rot =
        t.scale(t.acos_all(t.clamp_all(t.abs_all(dot), -1.0 + 1e-7, 1.0 - 1e-7)), 2.0);
    const int total = t.add(trans, t.scale(rot, cfg_.lambda_rot));
    return {total, trans, rot};
}

PosePrediction Mvpnet::predict(const std::vector<std::uint8_t>& mask, int height, int width,
                               const std::vector<Vec3>& points) const {
    Tape t;
    const std::vector<int> leaves = bind(t);
    const ForwardNodes nodes = forward(t, leaves, mask, height, width, points);
    const Matrix& dt = t.value(nodes.dt);
    const Matrix& dq = t.value(nodes.dq);
    return {{dt(0, 0), dt(0, 1), dt(0, 2)},
            UnitQuaternion::from_stored(dq(0, 0), dq(0, 1), dq(0, 2), dq(0, 3))};
}

LossBreakdown pose_loss(const PosePrediction& pred, const Vec3& label_dt,
                        const UnitQuaternion& label_dq, double lambda) {
    LossBreakdown out;
    out.trans = (pred.dt - label_dt).squared_norm();
    const double dot = std::abs(pred.dq.dot(label_dq));
    out.rot = 2.0 * std::acos(std::clamp(dot, -1.0 + 1e-7, 1.0 - 1e-7));
    out.total = out.trans + lambda * out.rot;
    return out;
}

}  // namespace optiview::nn
