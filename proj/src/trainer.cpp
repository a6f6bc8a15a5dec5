#include "optiview/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "optiview/checksum.hpp"
#include "optiview/errors.hpp"
#include "optiview/rng.hpp"

namespace optiview::train {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

constexpr std::uint64_t kInitTag = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleTag = 0x73687566;  // "shuf"

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
void put_u32(std::string& buf, std::uint32_t v) { put_bytes(buf, &v, 4); }
void put_u64(std::string& buf, std::uint64_t v) { put_bytes(buf, &v, 8); }
void put_f64(std::string& buf, double v) { put_bytes(buf, &v, 8); }

struct Cursor {
    const char* p;
    const char* end;
    void take(void* out, std::size_t n) {
        if (p + n > end) throw CorruptRecord("checkpoint truncated");
        std::memcpy(out, p, n);
        p += n;
    }
    std::uint32_t u32() { std::uint32_t v; take(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; take(&v, 8); return v; }
    double f64() { double v; take(&v, 8); return v; }
};

void put_f32(std::string& buf, float v) { put_bytes(buf, &v, 4); }

// Blobs are shaped 32-bit reals.
void put_matrix(std::string& buf, const Matrix& m) {
    put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) put_f32(buf, static_cast<float>(m(r, c)));
}

Matrix take_matrix(Cursor& cur) {
    const long rows = static_cast<long>(cur.u32());
    const long cols = static_cast<long>(cur.u32());
    if (rows <= 0 || cols <= 0 || rows * cols > (1 << 26))
        throw CorruptRecord("checkpoint matrix shape out of range");
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            float v;
            cur.take(&v, 4);
            m(r, c) = static_cast<double>(v);
        }
    return m;
}

std::uint64_t model_init_seed(const PipelineConfig& cfg) {
    return hash_combine(cfg.seed, kInitTag);
}

}  // namespace

double lr_at_epoch(double lr0, int epoch, const TrainConfig& cfg) {
    double lr = lr0;
    for (int k = 0; k < epoch / cfg.lr_step_epochs; ++k) lr *= cfg.lr_decay;
    return lr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    if (ck.names.size() != ck.values.size() || ck.names.size() != ck.opt_m.size() ||
        ck.names.size() != ck.opt_v.size())
        throw ShapeMismatch("checkpoint name/state lists disagree");

    std::string buf;
    put_bytes(buf, kMagic, 4);
    put_u32(buf, kVersion);
    const std::string cfg_json = ck.config.to_json().dump();
    put_u32(buf, static_cast<std::uint32_t>(cfg_json.size()));
    put_bytes(buf, cfg_json.data(), cfg_json.size());
    put_u64(buf, ck.step);
    put_u32(buf, static_cast<std::uint32_t>(ck.epoch));
    put_f64(buf, ck.best_val_total);
    put_u32(buf, static_cast<std::uint32_t>(ck.names.size()));
    for (std::size_t i = 0; i < ck.names.size(); ++i) {
        put_u32(buf, static_cast<std::uint32_t>(ck.names[i].size()));
        put_bytes(buf, ck.names[i].data(), ck.names[i].size());
        put_matrix(buf, ck.values[i]);
        put_matrix(buf, ck.opt_m[i]);
        put_matrix(buf, ck.opt_v[i]);
    }
    put_u32(buf, crc32(buf.data() + 8, buf.size() - 8));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint: " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw DataError("short checkpoint write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw VersionMismatch("not a checkpoint file: " + path);
    Cursor cur{buf.data() + 4, buf.data() + buf.size()};
    const std::uint32_t version = cur.u32();
    if (version != kVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(version));
    if (buf.size() < 16) throw CorruptRecord("checkpoint truncated");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    if (crc32(buf.data() + 8, buf.size() - 12) != stored_crc)
        throw CorruptRecord("checkpoint CRC mismatch");
    cur.end -= 4;

    Checkpoint ck;
    const std::uint32_t json_len = cur.u32();
    std::string cfg_json(json_len, '\0');
    cur.take(cfg_json.data(), json_len);
    try {
        ck.config = PipelineConfig::from_json(nlohmann::json::parse(cfg_json));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(std::string("checkpoint config echo unreadable: ") + e.what());
    }
    ck.step = cur.u64();
    ck.epoch = static_cast<int>(cur.u32());
    ck.best_val_total = cur.f64();
    const std::uint32_t count = cur.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = cur.u32();
        std::string name(len, '\0');
        cur.take(name.data(), len);
        ck.names.push_back(std::move(name));
        ck.values.push_back(take_matrix(cur));
        ck.opt_m.push_back(take_matrix(cur));
        ck.opt_v.push_back(take_matrix(cur));
    }
    if (cur.p != cur.end) throw CorruptRecord("trailing bytes after checkpoint payload");
    return ck;
}

nn::Mvpnet model_from_checkpoint(const Checkpoint& ck) {
    nn::Mvpnet model(ck.config.model, model_init_seed(ck.config));
    if (ck.names.size() != model.params().count())
        throw Error("checkpoint holds " + std::to_string(ck.names.size()) +
                    " parameters, model expects " + std::to_string(model.params().count()));
    for (std::size_t i = 0; i < ck.names.size(); ++i) {
        const int idx = model.params().index(ck.names[i]);
        if (idx < 0) throw Error("checkpoint parameter unknown to model: " + ck.names[i]);
        Matrix& dst = model.params().values()[static_cast<std::size_t>(idx)];
        if (dst.rows() != ck.values[i].rows() || dst.cols() != ck.values[i].cols())
            throw ShapeMismatch("checkpoint shape mismatch on " + ck.names[i]);
        dst = ck.values[i];
    }
    return model;
}

namespace {

struct SplitIndices {
    std::vector<std::size_t> train, val;
};

SplitIndices split_indices(const std::vector<dataset::DatasetRecord>& records) {
    if (records.empty()) throw EmptyInput("train: no records");
    SplitIndices s;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].meta.split == dataset::SplitTag::kTrain) s.train.push_back(i);
        else if (records[i].meta.split == dataset::SplitTag::kTest) s.val.push_back(i);
    }
    if (s.train.empty() || s.val.empty())
        throw DataError("train: dataset carries no train/test split tags");
    return s;
}

void log_epoch(std::ostream* log, const EpochStats& s) {
    if (log == nullptr) return;
    nlohmann::json j{{"epoch", s.epoch},
                     {"train_total", s.train_total},
                     {"train_trans", s.train_trans},
                     {"train_rot", s.train_rot},
                     {"val_total", s.val_total},
                     {"val_trans", s.val_trans},
                     {"val_rot", s.val_rot},
                     {"val_trans_err_m", s.val_trans_err_m},
                     {"val_geo_err_rad", s.val_geo_err_rad},
                     {"lr_main", s.lr_main},
                     {"lr_backbone", s.lr_backbone},
                     {"clip_fraction", s.clip_fraction},
                     {"wall_seconds", s.wall_seconds}};
    (*log) << j.dump() << "\n";
}

}  // namespace

TrainReport train(const PipelineConfig& cfg, const std::vector<dataset::DatasetRecord>& records,
                  const std::string& checkpoint_out, std::ostream* epoch_log,
                  const std::string& final_out) {
    cfg.validate();
    const TrainConfig& tc = cfg.train;
    const SplitIndices split = split_indices(records);

    nn::Mvpnet model(cfg.model, model_init_seed(cfg));
    const std::size_t n_params = model.params().count();
    const std::vector<bool> active = model.active_parameters();
    std::vector<bool> backbone(n_params);
    for (std::size_t i = 0; i < n_params; ++i)
        backbone[i] = nn::Mvpnet::is_backbone_param(model.params().names()[i]);

    std::vector<Matrix> opt_m(n_params), opt_v(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
        const Matrix& p = model.params().values()[i];
        opt_m[i] = Matrix::Zero(p.rows(), p.cols());
        opt_v[i] = Matrix::Zero(p.rows(), p.cols());
    }
    std::uint64_t step = 0;

    TrainReport report;
    report.config_hash = cfg.config_hash();
    report.seed = cfg.seed;

    auto write_checkpoint = [&](int completed_epochs, double best, const std::string& path) {
        Checkpoint ck;
        ck.config = cfg;
        ck.step = step;
        ck.epoch = completed_epochs;
        ck.best_val_total = best;
        ck.names = model.params().names();
        ck.values = model.params().values();
        ck.opt_m = opt_m;
        ck.opt_v = opt_v;
        save_checkpoint(ck, path);
    };

    if (tc.epochs == 0) {
        // Initial weights, empty report.
        write_checkpoint(0, report.best_val_total, checkpoint_out);
        if (!final_out.empty()) write_checkpoint(0, report.best_val_total, final_out);
        return report;
    }

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_main = lr_at_epoch(tc.lr_main, epoch, tc);
        const double lr_backbone = lr_at_epoch(tc.lr_backbone, epoch, tc);

        std::vector<std::size_t> order = split.train;
        RngStream shuffle = derive_stream(cfg.seed, kShuffleTag, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle.uniform_index(i + 1)]);

        double sum_total = 0.0, sum_trans = 0.0, sum_rot = 0.0;
        std::size_t n_steps = 0, n_clipped = 0;

        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            const auto batch_n = static_cast<double>(stop - start);

            nn::Tape tape;
            const std::vector<int> leaves = model.bind(tape);
            int batch_total = -1;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const dataset::DatasetRecord& r = records[order[bi]];
                const auto pred =
                    model.forward(tape, leaves, r.mask, r.height, r.width, r.points);
                const auto ln = model.loss(tape, pred, r.label_dt, r.label_dq);
                sum_total += tape.value(ln.total)(0, 0);
                sum_trans += tape.value(ln.trans)(0, 0);
                sum_rot += tape.value(ln.rot)(0, 0);
                batch_total = batch_total < 0 ? ln.total : tape.add(batch_total, ln.total);
            }
            const int batch_mean = tape.scale(batch_total, 1.0 / batch_n);
            const double loss_value = tape.value(batch_mean)(0, 0);
            if (!std::isfinite(loss_value) || loss_value > tc.diverge_threshold) {
                std::ostringstream dump;
                dump << "training diverged: loss " << loss_value << " at epoch " << epoch
                     << " step " << step << " (threshold " << tc.diverge_threshold << ")";
                throw DivergedLoss(dump.str());
            }
            tape.backward(batch_mean);

            double norm_sq = 0.0;
            for (std::size_t i = 0; i < n_params; ++i) {
                const double g = tape.grad(leaves[i]).squaredNorm();
                if (active[i]) norm_sq += g;
                else if (g != 0.0)
                    throw Error("gradient reached ablated parameter " +
                                model.params().names()[i]);
            }
            double scale = 1.0;
            const double norm = std::sqrt(norm_sq);
            if (norm > tc.clip_norm) {
                scale = tc.clip_norm / norm;
                ++n_clipped;
            }

            ++step;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            for (std::size_t i = 0; i < n_params; ++i) {
                if (!active[i]) continue;
                const Matrix g = tape.grad(leaves[i]) * scale;
                opt_m[i] = kBeta1 * opt_m[i] + (1.0 - kBeta1) * g;
                opt_v[i].array() = kBeta2 * opt_v[i].array() + (1.0 - kBeta2) * g.array().square();
                const double lr = backbone[i] ? lr_backbone : lr_main;
                Matrix& p = model.params().values()[i];
                // Decoupled weight decay, then the adaptive step.
                p.array() -= lr * tc.weight_decay * p.array();
                p.array() -=
                    lr * (opt_m[i].array() / bc1) / ((opt_v[i].array() / bc2).sqrt() + kEps);
            }
            ++n_steps;
        }

        EpochStats s;
        s.epoch = epoch;
        const auto train_n = static_cast<double>(order.size());
        s.train_total = sum_total / train_n;
        s.train_trans = sum_trans / train_n;
        s.train_rot = sum_rot / train_n;
        s.lr_main = lr_main;
        s.lr_backbone = lr_backbone;
        s.clip_fraction = n_steps == 0 ? 0.0 : static_cast<double>(n_clipped) / n_steps;

        double v_total = 0.0, v_trans = 0.0, v_rot = 0.0, v_terr = 0.0, v_gerr = 0.0;
        for (std::size_t vi : split.val) {
            const dataset::DatasetRecord& r = records[vi];
            const nn::PosePrediction p = model.predict(r.mask, r.height, r.width, r.points);
            const nn::LossBreakdown lb =
                nn::pose_loss(p, r.label_dt, r.label_dq, cfg.model.lambda_rot);
            v_total += lb.total;
            v_trans += lb.trans;
            v_rot += lb.rot;
            v_terr += (p.dt - r.label_dt).norm();
            v_gerr += geometry::geodesic_distance(p.dq, r.label_dq);
        }
        const auto val_n = static_cast<double>(split.val.size());
        s.val_total = v_total / val_n;
        s.val_trans = v_trans / val_n;
        s.val_rot = v_rot / val_n;
        s.val_trans_err_m = v_terr / val_n;
        s.val_geo_err_rad = v_gerr / val_n;
        s.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (s.val_total < report.best_val_total) {
            report.best_val_total = s.val_total;
            report.best_epoch = epoch;
            write_checkpoint(epoch + 1, report.best_val_total, checkpoint_out);
        }
        report.epochs.push_back(s);
        log_epoch(epoch_log, s);
    }
    if (!final_out.empty()) write_checkpoint(tc.epochs, report.best_val_total, final_out);
    return report;
}

TrainReport train_on_file(const PipelineConfig& cfg, const std::string& dataset_path,
                          const std::string& checkpoint_out, std::ostream* epoch_log,
                          const std::string& final_out) {
    const dataset::Dataset ds = dataset::read_dataset(dataset_path);
    return train(cfg, ds.records, checkpoint_out, epoch_log, final_out);
}

RegressionMetrics evaluate_regression(const nn::Mvpnet& model,
                                      const std::vector<dataset::DatasetRecord>& records,
                                      dataset::SplitTag tag) {
    std::vector<double> trans, geo;
    for (const dataset::DatasetRecord& r : records) {
        if (r.meta.split != tag) continue;
        const nn::PosePrediction p = model.predict(r.mask, r.height, r.width, r.points);
        trans.push_back((p.dt - r.label_dt).norm());
        geo.push_back(geometry::geodesic_distance(p.dq, r.label_dq));
    }
    if (trans.empty()) throw EmptyInput("evaluate_regression: empty split");

    RegressionMetrics m;
    m.count = trans.size();
    const auto n = static_cast<double>(trans.size());
    for (double v : trans) m.mean_trans_m += v;
    for (double v : geo) m.mean_geo_rad += v;
    m.mean_trans_m /= n;
    m.mean_geo_rad /= n;
    std::sort(trans.begin(), trans.end());
    std::sort(geo.begin(), geo.end());
    m.median_trans_m = trans[(trans.size() - 1) / 2];  // lower midpoint
    m.median_geo_rad = geo[(geo.size() - 1) / 2];
    return m;
}

}  // namespace optiview::train
