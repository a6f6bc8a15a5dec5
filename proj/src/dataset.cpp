#include "optiview/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "optiview/checksum.hpp"
#include "optiview/errors.hpp"
#include "optiview/parallel.hpp"
#include "optiview/render.hpp"
#include "optiview/viewscore.hpp"

namespace optiview::dataset {
namespace {

constexpr std::uint64_t kLibraryTag = 0x6c6962;   // "lib"
constexpr std::uint64_t kSceneTag = 0x7363656e;   // "scen"
constexpr std::uint64_t kRecordTag = 0x726563;    // "rec"

constexpr char kMagic[4] = {'M', 'V', 'P', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

int scale_bucket(double scale, const PipelineConfig& cfg) {
    const double w = cfg.viewscore.scale_bucket_width;
    const int n = n_scale_buckets(cfg);
    const int b = static_cast<int>(std::floor((scale - cfg.scene.scale_min) / w));
    return std::clamp(b, 0, n - 1);
}

int n_scale_buckets(const PipelineConfig& cfg) {
    const double span = cfg.scene.scale_max - cfg.scene.scale_min;
    return std::max(1, static_cast<int>(std::ceil(span / cfg.viewscore.scale_bucket_width - 1e-9)));
}

std::vector<double> library_scales(const PipelineConfig& cfg) {
    const int n = n_scale_buckets(cfg);
    std::vector<double> scales(n);
    for (int b = 0; b < n; ++b) {
        const double lo = cfg.scene.scale_min + b * cfg.viewscore.scale_bucket_width;
        const double hi = std::min(lo + cfg.viewscore.scale_bucket_width, cfg.scene.scale_max);
        scales[b] = 0.5 * (lo + hi);
    }
    return scales;
}

void ViewpointLibrary::insert(Entry e) {
    index_[{e.category, e.bucket}] = entries_.size();
    entries_.push_back(std::move(e));
}

const ViewpointLibrary::Entry& ViewpointLibrary::lookup(int category, int bucket) const {
    const auto it = index_.find({category, bucket});
    if (it == index_.end())
        throw MissingLibraryEntry("no viewpoint for category " + std::to_string(category) +
                                  " bucket " + std::to_string(bucket));
    return entries_[it->second];
}

bool ViewpointLibrary::contains(int category, int bucket) const {
    return index_.count({category, bucket}) > 0;
}

void ViewpointLibrary::save(const std::string& path) const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_)
        entries.push_back({{"category", e.category},
                           {"bucket", e.bucket},
                           {"p_cam_obj", {e.p_cam_obj.x, e.p_cam_obj.y, e.p_cam_obj.z}},
                           {"mean_score", e.mean_score},
                           {"cluster_size", e.cluster_size}});
    const nlohmann::json j = {{"format", "optiview-viewpoint-library"},
                              {"version", 1},
                              {"config_hash", config_hash},
                              {"seed", seed},
                              {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

ViewpointLibrary ViewpointLibrary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse library " + path + ": " + e.what());
    }
    if (j.value("format", "") != "optiview-viewpoint-library" || j.value("version", 0) != 1)
        throw VersionMismatch("not a version-1 viewpoint library: " + path);
    ViewpointLibrary lib;
    lib.config_hash = j.at("config_hash");
    lib.seed = j.at("seed");
    for (const auto& e : j.at("entries")) {
        const auto& p = e.at("p_cam_obj");
        lib.insert({e.at("category"), e.at("bucket"),
                    Vec3{p.at(0), p.at(1), p.at(2)}, e.at("mean_score"), e.at("cluster_size")});
    }
    return lib;
}

scene::SceneSpec make_canonical_scene(int category, double scale, const PipelineConfig& cfg) {
    scene::SceneSpec s;
    s.target = scene::make_procedural_object(category, cfg.seed);
    s.target.scale = scale;
    s.target.pose = {Vec3{(cfg.scene.workspace_x_min + cfg.scene.workspace_x_max) / 2,
                          (cfg.scene.workspace_y_min + cfg.scene.workspace_y_max) / 2, 0.0},
                     UnitQuaternion::identity()};
    s.enclosure = scene::make_shelf_enclosure(cfg.scene.enclosure_depth, cfg.scene.enclosure_width,
                                              cfg.scene.enclosure_height, cfg.scene.wall_thickness,
                                              cfg.scene.enclosure_elevation_max);
    s.depth_noise_sigma = 0.5 * (cfg.scene.noise_sigma_min + cfg.scene.noise_sigma_max);
    s.dropout_rate = 0.5 * (cfg.scene.dropout_min + cfg.scene.dropout_max);
    s.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(category));
    return s;
}

ViewpointLibrary build_viewpoint_library(
    const std::vector<int>& categories, const std::vector<double>& scales,
    const PipelineConfig& cfg,
    const std::function<void(std::size_t, std::size_t)>& progress) {
    if (categories.empty() || scales.empty())
        throw EmptyInput("library build needs categories and scales");

    const scene::CameraIntrinsics score_intr =
        cfg.scene.intrinsics.scaled_to(cfg.scene.score_width, cfg.scene.score_height);
    const viewscore::ClusterParams cluster{cfg.viewscore.dbscan_eps, cfg.viewscore.dbscan_min_pts};

    ViewpointLibrary lib;
    lib.config_hash = cfg.config_hash();
    lib.seed = cfg.seed;
    const std::size_t total = categories.size() * scales.size();
    std::size_t done = 0;
    for (int category : categories) {
        for (std::size_t si = 0; si < scales.size(); ++si) {
            const double scale = scales[si];
            const int bucket = scale_bucket(scale, cfg);
            const scene::SceneSpec scn = make_canonical_scene(category, scale, cfg);
            const viewscore::SurrogateGraspEvaluator evaluator(
                cfg.viewscore, score_intr, scene::object_surface_area(scn.target));
            const RngStream rng = derive_stream(cfg.seed, kLibraryTag)
                                      .derive(static_cast<std::uint64_t>(category),
                                              static_cast<std::uint64_t>(bucket));
            const auto samples = viewscore::evaluate_candidates(
                scn, cfg.viewscore.band, score_intr, cfg.viewscore.n_candidates, evaluator,
                cfg.viewscore.n_repeats, rng, cfg.workers);
            const auto best = viewscore::select_optimal_view(samples, cfg.viewscore.top_m,
                                                             cluster, scn.target.pose);
            lib.insert({category, bucket, best.p_cam_obj, best.cluster_mean_score,
                        best.largest_cluster_size});
            if (progress) progress(++done, total);
        }
    }
    return lib;
}

scene::SceneSpec domain_randomize(const PipelineConfig& cfg, RngStream& rng) {
    const std::vector<int>& cats = cfg.dataset.categories;
    int category;
    if (cats.empty())
        category = static_cast<int>(rng.uniform_index(scene::kSimilarCategories));
    else
        category = cats[rng.uniform_index(cats.size())];

    scene::SceneSpec s;
    const std::uint64_t object_seed = rng.next_u64();
    s.target = scene::make_procedural_object(category, object_seed);
    s.target.scale = rng.uniform(cfg.scene.scale_min, cfg.scene.scale_max);
    const double x = rng.uniform(cfg.scene.workspace_x_min, cfg.scene.workspace_x_max);
    const double y = rng.uniform(cfg.scene.workspace_y_min, cfg.scene.workspace_y_max);
    const double yaw = rng.uniform(cfg.scene.yaw_min, cfg.scene.yaw_max);
    s.target.pose = {Vec3{x, y, 0.0}, UnitQuaternion::from_axis_angle({0, 0, 1}, yaw)};
    s.enclosure = scene::make_shelf_enclosure(cfg.scene.enclosure_depth, cfg.scene.enclosure_width,
                                              cfg.scene.enclosure_height, cfg.scene.wall_thickness,
                                              cfg.scene.enclosure_elevation_max);
    s.depth_noise_sigma = rng.uniform(cfg.scene.noise_sigma_min, cfg.scene.noise_sigma_max);
    s.dropout_rate = rng.uniform(cfg.scene.dropout_min, cfg.scene.dropout_max);
    s.seed = rng.next_u64();
    return s;
}

std::vector<int> fps_indices(const std::vector<Vec3>& points, int n, int start_index) {
    const int m = static_cast<int>(points.size());
    if (m < 1 || n < 1) throw EmptyInput("fps needs at least one point and n >= 1");
    if (start_index < 0 || start_index >= m) throw DataError("fps start index out of range");

    std::vector<int> selected;
    selected.reserve(n);
    std::vector<double> min_dist(m, std::numeric_limits<double>::infinity());
    int current = start_index;
    const int picks = std::min(n, m);
    for (int s = 0; s < picks; ++s) {
        selected.push_back(current);
        int next = -1;
        double best = -1.0;
        for (int i = 0; i < m; ++i) {
            const double d = (points[i] - points[current]).squared_norm();
            if (d < min_dist[i]) min_dist[i] = d;
            if (min_dist[i] > best) {  // strict: ties keep the lowest index
                best = min_dist[i];
                next = i;
            }
        }
        current = next;
    }
    // Sparse clouds pad by cycling the selection.
    for (int s = picks; s < n; ++s) selected.push_back(selected[s % picks]);
    return selected;
}

std::vector<Vec3> fps(const std::vector<Vec3>& points, int n, int start_index) {
    const std::vector<int> idx = fps_indices(points, n, start_index);
    std::vector<Vec3> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(points[i]);
    return out;
}

std::vector<Vec3> augment(const std::vector<Vec3>& points, double dropout_rate, RngStream& rng) {
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw DataError("augment dropout rate must be in [0, 1)");
    std::vector<Vec3> kept;
    kept.reserve(points.size());
    for (const Vec3& p : points)
        if (!rng.bernoulli(dropout_rate)) kept.push_back(p);
    if (kept.empty() && !points.empty()) kept.push_back(points.front());
    return kept;
}

DatasetRecord build_record(const scene::SceneSpec& scn, const ViewpointLibrary& library,
                           const PipelineConfig& cfg, RngStream& rng) {
    const auto& entry = library.lookup(scn.target.category_id, scale_bucket(scn.target.scale, cfg));

    const Pose camera = scene::sample_side_viewpoint(scn, cfg.dataset.initial_band, rng);
    const scene::Observation obs = scene::observe(scn, camera, cfg.scene.intrinsics, rng);

    const Vec3 t_best = geometry::optimal_view_world(scn.target.pose.translation,
                                                     scn.target.pose.rotation, entry.p_cam_obj);
    const geometry::PoseDelta label =
        geometry::pose_delta(camera, t_best, scene::scene_aim_point(scn), {0, 0, 1});

    const double rate = rng.uniform(0.0, cfg.dataset.augment_dropout_max);
    const std::vector<Vec3> after_drop = augment(obs.points, rate, rng);
    const int n = cfg.dataset.n_points;

    DatasetRecord rec;
    rec.height = obs.height;
    rec.width = obs.width;
    rec.mask = obs.mask;
    rec.points = fps(after_drop, n, 0);
    rec.label_dt = label.dt;
    rec.label_dq = label.dq;
    rec.meta.scene_seed = scn.seed;
    rec.meta.category_id = scn.target.category_id;
    rec.meta.scale = scn.target.scale;
    rec.meta.camera = camera;
    rec.meta.t_best = t_best;
    rec.meta.pad_count = static_cast<std::uint32_t>(
        std::max<std::int64_t>(0, n - static_cast<std::int64_t>(after_drop.size())));
    rec.meta.split = SplitTag::kNone;
    return rec;
}

BuildResult build_dataset(const PipelineConfig& cfg, const ViewpointLibrary& library,
                          const std::function<void(std::size_t, std::size_t)>& progress) {
    const std::size_t total = static_cast<std::size_t>(cfg.dataset.n_records);
    std::vector<DatasetRecord> slots(total);
    std::vector<char> ok(total, 0);
    std::atomic<std::size_t> done{0};

    parallel_for(total, cfg.workers, [&](std::size_t i) {
        RngStream scene_rng = derive_stream(cfg.seed, kSceneTag, i);
        const scene::SceneSpec scn = domain_randomize(cfg, scene_rng);
        RngStream record_rng = derive_stream(cfg.seed, kRecordTag, i);
        try {
            slots[i] = build_record(scn, library, cfg, record_rng);
            ok[i] = 1;
        } catch (const EmptyObservation&) {
            ok[i] = 0;  // dropped, reported in BuildResult::skipped
        }
        if (progress) progress(done.fetch_add(1) + 1, total);
    });

    BuildResult result;
    result.records.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        if (ok[i])
            result.records.push_back(std::move(slots[i]));
        else
            result.skipped.push_back(i);
    }
    return result;
}

namespace {

void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
void put_u32(std::string& buf, std::uint32_t v) { put_bytes(buf, &v, 4); }
void put_u64(std::string& buf, std::uint64_t v) { put_bytes(buf, &v, 8); }
void put_i32(std::string& buf, std::int32_t v) { put_bytes(buf, &v, 4); }
void put_f32(std::string& buf, float v) { put_bytes(buf, &v, 4); }
void put_f64(std::string& buf, double v) { put_bytes(buf, &v, 8); }

struct Cursor {
    const char* p;
    const char* end;
    void take(void* out, std::size_t n) {
        if (p + n > end) throw CorruptRecord("record blob truncated");
        std::memcpy(out, p, n);
        p += n;
    }
    std::uint32_t u32() { std::uint32_t v; take(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; take(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; take(&v, 4); return v; }
    float f32() { float v; take(&v, 4); return v; }
    double f64() { double v; take(&v, 8); return v; }
};

std::string encode_record(const DatasetRecord& r) {
    std::string buf;
    const std::size_t px = static_cast<std::size_t>(r.height) * r.width;
    std::vector<std::uint8_t> bits((px + 7) / 8, 0);
    for (std::size_t i = 0; i < px; ++i)
        if (r.mask[i]) bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    put_bytes(buf, bits.data(), bits.size());
    for (const Vec3& p : r.points) {
        put_f32(buf, static_cast<float>(p.x));
        put_f32(buf, static_cast<float>(p.y));
        put_f32(buf, static_cast<float>(p.z));
    }
    put_f64(buf, r.label_dt.x);
    put_f64(buf, r.label_dt.y);
    put_f64(buf, r.label_dt.z);
    put_f64(buf, r.label_dq.w);
    put_f64(buf, r.label_dq.x);
    put_f64(buf, r.label_dq.y);
    put_f64(buf, r.label_dq.z);
    put_u64(buf, r.meta.scene_seed);
    put_i32(buf, r.meta.category_id);
    put_f64(buf, r.meta.scale);
    put_f64(buf, r.meta.camera.translation.x);
    put_f64(buf, r.meta.camera.translation.y);
    put_f64(buf, r.meta.camera.translation.z);
    put_f64(buf, r.meta.camera.rotation.w);
    put_f64(buf, r.meta.camera.rotation.x);
    put_f64(buf, r.meta.camera.rotation.y);
    put_f64(buf, r.meta.camera.rotation.z);
    put_f64(buf, r.meta.t_best.x);
    put_f64(buf, r.meta.t_best.y);
    put_f64(buf, r.meta.t_best.z);
    put_u32(buf, r.meta.pad_count);
    buf.push_back(static_cast<char>(r.meta.split));
    return buf;
}

DatasetRecord decode_record(const std::string& blob, int n_points, int height, int width) {
    Cursor c{blob.data(), blob.data() + blob.size()};
    DatasetRecord r;
    r.height = height;
    r.width = width;
    const std::size_t px = static_cast<std::size_t>(height) * width;
    std::vector<std::uint8_t> bits((px + 7) / 8);
    c.take(bits.data(), bits.size());
    r.mask.resize(px);
    for (std::size_t i = 0; i < px; ++i)
        r.mask[i] = (bits[i >> 3] >> (i & 7)) & 1u;
    r.points.resize(n_points);
    for (Vec3& p : r.points) {
        p.x = c.f32();
        p.y = c.f32();
        p.z = c.f32();
    }
    r.label_dt = {c.f64(), c.f64(), c.f64()};
    const double w = c.f64(), x = c.f64(), y = c.f64(), z = c.f64();
    r.label_dq = UnitQuaternion::from_stored(w, x, y, z);
    r.meta.scene_seed = c.u64();
    r.meta.category_id = c.i32();
    r.meta.scale = c.f64();
    const double tx = c.f64(), ty = c.f64(), tz = c.f64();
    const double qw = c.f64(), qx = c.f64(), qy = c.f64(), qz = c.f64();
    r.meta.camera = {Vec3{tx, ty, tz}, UnitQuaternion::from_stored(qw, qx, qy, qz)};
    r.meta.t_best = {c.f64(), c.f64(), c.f64()};
    r.meta.pad_count = c.u32();
    std::uint8_t tag;
    c.take(&tag, 1);
    if (tag > 2) throw CorruptRecord("bad split tag");
    r.meta.split = static_cast<SplitTag>(tag);
    if (c.p != c.end) throw CorruptRecord("record blob has trailing bytes");
    return r;
}

}  // namespace

void write_dataset(const std::vector<DatasetRecord>& records, const std::string& path,
                   std::uint64_t config_hash) {
    if (records.empty()) throw EmptyInput("no records to write");
    const int n = static_cast<int>(records[0].points.size());
    const int h = records[0].height, w = records[0].width;
    for (const auto& r : records)
        if (static_cast<int>(r.points.size()) != n || r.height != h || r.width != w ||
            static_cast<int>(r.mask.size()) != h * w)
            throw ShapeMismatch("records disagree on N/H/W");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    std::string header;
    put_bytes(header, kMagic, 4);
    put_u32(header, kFormatVersion);
    put_u32(header, static_cast<std::uint32_t>(n));
    put_u32(header, static_cast<std::uint32_t>(h));
    put_u32(header, static_cast<std::uint32_t>(w));
    put_u64(header, records.size());
    put_u64(header, config_hash);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    for (const auto& r : records) {
        const std::string blob = encode_record(r);
        std::string framed;
        put_u32(framed, static_cast<std::uint32_t>(blob.size()));
        framed += blob;
        put_u32(framed, crc32(blob.data(), blob.size()));
        out.write(framed.data(), static_cast<std::streamsize>(framed.size()));
    }
    if (!out) throw DataError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw VersionMismatch("not a dataset container: " + path);
    auto read_u32 = [&in]() {
        std::uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto read_u64 = [&in]() {
        std::uint64_t v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint32_t version = read_u32();
    if (version != kFormatVersion)
        throw VersionMismatch("dataset container version " + std::to_string(version) +
                              ", expected " + std::to_string(kFormatVersion));
    const int n = static_cast<int>(read_u32());
    const int h = static_cast<int>(read_u32());
    const int w = static_cast<int>(read_u32());
    const std::uint64_t count = read_u64();
    Dataset ds;
    ds.config_hash = read_u64();
    if (!in) throw CorruptRecord("dataset header truncated");

    ds.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t size = read_u32();
        if (!in) throw CorruptRecord("record " + std::to_string(i) + " missing");
        if (size > (1u << 30)) throw CorruptRecord("record size implausible");
        std::string blob(size, '\0');
        in.read(blob.data(), size);
        const std::uint32_t stored_crc = read_u32();
        if (!in) throw CorruptRecord("record " + std::to_string(i) + " truncated");
        if (crc32(blob.data(), blob.size()) != stored_crc)
            throw CorruptRecord("checksum mismatch in record " + std::to_string(i));
        ds.records.push_back(decode_record(blob, n, h, w));
    }
    in.peek();
    if (!in.eof()) throw CorruptRecord("trailing bytes after last record");
    return ds;
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split(
    const std::vector<DatasetRecord>& records, const SplitSpec& spec) {
    if (records.empty()) throw EmptyInput("cannot split an empty dataset");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(spec.seed);
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_index(i + 1)]);

    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(spec.train_fraction * records.size()));
    std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        DatasetRecord r = records[order[i]];
        r.meta.split = i < n_train ? SplitTag::kTrain : SplitTag::kTest;
        (i < n_train ? out.first : out.second).push_back(std::move(r));
    }
    return out;
}

}  // namespace optiview::dataset
