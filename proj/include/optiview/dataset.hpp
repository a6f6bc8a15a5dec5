#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "optiview/config.hpp"
#include "optiview/geometry.hpp"
#include "optiview/scene.hpp"

namespace optiview::dataset {

using geometry::Pose;
using geometry::UnitQuaternion;
using geometry::Vec3;

// Scale bucket for viewpoint-library reuse; bucket 0 starts at scale_min.
int scale_bucket(double scale, const PipelineConfig& cfg);
int n_scale_buckets(const PipelineConfig& cfg);
// Representative (center) scale of each bucket.
std::vector<double> library_scales(const PipelineConfig& cfg);

// Cached optimal viewpoints: (category, scale bucket) -> object-frame
// camera offset p_cam_obj, produced by viewscore.select_optimal_view.
class ViewpointLibrary {
public:
    struct Entry {
        int category = 0;
        int bucket = 0;
        Vec3 p_cam_obj;
        double mean_score = 0.0;
        int cluster_size = 0;
    };

    void insert(Entry e);
    const Entry& lookup(int category, int bucket) const;  // throws MissingLibraryEntry
    bool contains(int category, int bucket) const;
    const std::vector<Entry>& entries() const { return entries_; }

    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;

    void save(const std::string& path) const;
    static ViewpointLibrary load(const std::string& path);  // VersionMismatch on bad magic

private:
    std::vector<Entry> entries_;
    std::map<std::pair<int, int>, std::size_t> index_;
};

// Object at the canonical library pose (workspace center, identity yaw)
// with mid-range sensor noise and dropout.
scene::SceneSpec make_canonical_scene(int category, double scale, const PipelineConfig& cfg);

// Runs the full candidate-score-cluster pipeline for every requested
// (category, scale) and caches the resulting offsets. Deterministic in
// cfg.seed. progress, if given, is called after each entry.
ViewpointLibrary build_viewpoint_library(
    const std::vector<int>& categories, const std::vector<double>& scales,
    const PipelineConfig& cfg,
    const std::function<void(std::size_t done, std::size_t total)>& progress = {});

// One random training scene: uniform category, pose, scale, and sensor
// parameters from the configured ranges.
scene::SceneSpec domain_randomize(const PipelineConfig& cfg, RngStream& rng);

enum class SplitTag : std::uint8_t { kNone = 0, kTrain = 1, kTest = 2 };

struct RecordMeta {
    std::uint64_t scene_seed = 0;
    int category_id = 0;
    double scale = 1.0;
    Pose camera;
    Vec3 t_best;
    std::uint32_t pad_count = 0;  // points cycled to reach N
    SplitTag split = SplitTag::kNone;
};

struct DatasetRecord {
    int height = 0, width = 0;
    std::vector<std::uint8_t> mask;  // H*W, row-major
    std::vector<Vec3> points;        // exactly N, camera frame
    Vec3 label_dt;                   // Eq. 2, initial-camera frame
    UnitQuaternion label_dq;
    RecordMeta meta;
};

// Greedy farthest-point sampling: max-min selection starting at
// start_index; distance ties pick the lowest index. M < n pads by cycling
// the selected points. Output order is selection order.
std::vector<int> fps_indices(const std::vector<Vec3>& points, int n, int start_index = 0);
std::vector<Vec3> fps(const std::vector<Vec3>& points, int n, int start_index = 0);

// Independent point dropout keeping each point with probability 1 - rate;
// the first point survives if everything else is dropped.
std::vector<Vec3> augment(const std::vector<Vec3>& points, double dropout_rate, RngStream& rng);

// Renders one initial view of the scene and assembles inputs + the Eq. 2
// label toward the library viewpoint. Draw order on rng: camera band
// sample, observation, augmentation rate U(0, augment_dropout_max), then
// per-point dropout. Throws EmptyObservation (caller drops + logs) and
// MissingLibraryEntry.
DatasetRecord build_record(const scene::SceneSpec& scn, const ViewpointLibrary& library,
                           const PipelineConfig& cfg, RngStream& rng);

struct BuildResult {
    std::vector<DatasetRecord> records;      // in scene-index order
    std::vector<std::uint64_t> skipped;      // scene indices with no observation
};

// Generates cfg.dataset.n_records scene indices and builds a record per
// index with per-index RNG streams; parallel but order-deterministic.
BuildResult build_dataset(
    const PipelineConfig& cfg, const ViewpointLibrary& library,
    const std::function<void(std::size_t done, std::size_t total)>& progress = {});

// Versioned binary container: header (magic, version, N, H, W, count,
// config hash), then length-prefixed CRC-checked record blobs. Points are
// float32 little-endian; labels and poses float64; masks packed bits.
void write_dataset(const std::vector<DatasetRecord>& records, const std::string& path,
                   std::uint64_t config_hash);

struct Dataset {
    std::vector<DatasetRecord> records;
    std::uint64_t config_hash = 0;
};
Dataset read_dataset(const std::string& path);  // VersionMismatch / CorruptRecord

struct SplitSpec {
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
};

// Deterministic shuffle, then first floor(train_fraction * n) records are
// train and the rest test; split tags are set on the returned copies.
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split(
    const std::vector<DatasetRecord>& records, const SplitSpec& spec);

}  // namespace optiview::dataset
