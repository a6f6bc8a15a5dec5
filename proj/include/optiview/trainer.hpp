#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "optiview/config.hpp"
#include "optiview/dataset.hpp"
#include "optiview/mvpnet.hpp"

namespace optiview::train {

using nn::Matrix;

// Stepped decay lr0 * decay^floor(epoch / step_epochs), accumulated by
// repeated multiplication so the first boundary is lr0 * decay exactly.
double lr_at_epoch(double lr0, int epoch, const TrainConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double train_total = 0.0, train_trans = 0.0, train_rot = 0.0;
    double val_total = 0.0, val_trans = 0.0, val_rot = 0.0;
    double val_trans_err_m = 0.0;   // mean translation error, meters
    double val_geo_err_rad = 0.0;   // mean geodesic error, radians
    double lr_main = 0.0, lr_backbone = 0.0;
    double clip_fraction = 0.0;     // optimizer steps hit by the norm clip
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // -1 when no validation pass ran (epochs == 0)
    double best_val_total = std::numeric_limits<double>::infinity();
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

// Model weights plus optimizer state, enough to reproduce or continue a
// run: the full config echo and the RNG derivation coordinates (seed and
// completed-epoch count) rather than raw engine state.
struct Checkpoint {
    PipelineConfig config;
    std::uint64_t step = 0;  // optimizer steps taken
    int epoch = 0;           // completed epochs at save time
    double best_val_total = std::numeric_limits<double>::infinity();
    std::vector<std::string> names;
    std::vector<Matrix> values;  // one per name, model shapes
    std::vector<Matrix> opt_m;   // AdamW first moment
    std::vector<Matrix> opt_v;   // AdamW second moment
};

// Versioned "MVPC" binary with a trailing CRC; the write lands via
// write-temp-then-rename so a crash never leaves a half checkpoint.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // VersionMismatch / CorruptRecord

// Rebuilds the model from the config echo and installs the stored
// weights. Strict: the stored name set and shapes must match the freshly
// constructed model exactly.
nn::Mvpnet model_from_checkpoint(const Checkpoint& ck);

// Runs the full supervised loop on the record list (split tags must be
// present), writing the best-validation checkpoint to checkpoint_out and
// one structured JSON line per epoch to epoch_log when given. When
// final_out is non-empty the last-epoch state is saved there as well.
TrainReport train(const PipelineConfig& cfg, const std::vector<dataset::DatasetRecord>& records,
                  const std::string& checkpoint_out, std::ostream* epoch_log = nullptr,
                  const std::string& final_out = {});

// Reads the dataset container, then trains.
TrainReport train_on_file(const PipelineConfig& cfg, const std::string& dataset_path,
                          const std::string& checkpoint_out, std::ostream* epoch_log = nullptr,
                          const std::string& final_out = {});

struct RegressionMetrics {
    double mean_trans_m = 0.0, median_trans_m = 0.0;
    double mean_geo_rad = 0.0, median_geo_rad = 0.0;
    std::size_t count = 0;
};

// Deterministic pass over the records carrying the given split tag.
// Medians use the lower-midpoint rule (element (n-1)/2 of the sorted
// errors). Throws EmptyInput when no record carries the tag.
RegressionMetrics evaluate_regression(const nn::Mvpnet& model,
                                      const std::vector<dataset::DatasetRecord>& records,
                                      dataset::SplitTag tag);

}  // namespace optiview::train
