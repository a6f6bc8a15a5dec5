#include "optiview/config.hpp"

#include <fstream>

#include "optiview/errors.hpp"

namespace optiview {
namespace {

using nlohmann::json;

json band_to_json(const scene::ViewBand& b) {
    return {{"radius", {b.radius_min, b.radius_max}},
            {"elevation", {b.elevation_min, b.elevation_max}},
            {"azimuth_half_angle", b.azimuth_half_angle},
            {"jitter_sigma", b.jitter_sigma}};
}

scene::ViewBand band_from_json(const json& j) {
    scene::ViewBand b;
    b.radius_min = j.at("radius").at(0);
    b.radius_max = j.at("radius").at(1);
    b.elevation_min = j.at("elevation").at(0);
    b.elevation_max = j.at("elevation").at(1);
    b.azimuth_half_angle = j.at("azimuth_half_angle");
    b.jitter_sigma = j.at("jitter_sigma");
    return b;
}

json intrinsics_to_json(const scene::CameraIntrinsics& c) {
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
            {"width", c.width}, {"height", c.height}};
}

scene::CameraIntrinsics intrinsics_from_json(const json& j) {
    return {j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"), j.at("width"), j.at("height")};
}

// Overlays `patch` onto `base`, insisting that every patch key already
// exists in base with a compatible shape; typos in config files fail loudly.
void merge_checked(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object() || !base.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (!base.contains(it.key()))
            throw ConfigError("unknown config key '" + path + it.key() + "'");
        if (base[it.key()].is_object())
            merge_checked(base[it.key()], it.value(), path + it.key() + ".");
        else
            base[it.key()] = it.value();
    }
}

void require_range(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config out of range: " + what);
}

}  // namespace

json PipelineConfig::to_json() const {
    return {
        {"seed", seed},
        {"output_root", output_root},
        {"workers", workers},
        {"scene",
         {{"intrinsics", intrinsics_to_json(scene.intrinsics)},
          {"score_width", scene.score_width},
          {"score_height", scene.score_height},
          {"enclosure_depth", scene.enclosure_depth},
          {"enclosure_width", scene.enclosure_width},
          {"enclosure_height", scene.enclosure_height},
          {"wall_thickness", scene.wall_thickness},
          {"enclosure_elevation_max", scene.enclosure_elevation_max},
          {"workspace_x_min", scene.workspace_x_min},
          {"workspace_x_max", scene.workspace_x_max},
          {"workspace_y_min", scene.workspace_y_min},
          {"workspace_y_max", scene.workspace_y_max},
          {"yaw_min", scene.yaw_min},
          {"yaw_max", scene.yaw_max},
          {"scale_min", scene.scale_min},
          {"scale_max", scene.scale_max},
          {"noise_sigma_min", scene.noise_sigma_min},
          {"noise_sigma_max", scene.noise_sigma_max},
          {"dropout_min", scene.dropout_min},
          {"dropout_max", scene.dropout_max}}},
        {"viewscore",
         {{"n_candidates", viewscore.n_candidates},
          {"n_repeats", viewscore.n_repeats},
          {"top_m", viewscore.top_m},
          {"top_pairs", viewscore.top_pairs},
          {"band", band_to_json(viewscore.band)},
          {"dbscan_eps", viewscore.dbscan_eps},
          {"dbscan_min_pts", viewscore.dbscan_min_pts},
          {"gripper_width", viewscore.gripper_width},
          {"antipodal_tol", viewscore.antipodal_tol},
          {"normal_knn", viewscore.normal_knn},
          {"coverage_px_factor", viewscore.coverage_px_factor},
          {"scale_bucket_width", viewscore.scale_bucket_width}}},
        {"dataset",
         {{"n_records", dataset.n_records},
          {"n_points", dataset.n_points},
          {"train_fraction", dataset.train_fraction},
          {"augment_dropout_max", dataset.augment_dropout_max},
          {"initial_band", band_to_json(dataset.initial_band)},
          {"categories", dataset.categories}}},
        {"model",
         {{"embed_dim", model.embed_dim},
          {"n_heads", model.n_heads},
          {"n_layers", model.n_layers},
          {"mask_input", model.mask_input},
          {"sa1_centroids", model.sa1_centroids},
          {"sa1_k", model.sa1_k},
          {"local_tokens", model.local_tokens},
          {"sa2_k", model.sa2_k},
          {"global_res_blocks", model.global_res_blocks},
          {"head_hidden", model.head_hidden},
          {"lambda_rot", model.lambda_rot},
          {"use_mask_branch", model.use_mask_branch},
          {"use_local_points", model.use_local_points},
          {"use_global_points", model.use_global_points},
          {"use_position_embedding", model.use_position_embedding},
          {"use_transformer", model.use_transformer},
          {"use_absolute_coords", model.use_absolute_coords}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"lr_main", train.lr_main},
          {"lr_backbone", train.lr_backbone},
          {"weight_decay", train.weight_decay},
          {"lr_decay", train.lr_decay},
          {"lr_step_epochs", train.lr_step_epochs},
          {"clip_norm", train.clip_norm},
          {"diverge_threshold", train.diverge_threshold}}},
        {"eval",
         {{"n_trials", eval.n_trials},
          {"n_percentile_candidates", eval.n_percentile_candidates},
          {"tau_exec", eval.tau_exec},
          {"exec_top", eval.exec_top},
          {"attempt_cap", eval.attempt_cap},
          {"n_gsr_scenes", eval.n_gsr_scenes},
          {"landing_tol", eval.landing_tol}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    json merged = PipelineConfig{}.to_json();
    merge_checked(merged, j, "");

    PipelineConfig c;
    c.seed = merged.at("seed");
    c.output_root = merged.at("output_root");
    c.workers = merged.at("workers");

    const json& s = merged.at("scene");
    c.scene.intrinsics = intrinsics_from_json(s.at("intrinsics"));
    c.scene.score_width = s.at("score_width");
    c.scene.score_height = s.at("score_height");
    c.scene.enclosure_depth = s.at("enclosure_depth");
    c.scene.enclosure_width = s.at("enclosure_width");
    c.scene.enclosure_height = s.at("enclosure_height");
    c.scene.wall_thickness = s.at("wall_thickness");
    c.scene.enclosure_elevation_max = s.at("enclosure_elevation_max");
    c.scene.workspace_x_min = s.at("workspace_x_min");
    c.scene.workspace_x_max = s.at("workspace_x_max");
    c.scene.workspace_y_min = s.at("workspace_y_min");
    c.scene.workspace_y_max = s.at("workspace_y_max");
    c.scene.yaw_min = s.at("yaw_min");
    c.scene.yaw_max = s.at("yaw_max");
    c.scene.scale_min = s.at("scale_min");
    c.scene.scale_max = s.at("scale_max");
    c.scene.noise_sigma_min = s.at("noise_sigma_min");
    c.scene.noise_sigma_max = s.at("noise_sigma_max");
    c.scene.dropout_min = s.at("dropout_min");
    c.scene.dropout_max = s.at("dropout_max");

    const json& v = merged.at("viewscore");
    c.viewscore.n_candidates = v.at("n_candidates");
    c.viewscore.n_repeats = v.at("n_repeats");
    c.viewscore.top_m = v.at("top_m");
    c.viewscore.top_pairs = v.at("top_pairs");
    c.viewscore.band = band_from_json(v.at("band"));
    c.viewscore.dbscan_eps = v.at("dbscan_eps");
    c.viewscore.dbscan_min_pts = v.at("dbscan_min_pts");
    c.viewscore.gripper_width = v.at("gripper_width");
    c.viewscore.antipodal_tol = v.at("antipodal_tol");
    c.viewscore.normal_knn = v.at("normal_knn");
    c.viewscore.coverage_px_factor = v.at("coverage_px_factor");
    c.viewscore.scale_bucket_width = v.at("scale_bucket_width");

    const json& d = merged.at("dataset");
    c.dataset.n_records = d.at("n_records");
    c.dataset.n_points = d.at("n_points");
    c.dataset.train_fraction = d.at("train_fraction");
    c.dataset.augment_dropout_max = d.at("augment_dropout_max");
    c.dataset.initial_band = band_from_json(d.at("initial_band"));
    c.dataset.categories = d.at("categories").get<std::vector<int>>();

    const json& m = merged.at("model");
    c.model.embed_dim = m.at("embed_dim");
    c.model.n_heads = m.at("n_heads");
    c.model.n_layers = m.at("n_layers");
    c.model.mask_input = m.at("mask_input");
    c.model.sa1_centroids = m.at("sa1_centroids");
    c.model.sa1_k = m.at("sa1_k");
    c.model.local_tokens = m.at("local_tokens");
    c.model.sa2_k = m.at("sa2_k");
    c.model.global_res_blocks = m.at("global_res_blocks");
    c.model.head_hidden = m.at("head_hidden").get<std::vector<int>>();
    c.model.lambda_rot = m.at("lambda_rot");
    c.model.use_mask_branch = m.at("use_mask_branch");
    c.model.use_local_points = m.at("use_local_points");
    c.model.use_global_points = m.at("use_global_points");
    c.model.use_position_embedding = m.at("use_position_embedding");
    c.model.use_transformer = m.at("use_transformer");
    c.model.use_absolute_coords = m.at("use_absolute_coords");

    const json& t = merged.at("train");
    c.train.epochs = t.at("epochs");
    c.train.batch_size = t.at("batch_size");
    c.train.lr_main = t.at("lr_main");
    c.train.lr_backbone = t.at("lr_backbone");
    c.train.weight_decay = t.at("weight_decay");
    c.train.lr_decay = t.at("lr_decay");
    c.train.lr_step_epochs = t.at("lr_step_epochs");
    c.train.clip_norm = t.at("clip_norm");
    c.train.diverge_threshold = t.at("diverge_threshold");

    const json& e = merged.at("eval");
    c.eval.n_trials = e.at("n_trials");
    c.eval.n_percentile_candidates = e.at("n_percentile_candidates");
    c.eval.tau_exec = e.at("tau_exec");
    c.eval.exec_top = e.at("exec_top");
    c.eval.attempt_cap = e.at("attempt_cap");
    c.eval.n_gsr_scenes = e.at("n_gsr_scenes");
    c.eval.landing_tol = e.at("landing_tol");
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path,
                                    const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("cannot parse " + path + ": " + e.what());
        }
    }
    json merged = PipelineConfig{}.to_json();
    merge_checked(merged, j, "");
    for (const auto& ov : overrides) apply_override(merged, ov);
    PipelineConfig c = from_json(merged);
    c.validate();
    return c;
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::uint64_t PipelineConfig::config_hash() const { return fnv1a64(to_json().dump()); }

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* node = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (!node->is_object() || !node->contains(key))
            throw ConfigError("unknown config key '" + path + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // plain string
    if (node->is_object())
        throw ConfigError("cannot assign a scalar to section '" + path + "'");
    *node = parsed;
}

void PipelineConfig::validate() const {
    const auto& s = scene;
    require_range(s.intrinsics.fx > 0 && s.intrinsics.fy > 0 && s.intrinsics.width > 0 &&
                      s.intrinsics.height > 0,
                  "scene.intrinsics");
    require_range(s.score_width > 0 && s.score_height > 0, "scene.score resolution");
    require_range(s.enclosure_depth > 0 && s.enclosure_width > 0 && s.enclosure_height > 0 &&
                      s.wall_thickness > 0,
                  "scene.enclosure dimensions");
    require_range(s.enclosure_elevation_max > 0 && s.enclosure_elevation_max < M_PI / 2,
                  "scene.enclosure_elevation_max");
    require_range(s.workspace_x_min <= s.workspace_x_max && s.workspace_y_min <= s.workspace_y_max,
                  "scene.workspace");
    require_range(s.scale_min > 0 && s.scale_min <= s.scale_max, "scene.scale range");
    require_range(s.noise_sigma_min >= 0 && s.noise_sigma_min <= s.noise_sigma_max,
                  "scene.noise sigma range");
    require_range(s.dropout_min >= 0 && s.dropout_min <= s.dropout_max && s.dropout_max < 1.0,
                  "scene.dropout range");

    require_range(viewscore.n_candidates > 0 && viewscore.n_repeats > 0, "viewscore counts");
    require_range(viewscore.top_m > 0 && viewscore.top_m <= viewscore.n_candidates,
                  "viewscore.top_m");
    require_range(viewscore.top_pairs > 0, "viewscore.top_pairs");
    require_range(viewscore.dbscan_eps > 0 && viewscore.dbscan_min_pts > 0, "viewscore.dbscan");
    require_range(viewscore.gripper_width > 0, "viewscore.gripper_width");
    require_range(viewscore.antipodal_tol > 0 && viewscore.antipodal_tol < M_PI / 2,
                  "viewscore.antipodal_tol");
    require_range(viewscore.normal_knn >= 3, "viewscore.normal_knn");
    require_range(viewscore.scale_bucket_width > 0, "viewscore.scale_bucket_width");

    require_range(dataset.n_records > 0, "dataset.n_records");
    require_range(dataset.n_points > 0, "dataset.n_points");
    require_range(dataset.train_fraction > 0 && dataset.train_fraction < 1,
                  "dataset.train_fraction");
    require_range(dataset.augment_dropout_max >= 0 && dataset.augment_dropout_max < 1,
                  "dataset.augment_dropout_max");
    for (int cat : dataset.categories)
        require_range(cat >= 0 && cat < scene::kTotalCategories, "dataset.categories entry");

    require_range(model.embed_dim > 0 && model.embed_dim % (2 * model.n_heads) == 0,
                  "model.embed_dim divisible by 2*n_heads");
    require_range(model.n_layers > 0, "model.n_layers");
    require_range(model.mask_input > 0 && model.mask_input % 16 == 0,
                  "model.mask_input multiple of 16");
    require_range(model.sa1_centroids > 0 && model.local_tokens > 0 &&
                      model.local_tokens <= model.sa1_centroids,
                  "model point encoder sizes");
    require_range(model.sa1_k > 0 && model.sa2_k > 0, "model grouping sizes");
    require_range(model.global_res_blocks >= 0, "model.global_res_blocks");
    require_range(model.lambda_rot >= 0, "model.lambda_rot");
    require_range(model.use_mask_branch || model.use_local_points || model.use_global_points,
                  "at least one input branch enabled");

    require_range(train.epochs >= 0 && train.batch_size > 0, "train schedule");
    require_range(train.lr_main > 0 && train.lr_backbone > 0, "train learning rates");
    require_range(train.lr_backbone <= train.lr_main, "train.lr_backbone <= lr_main");
    require_range(train.weight_decay >= 0, "train.weight_decay");
    require_range(train.lr_decay > 0 && train.lr_decay <= 1, "train.lr_decay");
    require_range(train.lr_step_epochs > 0, "train.lr_step_epochs");
    require_range(train.clip_norm > 0, "train.clip_norm");

    require_range(eval.n_trials > 0 && eval.n_percentile_candidates > 1, "eval counts");
    require_range(eval.tau_exec >= 0, "eval.tau_exec");
    require_range(eval.exec_top > 0 && eval.attempt_cap > 0 && eval.n_gsr_scenes > 0,
                  "eval protocol");
    require_range(eval.landing_tol > 0, "eval.landing_tol");
    require_range(workers >= 0, "workers");
}

}  // namespace optiview
