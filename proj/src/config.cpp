#include "icpipe/config.hpp"

#include <cstdlib>
#include <fstream>

#include "icpipe/errors.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::config {

using nlohmann::json;

json default_config_json() {
    return json{
        {"seed", 42},
        {"workers", 2},
        {"segmentation",
         {{"smoothing_sigma", 5.0}, {"tissue_patch_side", 256}, {"tissue_coverage_min", 0.10}}},
        {"filter",
         {{"blur_variance_min", 50.0},
          {"thres_1", 25},
          {"thres_2", 0.9},
          {"nuclei_min_fraction", 0.05},
          {"nuclei_dark_cutoff", 120},
          {"epithelium_coverage_min", 0.25}}},
        {"model", {{"input_side", 64}, {"context_side", 256}, {"channels", {8, 16, 32}}}},
        {"train",
         {{"batch_size", 32},
          {"max_epochs", 100},
          {"patience", 5},
          {"min_delta", 1e-4},
          {"learning_rate", 0.001},
          {"val_ratio", 0.8}}},
        {"augment",
         {{"flip_horizontal", true},
          {"flip_vertical", true},
          {"rotate", true},
          {"noise", true},
          {"noise_sigma_max", 10.0},
          {"hue", true},
          {"hue_range", 0.05},
          {"saturation", true},
          {"saturation_min", 0.8},
          {"saturation_max", 1.2},
          {"contrast", true},
          {"contrast_min", 0.8},
          {"contrast_max", 1.2},
          {"brightness", true},
          {"brightness_range", 20.0}}},
        {"forest",
         {{"n_trees", 100}, {"max_depth", 16}, {"bootstrap", true}, {"min_samples_split", 2}}},
        {"gen",
         {{"reference",
           {{"patients", 24},
            {"slides_per_patient", 2},
            {"slide_side", 3072},
            {"epithelium_fraction", 0.20},
            {"ic_fraction", 0.07},
            {"split_ratio", 0.8}}},
          {"target",
           {{"patients", 14},
            {"slides_per_patient", 2},
            {"slide_side", 3072},
            {"epithelium_fraction", 0.20},
            {"ic_fraction", 0.07},
            {"split_ratio", 0.15}}},
          {"shift",
           {{"hue", 0.10},
            {"saturation_scale", 1.35},
            {"brightness", -30},
            {"grain_scale", 1.6}}}}},
    };
}

namespace {

void merge_checked(json& base, const json& overlay, const std::string& prefix) {
    if (!overlay.is_object()) {
        throw ConfigError("config section is not an object: " + (prefix.empty() ? "<root>" : prefix));
    }
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key: " + path);
        json& slot = base[key];
        if (slot.is_object()) {
            merge_checked(slot, value, path);
        } else {
            if (slot.is_number() && !value.is_number()) {
                throw ConfigError("config key expects a number: " + path);
            }
            if (slot.is_boolean() && !value.is_boolean()) {
                throw ConfigError("config key expects a boolean: " + path);
            }
            if (slot.is_array() && !value.is_array()) {
                throw ConfigError("config key expects an array: " + path);
            }
            slot = value;
        }
    }
}

json* find_path(json& root, const std::string& dotted) {
    json* cur = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
        if (!cur->contains(key)) return nullptr;
        cur = &(*cur)[key];
        if (dot == std::string::npos) return cur;
        start = dot + 1;
    }
}

void apply_override(json& root, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value: " + spec);
    }
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    json* slot = find_path(root, path);
    if (slot == nullptr) throw ConfigError("unknown config key: " + path);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // bare strings are fine
    }
    if (slot->is_number() && !value.is_number()) {
        throw ConfigError("config key expects a number: " + path);
    }
    if (slot->is_boolean() && !value.is_boolean()) {
        throw ConfigError("config key expects a boolean: " + path);
    }
    *slot = value;
}

datagen::DatasetGenParams gen_params_from(const json& j, std::uint64_t seed) {
    datagen::DatasetGenParams p;
    p.patients = j.at("patients").get<int>();
    p.slides_per_patient = j.at("slides_per_patient").get<int>();
    p.layout.slide_side = j.at("slide_side").get<int>();
    p.layout.epithelium_fraction = j.at("epithelium_fraction").get<double>();
    p.layout.ic_fraction = j.at("ic_fraction").get<double>();
    p.split_ratio = j.at("split_ratio").get<double>();
    p.seed = seed;
    return p;
}

}  // namespace

RunConfig config_from_json(const json& merged) {
    RunConfig cfg;
    try {
        cfg.seed = merged.at("seed").get<std::uint64_t>();
        cfg.workers = merged.at("workers").get<int>();
        if (cfg.workers < 1) throw ConfigError("workers must be >= 1");

        const json& s = merged.at("segmentation");
        cfg.seg.smoothing_sigma = s.at("smoothing_sigma").get<double>();
        cfg.seg.tissue_patch_side = s.at("tissue_patch_side").get<int>();
        cfg.seg.tissue_coverage_min = s.at("tissue_coverage_min").get<double>();
        if (cfg.seg.smoothing_sigma <= 0) throw ConfigError("smoothing_sigma must be > 0");

        const json& f = merged.at("filter");
        cfg.filter.blur_variance_min = f.at("blur_variance_min").get<double>();
        cfg.filter.thres_1 = f.at("thres_1").get<int>();
        cfg.filter.thres_2 = f.at("thres_2").get<double>();
        cfg.filter.nuclei_min_fraction = f.at("nuclei_min_fraction").get<double>();
        cfg.filter.nuclei_dark_cutoff = f.at("nuclei_dark_cutoff").get<int>();
        cfg.filter.epithelium_coverage_min = f.at("epithelium_coverage_min").get<double>();
        if (cfg.filter.thres_2 <= 0.0 || cfg.filter.thres_2 > 1.0) {
            throw ConfigError("filter.thres_2 must lie in (0,1]");
        }

        const json& m = merged.at("model");
        cfg.net.input_side = m.at("input_side").get<int>();
        cfg.context_side = m.at("context_side").get<int>();
        const auto channels = m.at("channels").get<std::vector<int>>();
        if (channels.size() != 3) throw ConfigError("model.channels needs three entries");
        cfg.net.channels = {channels[0], channels[1], channels[2]};
        if (cfg.net.input_side < 8 || cfg.net.input_side % 8 != 0) {
            throw ConfigError("model.input_side must be a positive multiple of 8");
        }

        const json& t = merged.at("train");
        cfg.train.batch_size = t.at("batch_size").get<int>();
        cfg.train.max_epochs = t.at("max_epochs").get<int>();
        cfg.train.patience = t.at("patience").get<int>();
        cfg.train.min_delta = t.at("min_delta").get<double>();
        cfg.train.learning_rate = t.at("learning_rate").get<double>();
        cfg.val_ratio = t.at("val_ratio").get<double>();
        if (cfg.train.patience < 1) throw ConfigError("train.patience must be >= 1");
        cfg.train.seed = cfg.seed;
        cfg.train.workers = cfg.workers;

        const json& a = merged.at("augment");
        cfg.augment.flip_horizontal = a.at("flip_horizontal").get<bool>();
        cfg.augment.flip_vertical = a.at("flip_vertical").get<bool>();
        cfg.augment.rotate = a.at("rotate").get<bool>();
        cfg.augment.noise = a.at("noise").get<bool>();
        cfg.augment.noise_sigma_max = a.at("noise_sigma_max").get<double>();
        cfg.augment.hue = a.at("hue").get<bool>();
        cfg.augment.hue_range = a.at("hue_range").get<double>();
        cfg.augment.saturation = a.at("saturation").get<bool>();
        cfg.augment.saturation_min = a.at("saturation_min").get<double>();
        cfg.augment.saturation_max = a.at("saturation_max").get<double>();
        cfg.augment.contrast = a.at("contrast").get<bool>();
        cfg.augment.contrast_min = a.at("contrast_min").get<double>();
        cfg.augment.contrast_max = a.at("contrast_max").get<double>();
        cfg.augment.brightness = a.at("brightness").get<bool>();
        cfg.augment.brightness_range = a.at("brightness_range").get<double>();

        const json& fo = merged.at("forest");
        cfg.forest.n_trees = fo.at("n_trees").get<int>();
        cfg.forest.max_depth = fo.at("max_depth").get<int>();
        cfg.forest.bootstrap = fo.at("bootstrap").get<bool>();
        cfg.forest.min_samples_split = fo.at("min_samples_split").get<int>();
        if (cfg.forest.n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");

        const json& g = merged.at("gen");
        cfg.gen.reference = gen_params_from(g.at("reference"), mix_seed(cfg.seed, 1));
        cfg.gen.target = gen_params_from(g.at("target"), mix_seed(cfg.seed, 2));
        const json& sh = g.at("shift");
        cfg.gen.shift.hue = sh.at("hue").get<double>();
        cfg.gen.shift.saturation_scale = sh.at("saturation_scale").get<double>();
        cfg.gen.shift.brightness = sh.at("brightness").get<int>();
        cfg.gen.shift.grain_scale = sh.at("grain_scale").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    cfg.snapshot = merged;
    return cfg;
}

RunConfig load_config(const std::filesystem::path& config_file,
                      const std::vector<std::string>& overrides) {
    json merged = default_config_json();
    if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw ConfigError("cannot open config file: " + config_file.string());
        json file_json;
        try {
            in >> file_json;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
        merge_checked(merged, file_json, "");
    }
    if (const char* env_seed = std::getenv("ICPIPE_SEED")) {
        try {
            merged["seed"] = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError("ICPIPE_SEED is not an integer");
        }
    }
    if (const char* env_workers = std::getenv("ICPIPE_WORKERS")) {
        try {
            merged["workers"] = std::stoi(env_workers);
        } catch (const std::exception&) {
            throw ConfigError("ICPIPE_WORKERS is not an integer");
        }
    }
    for (const std::string& spec : overrides) apply_override(merged, spec);
    return config_from_json(merged);
}

void write_run_config(const RunConfig& cfg, const std::string& command,
                      const std::filesystem::path& path) {
    json j;
    j["command"] = command;
    j["config"] = cfg.snapshot;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

}  // namespace icpipe::config
