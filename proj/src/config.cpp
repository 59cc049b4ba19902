#include "retinavit/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "retinavit/errors.hpp"

namespace retinavit {

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"data.kind", "synthetic", "dataset source: synthetic | cifar10 | image_dir"},
        {"data.path", "", "path for cifar10 (.bin file or directory) or image_dir"},
        {"data.classes", "10", "number of classes for the synthetic generator"},
        {"data.edge", "32", "native edge of synthetic images (pixels)"},
        {"data.train_count", "512", "training examples (synthetic size / loader cap, 0 = all)"},
        {"data.eval_count", "128", "eval examples (0 = evaluate on the training split)"},
        {"pyramid.base_edge", "64", "pyramid base edge; smaller inputs are replicated up to it"},
        {"pyramid.patch_edge", "8", "patch edge (pixels)"},
        {"pyramid.stride", "8", "patch stride; must divide patch_edge"},
        {"pyramid.single_level", "false", "restrict the pyramid to the base level (plain ViT)"},
        {"posembed.temperature", "10000", "sincos2d frequency temperature"},
        {"posembed.base_norm_scale", "auto", "base-level norm target; auto = sqrt(dim/2)"},
        {"encoder.dim", "128", "hidden width"},
        {"encoder.depth", "2", "number of transformer layers"},
        {"encoder.heads", "4", "attention heads"},
        {"encoder.mlp_dim", "512", "MLP hidden width"},
        {"encoder.pooling", "gap", "gap (global average) | cls (class token)"},
        {"train.epochs", "30", "training epochs"},
        {"train.batch_size", "32", "batch size"},
        {"train.peak_lr", "0.001", "peak learning rate"},
        {"train.warmup_steps", "100", "linear warmup steps before cosine decay"},
        {"train.weight_decay", "0.05", "decoupled weight decay"},
        {"train.beta1", "0.9", "Adam beta1"},
        {"train.beta2", "0.999", "Adam beta2"},
        {"train.eps", "1e-8", "Adam epsilon"},
        {"train.augment_flip", "false", "random horizontal flips during training"},
        {"seed", "42", "run seed (init, shuffling, augmentation)"},
        {"checkpoint", "", "checkpoint path for eval/probe; empty probe = seeded random params"},
        {"probe.count", "8", "images to probe"},
        {"probe.weight_axis", "key", "attention-weight aggregation: key | query"},
        {"probe.magnitude", "mean_abs", "vector magnitude: mean_abs | l2"},
        {"ablate.depths", "2,4,6,8,10,12", "depth sweep for the ablation"},
        {"plots.report", "", "probe report JSON consumed by export-plots"},
    };
    return schema;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool known_key(const std::string& key) {
    for (const auto& k : config_schema()) {
        if (k.name == key) return true;
    }
    return false;
}

}  // namespace

Config Config::defaults() {
    Config c;
    for (const auto& k : config_schema()) c.values[k.name] = k.default_value;
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Config c = defaults();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_key(key)) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        c.values[key] = value;
    }
    return c;
}

void Config::apply_override(const std::string& key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + key_value + "'");
    const std::string key = trim(key_value.substr(0, eq));
    const std::string value = trim(key_value.substr(eq + 1));
    if (!known_key(key)) throw ConfigError("unknown key in --set: '" + key + "'");
    values[key] = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

int Config::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects integers, got '" + v + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
    return out;
}

RunSettings build_settings(const Config& cfg) {
    RunSettings s;
    s.data_kind = cfg.get("data.kind");
    if (s.data_kind != "synthetic" && s.data_kind != "cifar10" && s.data_kind != "image_dir") {
        throw ConfigError("data.kind must be synthetic, cifar10 or image_dir");
    }
    s.data_path = cfg.get("data.path");
    s.data_classes = cfg.get_int("data.classes");
    s.data_edge = cfg.get_int("data.edge");
    s.train_count = cfg.get_int("data.train_count");
    s.eval_count = cfg.get_int("data.eval_count");
    s.single_level = cfg.get_bool("pyramid.single_level");

    const int base = cfg.get_int("pyramid.base_edge");
    const int patch = cfg.get_int("pyramid.patch_edge");
    const int stride = cfg.get_int("pyramid.stride");
    s.train.spec = s.single_level ? PyramidSpec::single_level(base, patch, stride)
                                  : PyramidSpec::retina(base, patch, stride);

    EncoderConfig& e = s.train.encoder;
    e.dim = cfg.get_int("encoder.dim");
    e.depth = cfg.get_int("encoder.depth");
    e.heads = cfg.get_int("encoder.heads");
    e.mlp_dim = cfg.get_int("encoder.mlp_dim");
    e.patch_edge = patch;
    e.channels = 3;
    e.num_classes = s.data_kind == "cifar10" ? 10 : s.data_classes;
    const std::string pooling = cfg.get("encoder.pooling");
    if (pooling == "gap") {
        e.pooling = Pooling::kGlobalAverage;
    } else if (pooling == "cls") {
        e.pooling = Pooling::kClassToken;
    } else {
        throw ConfigError("encoder.pooling must be gap or cls");
    }
    e.posembed_temperature = cfg.get_double("posembed.temperature");
    const std::string& bns = cfg.get("posembed.base_norm_scale");
    e.base_norm_scale = bns == "auto" ? -1.0 : cfg.get_double("posembed.base_norm_scale");
    validate_config(e);

    s.train.epochs = cfg.get_int("train.epochs");
    s.train.batch_size = cfg.get_int("train.batch_size");
    s.train.peak_lr = cfg.get_double("train.peak_lr");
    s.train.warmup_steps = cfg.get_int("train.warmup_steps");
    s.train.weight_decay = cfg.get_double("train.weight_decay");
    s.train.beta1 = cfg.get_double("train.beta1");
    s.train.beta2 = cfg.get_double("train.beta2");
    s.train.adam_eps = cfg.get_double("train.eps");
    s.train.augment_flip = cfg.get_bool("train.augment_flip");
    s.train.seed = static_cast<uint64_t>(cfg.get_int("seed"));
    validate_train_config(s.train);

    s.checkpoint = cfg.get("checkpoint");
    s.probe_count = cfg.get_int("probe.count");
    const std::string axis = cfg.get("probe.weight_axis");
    if (axis == "key") {
        s.probe.weight_axis = WeightAxis::kKey;
    } else if (axis == "query") {
        s.probe.weight_axis = WeightAxis::kQuery;
    } else {
        throw ConfigError("probe.weight_axis must be key or query");
    }
    const std::string mag = cfg.get("probe.magnitude");
    if (mag == "mean_abs") {
        s.probe.magnitude = MagnitudeKind::kMeanAbs;
    } else if (mag == "l2") {
        s.probe.magnitude = MagnitudeKind::kL2;
    } else {
        throw ConfigError("probe.magnitude must be mean_abs or l2");
    }
    s.ablate_depths = cfg.get_int_list("ablate.depths");
    for (int d : s.ablate_depths) {
        if (d < 1) throw ConfigError("ablate.depths entries must be >= 1");
    }
    s.plots_report = cfg.get("plots.report");
    return s;
}

void load_datasets(RunSettings& s, Dataset& train_split, Dataset& eval_split) {
    if (s.data_kind == "synthetic") {
        train_split = synthetic_dataset(s.train.seed + 101, std::max(1, s.train_count),
                                        s.data_classes, s.data_edge);
        if (s.eval_count > 0) {
            eval_split = synthetic_dataset(s.train.seed + 202, s.eval_count,
                                           s.data_classes, s.data_edge);
        } else {
            eval_split = Dataset{};
            eval_split.num_classes = s.data_classes;
        }
    } else if (s.data_kind == "cifar10") {
        const int want = s.train_count == 0 ? 0 : s.train_count + s.eval_count;
        Dataset all = load_cifar10(s.data_path, want);
        const int total = static_cast<int>(all.size());
        const int n_train = s.train_count == 0 ? std::max(1, total - s.eval_count)
                                               : std::min(s.train_count, total);
        train_split = Dataset{};
        train_split.num_classes = 10;
        eval_split = Dataset{};
        eval_split.num_classes = 10;
        for (int i = 0; i < total; ++i) {
            Dataset& dst = i < n_train ? train_split : eval_split;
            if (i >= n_train && s.eval_count > 0 &&
                static_cast<int>(eval_split.size()) >= s.eval_count) {
                break;
            }
            dst.images.push_back(std::move(all.images[static_cast<size_t>(i)]));
            dst.labels.push_back(all.labels[static_cast<size_t>(i)]);
        }
    } else {  // image_dir
        train_split = load_image_dir(s.data_path, s.train_count);
        eval_split = Dataset{};
        eval_split.num_classes = train_split.num_classes;
        s.train.encoder.num_classes = train_split.num_classes;
    }
    resize_dataset(train_split, s.train.spec.base_edge);
    resize_dataset(eval_split, s.train.spec.base_edge);
    if (train_split.size() == 0) throw DataError("empty training split");
}

}  // namespace retinavit
