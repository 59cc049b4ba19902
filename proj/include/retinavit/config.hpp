#pragma once

#include <map>
#include <string>
#include <vector>

#include "retinavit/probe.hpp"
#include "retinavit/train.hpp"

namespace retinavit {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string doc;
};

// Every recognised key with its default and one-line description.
const std::vector<ConfigKey>& config_schema();

// Flat key=value text ('#' comments, blank lines ignored). Unknown keys
// are rejected, as are unknown --set overrides.
struct Config {
    std::map<std::string, std::string> values;

    static Config defaults();
    static Config from_file(const std::string& path);
    void apply_override(const std::string& key_value);  // "key=value"

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
};

// Assembled run settings derived from a Config.
struct RunSettings {
    TrainConfig train;
    std::string data_kind;
    std::string data_path;
    int data_classes = 0;
    int data_edge = 0;
    int train_count = 0;
    int eval_count = 0;
    bool single_level = false;
    std::string checkpoint;
    int probe_count = 0;
    ProbeOptions probe;
    std::vector<int> ablate_depths;
    std::string plots_report;
};

RunSettings build_settings(const Config& cfg);

// Loads train/eval splits per the data.* keys and resizes them to the
// pyramid base edge. image_dir sources overwrite num_classes in `s` with
// the discovered class count.
void load_datasets(RunSettings& s, Dataset& train_split, Dataset& eval_split);

}  // namespace retinavit
