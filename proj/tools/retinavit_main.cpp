#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "retinavit/checkpoint.hpp"
#include "retinavit/config.hpp"
#include "retinavit/errors.hpp"
#include "retinavit/io.hpp"
#include "retinavit/posembed.hpp"
#include "retinavit/probe.hpp"
#include "retinavit/svgplot.hpp"
#include "retinavit/train.hpp"

namespace fs = std::filesystem;
using namespace retinavit;

namespace {

struct CliArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    int seed = -1;
    bool force = false;
};

Config load_config(const CliArgs& args) {
    if (!fs::exists(args.config_path)) {
        throw ConfigError("config file not found: " + args.config_path);
    }
    Config cfg = Config::from_file(args.config_path);
    for (const auto& kv : args.overrides) cfg.apply_override(kv);
    if (args.seed >= 0) cfg.values["seed"] = std::to_string(args.seed);
    return cfg;
}

std::string out_path(const CliArgs& args, const std::string& name) {
    return (fs::path(args.out_dir) / name).string();
}

// Checkpoints are binary; emulate atomic_write_file's temp+rename.
void write_checkpoint_atomic(const std::string& path, const EncoderConfig& cfg,
                             const EncoderParams& params, bool force) {
    if (!force && fs::exists(path)) {
        throw std::runtime_error("refusing to overwrite existing file (use --force): " + path);
    }
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    save_checkpoint(tmp, cfg, params);
    fs::rename(tmp, target);
}

void write_text(const CliArgs& args, const std::string& name, const std::string& body) {
    atomic_write_file(out_path(args, name), body, args.force);
}

EncoderParams params_for_inference(const RunSettings& s) {
    if (s.checkpoint.empty()) {
        return init_params(s.train.encoder, s.train.seed);
    }
    LoadedCheckpoint ck = load_checkpoint(s.checkpoint);
    const EncoderConfig& a = ck.config;
    const EncoderConfig& b = s.train.encoder;
    if (a.dim != b.dim || a.depth != b.depth || a.heads != b.heads ||
        a.mlp_dim != b.mlp_dim || a.patch_edge != b.patch_edge ||
        a.channels != b.channels || a.num_classes != b.num_classes ||
        a.pooling != b.pooling) {
        throw ConfigError("checkpoint architecture does not match the config");
    }
    return std::move(ck.params);
}

std::string jsonl_log(const std::vector<EpochRecord>& log) {
    std::string out;
    for (const auto& r : log) {
        nlohmann::json j{{"epoch", r.epoch},
                         {"train_loss", r.train_loss},
                         {"eval_top1", r.eval_top1},
                         {"lr", r.lr},
                         {"wall_seconds", r.wall_seconds}};
        out += j.dump() + "\n";
    }
    return out;
}

int cmd_train(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    Dataset train_split, eval_split;
    load_datasets(s, train_split, eval_split);

    TrainResult res = train(s.train, train_split, eval_split);
    for (const auto& r : res.log) {
        std::printf("epoch %d train_loss=%.6f eval_top1=%.4f lr=%.3e\n", r.epoch,
                    r.train_loss, r.eval_top1, r.lr);
    }
    // On divergence the last-good parameters are still checkpointed.
    write_checkpoint_atomic(out_path(args, "checkpoint.rvt"), s.train.encoder, res.params,
                            args.force);
    write_text(args, "train_log.jsonl", jsonl_log(res.log));
    if (res.diverged) throw DivergenceError(res.divergence_message);
    std::printf("wrote %s and train_log.jsonl\n", out_path(args, "checkpoint.rvt").c_str());
    return 0;
}

int cmd_eval(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    if (s.checkpoint.empty()) throw ConfigError("eval needs checkpoint=PATH");
    Dataset train_split, eval_split;
    load_datasets(s, train_split, eval_split);
    const Dataset& split = eval_split.size() > 0 ? eval_split : train_split;

    EncoderParams params = params_for_inference(s);
    const double top1 = evaluate(params, s.train.encoder, s.train.spec, split);
    std::printf("top1=%.6f\n", top1);
    nlohmann::json j{{"top1", top1}, {"count", split.size()}};
    write_text(args, "eval.json", j.dump(1, '\t') + "\n");
    return 0;
}

int cmd_probe(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    Dataset train_split, eval_split;
    load_datasets(s, train_split, eval_split);

    const int want = std::max(1, s.probe_count);
    std::vector<ImageTensor> images;
    for (int i = 0; i < want && i < static_cast<int>(train_split.size()); ++i) {
        images.push_back(train_split.images[static_cast<size_t>(i)]);
    }
    if (images.empty()) throw DataError("no images available for probing");

    EncoderParams params = params_for_inference(s);
    ProbeReport report = run_probe(images, s.train.spec, s.train.encoder, params, s.probe);
    write_text(args, "probe_report.json", report_to_json(report));
    write_text(args, "probe_report.csv", report_to_csv(report));
    std::printf("probed %zu images, %d layers x 3 quantities x %d positions\n",
                images.size(), report.depth, report.positions);
    return 0;
}

int cmd_ablate(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    Dataset train_split, eval_split;
    load_datasets(s, train_split, eval_split);

    AblationTable table = ablate_depth(s.train, s.ablate_depths, train_split, eval_split);
    write_text(args, "ablation.csv", ablation_to_csv(table));
    for (const auto& row : table.rows) {
        std::printf("depth=%d model=%s top1=%.4f\n", row.depth, row.model.c_str(), row.top1);
    }
    return 0;
}

int cmd_inspect_posembed(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    const PyramidSpec& spec = s.train.spec;
    const EncoderConfig& e = s.train.encoder;

    // Geometry only: a constant image stands in for pixels.
    ImageTensor img(spec.base_edge, spec.base_edge, e.channels);
    const Pyramid pyr = build_pyramid(img, spec);
    const auto patches = extract_patches(pyr);
    const int cells = spec.base_edge / spec.patch_edge;
    PosEmbedGrid grid = sincos2d(cells, cells, e.dim, e.posembed_temperature);
    grid.cell_edge = spec.patch_edge;
    const auto pos = posembed_sequence(patches, grid, e.effective_norm_scale());

    std::ostringstream csv;
    csv.precision(12);
    csv << "level,row,col,rf_top,rf_left,rf_edge,norm";
    const int ncomp = std::min(8, e.dim);
    for (int k = 0; k < ncomp; ++k) csv << ",c" << k;
    csv << "\n";
    for (size_t i = 0; i < patches.size(); ++i) {
        const auto& p = patches[i];
        const auto& v = pos[i].vector;
        double norm_sq = 0.0;
        for (double x : v) norm_sq += x * x;
        csv << p.level_index << "," << p.grid_row << "," << p.grid_col << ","
            << p.rf_box.top << "," << p.rf_box.left << "," << p.rf_box.edge << ","
            << std::sqrt(norm_sq);
        for (int k = 0; k < ncomp; ++k) csv << "," << v[static_cast<size_t>(k)];
        csv << "\n";
    }
    write_text(args, "posembed.csv", csv.str());
    std::printf("wrote %zu embeddings to posembed.csv\n", patches.size());
    return 0;
}

int cmd_export_plots(const CliArgs& args) {
    Config cfg = load_config(args);
    RunSettings s = build_settings(cfg);
    if (s.plots_report.empty()) throw ConfigError("export-plots needs plots.report=PATH");
    ProbeReport report = report_from_json(read_file(s.plots_report));
    for (int q = 0; q < 3; ++q) {
        write_text(args, quantity_name(q) + ".svg", render_probe_svg(report, q));
    }
    std::printf("wrote 3 SVG panels to %s\n", args.out_dir.c_str());
    return 0;
}

std::string config_key_help() {
    std::string out = "Config keys (flat key=value file; every key overridable via --set):\n";
    for (const auto& k : config_schema()) {
        out += "  " + k.name;
        out += std::string(k.name.size() < 26 ? 26 - k.name.size() : 1, ' ');
        out += "[" + (k.default_value.empty() ? std::string("\"\"") : k.default_value) + "] " +
               k.doc + "\n";
    }
    out += "\nEnvironment: RETINAVIT_THREADS caps worker threads.\n";
    return out;
}

void add_common(CLI::App* sub, CliArgs& args) {
    sub->add_option("--config", args.config_path, "flat key=value config file")->required();
    sub->add_option("--set", args.overrides, "override KEY=VALUE (repeatable)");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "override the run seed");
    sub->add_flag("--force", args.force, "overwrite existing artifacts");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RetinaViT: multi-scale patch pyramid vision transformer"};
    app.footer(config_key_help());
    app.require_subcommand(1);

    CliArgs args;
    auto* train_cmd = app.add_subcommand("train", "train a model, write checkpoint + JSONL log");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, print top-1 accuracy");
    auto* probe_cmd = app.add_subcommand("probe", "attention magnitude probe, write JSON/CSV report");
    auto* ablate_cmd = app.add_subcommand("ablate", "depth sweep: baseline ViT vs RetinaViT");
    auto* inspect_cmd = app.add_subcommand("inspect-posembed", "dump per-patch embeddings as CSV");
    auto* plots_cmd = app.add_subcommand("export-plots", "render a probe report as SVG panels");
    for (auto* sub : {train_cmd, eval_cmd, probe_cmd, ablate_cmd, inspect_cmd, plots_cmd}) {
        add_common(sub, args);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(args);
        if (eval_cmd->parsed()) return cmd_eval(args);
        if (probe_cmd->parsed()) return cmd_probe(args);
        if (ablate_cmd->parsed()) return cmd_ablate(args);
        if (inspect_cmd->parsed()) return cmd_inspect_posembed(args);
        if (plots_cmd->parsed()) return cmd_export_plots(args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error code=2 kind=config msg=\"%s\"\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error code=3 kind=data msg=\"%s\"\n", e.what());
        return 3;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error code=4 kind=divergence msg=\"%s\"\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error code=1 kind=runtime msg=\"%s\"\n", e.what());
        return 1;
    }
    return 0;
}
