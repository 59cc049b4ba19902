#include "retinavit/probe.hpp"

#include <cmath>
#include <sstream>

#include "retinavit/errors.hpp"
#include "retinavit/threadpool.hpp"

#include "json.hpp"

namespace retinavit {

using nlohmann::json;

LayerMagnitudes magnitudes_from_trace(const LayerTrace& trace, const ProbeOptions& opts) {
    const int n = trace.attention_output.rows;
    const int dim = trace.attention_output.cols;
    const int heads = static_cast<int>(trace.attention_weights.size());

    LayerMagnitudes m;
    m.weight_mag.assign(static_cast<size_t>(n), 0.0);
    m.score_mag.assign(static_cast<size_t>(n), 0.0);
    m.residual_mag.assign(static_cast<size_t>(n), 0.0);

    for (int h = 0; h < heads; ++h) {
        const Mat& a = trace.attention_weights[static_cast<size_t>(h)];
        for (int i = 0; i < n; ++i) {
            const double* row = a.row(i);
            if (opts.weight_axis == WeightAxis::kKey) {
                for (int j = 0; j < n; ++j) m.weight_mag[static_cast<size_t>(j)] += std::abs(row[j]);
            } else {
                for (int j = 0; j < n; ++j) m.weight_mag[static_cast<size_t>(i)] += std::abs(row[j]);
            }
        }
    }
    const double denom = static_cast<double>(heads) * n;
    for (double& v : m.weight_mag) v /= denom;

    auto vec_mag = [&](const Mat& x, std::vector<double>& out) {
        for (int t = 0; t < n; ++t) {
            const double* row = x.row(t);
            double acc = 0.0;
            if (opts.magnitude == MagnitudeKind::kMeanAbs) {
                for (int k = 0; k < dim; ++k) acc += std::abs(row[k]);
                out[static_cast<size_t>(t)] = acc / dim;
            } else {
                for (int k = 0; k < dim; ++k) acc += row[k] * row[k];
                out[static_cast<size_t>(t)] = std::sqrt(acc);
            }
        }
    };
    vec_mag(trace.attention_output, m.score_mag);
    vec_mag(trace.residual_sum, m.residual_mag);
    return m;
}

ProbeAccumulator::ProbeAccumulator(int depth_, int positions_)
    : depth(depth_), positions(positions_) {
    sums.resize(static_cast<size_t>(depth));
    for (auto& layer : sums) {
        for (auto& q : layer) q.assign(static_cast<size_t>(positions), 0.0);
    }
}

void accumulate(ProbeAccumulator& acc, const std::vector<LayerTrace>& traces,
                const ProbeOptions& opts) {
    if (static_cast<int>(traces.size()) != acc.depth) {
        throw DataError("trace count does not match accumulator depth");
    }
    for (int l = 0; l < acc.depth; ++l) {
        const LayerTrace& t = traces[static_cast<size_t>(l)];
        if (t.attention_output.rows < acc.positions) {
            throw DataError("trace has fewer positions than accumulator");
        }
        const LayerMagnitudes m = magnitudes_from_trace(t, opts);
        auto& layer = acc.sums[static_cast<size_t>(l)];
        // Positions beyond acc.positions (the class token) are dropped.
        for (int p = 0; p < acc.positions; ++p) {
            layer[0][static_cast<size_t>(p)] += m.weight_mag[static_cast<size_t>(p)];
            layer[1][static_cast<size_t>(p)] += m.score_mag[static_cast<size_t>(p)];
            layer[2][static_cast<size_t>(p)] += m.residual_mag[static_cast<size_t>(p)];
        }
    }
    acc.count += 1;
}

void merge(ProbeAccumulator& into, const ProbeAccumulator& other) {
    if (into.depth != other.depth || into.positions != other.positions) {
        throw DataError("accumulator shape mismatch in merge");
    }
    for (int l = 0; l < into.depth; ++l) {
        for (int q = 0; q < 3; ++q) {
            auto& dst = into.sums[static_cast<size_t>(l)][static_cast<size_t>(q)];
            const auto& src = other.sums[static_cast<size_t>(l)][static_cast<size_t>(q)];
            for (size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
        }
    }
    into.count += other.count;
}

ProbeReport finalize(const ProbeAccumulator& acc, const PyramidSpec& spec,
                     const EncoderConfig& cfg, const ProbeOptions& opts) {
    if (acc.count < 1) throw DataError("cannot finalize an empty probe accumulator");
    ProbeReport rep;
    rep.depth = acc.depth;
    rep.positions = acc.positions;
    rep.count = acc.count;
    rep.boundaries = level_boundaries(spec);
    rep.level_counts = level_token_counts(spec);
    rep.spec = spec;
    rep.config = cfg;
    rep.options = opts;

    rep.layers.resize(static_cast<size_t>(acc.depth));
    rep.level_means.resize(static_cast<size_t>(acc.depth));
    for (int l = 0; l < acc.depth; ++l) {
        for (int q = 0; q < 3; ++q) {
            const auto& src = acc.sums[static_cast<size_t>(l)][static_cast<size_t>(q)];
            auto& mean = rep.layers[static_cast<size_t>(l)][static_cast<size_t>(q)];
            mean.resize(src.size());
            for (size_t p = 0; p < src.size(); ++p) {
                mean[p] = src[p] / static_cast<double>(acc.count);
                if (!std::isfinite(mean[p])) throw DataError("non-finite probe mean");
            }
            auto& lm = rep.level_means[static_cast<size_t>(l)][static_cast<size_t>(q)];
            int pos = 0;
            for (int c : rep.level_counts) {
                double s = 0.0;
                for (int i = 0; i < c; ++i) s += mean[static_cast<size_t>(pos + i)];
                lm.push_back(s / c);
                pos += c;
            }
        }
    }
    return rep;
}

namespace {

const char* kQuantityNames[3] = {"attention_weights", "attention_scores", "residual_sums"};

json config_to_json(const ProbeReport& rep) {
    return json{
        {"base_edge", rep.spec.base_edge},
        {"patch_edge", rep.spec.patch_edge},
        {"stride", rep.spec.stride},
        {"levels", rep.spec.levels},
        {"dim", rep.config.dim},
        {"depth", rep.config.depth},
        {"heads", rep.config.heads},
        {"mlp_dim", rep.config.mlp_dim},
        {"pooling", rep.config.pooling == Pooling::kClassToken ? "cls" : "gap"},
        {"weight_axis", rep.options.weight_axis == WeightAxis::kKey ? "key" : "query"},
        {"magnitude", rep.options.magnitude == MagnitudeKind::kMeanAbs ? "mean_abs" : "l2"},
    };
}

}  // namespace

std::string report_to_json(const ProbeReport& rep) {
    json j;
    j["schema"] = "retinavit.probe_report.v1";
    j["config"] = config_to_json(rep);
    j["count"] = rep.count;
    j["positions"] = rep.positions;
    j["boundaries"] = rep.boundaries;
    j["level_token_counts"] = rep.level_counts;
    j["quantities"] = json::array({kQuantityNames[0], kQuantityNames[1], kQuantityNames[2]});
    j["layers"] = rep.layers;
    j["level_means"] = rep.level_means;
    return j.dump(1, '\t') + "\n";
}

ProbeReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.value("schema", "") != std::string("retinavit.probe_report.v1")) {
        throw DataError("not a probe report (schema mismatch)");
    }
    ProbeReport rep;
    rep.count = j.at("count").get<long long>();
    rep.positions = j.at("positions").get<int>();
    rep.boundaries = j.at("boundaries").get<std::vector<int>>();
    rep.level_counts = j.at("level_token_counts").get<std::vector<int>>();
    rep.layers = j.at("layers").get<std::vector<std::array<std::vector<double>, 3>>>();
    rep.level_means = j.at("level_means").get<std::vector<std::array<std::vector<double>, 3>>>();
    rep.depth = static_cast<int>(rep.layers.size());
    const json& c = j.at("config");
    rep.spec.base_edge = c.at("base_edge").get<int>();
    rep.spec.patch_edge = c.at("patch_edge").get<int>();
    rep.spec.stride = c.at("stride").get<int>();
    rep.spec.levels = c.at("levels").get<std::vector<int>>();
    rep.config.dim = c.at("dim").get<int>();
    rep.config.depth = c.at("depth").get<int>();
    rep.config.heads = c.at("heads").get<int>();
    rep.config.mlp_dim = c.at("mlp_dim").get<int>();
    rep.options.weight_axis =
        c.at("weight_axis").get<std::string>() == "query" ? WeightAxis::kQuery : WeightAxis::kKey;
    rep.options.magnitude =
        c.at("magnitude").get<std::string>() == "l2" ? MagnitudeKind::kL2 : MagnitudeKind::kMeanAbs;
    return rep;
}

std::string report_to_csv(const ProbeReport& rep) {
    std::ostringstream out;
    out.precision(17);
    out << "layer,quantity";
    for (int p = 0; p < rep.positions; ++p) out << ",p" << p;
    out << "\n";
    for (int l = 0; l < rep.depth; ++l) {
        for (int q = 0; q < 3; ++q) {
            out << l << "," << kQuantityNames[q];
            const auto& row = rep.layers[static_cast<size_t>(l)][static_cast<size_t>(q)];
            for (double v : row) out << "," << v;
            out << "\n";
        }
    }
    return out.str();
}

ProbeReport run_probe(const std::vector<ImageTensor>& images, const PyramidSpec& spec,
                      const EncoderConfig& cfg, const EncoderParams& params,
                      const ProbeOptions& opts) {
    if (images.empty()) throw DataError("probe needs at least one image");
    const int positions = total_token_count(spec);
    const int n = static_cast<int>(images.size());
    const int workers = std::min(worker_count(), n);

    std::vector<ProbeAccumulator> acc(static_cast<size_t>(workers));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    parallel_chunks(n, [&](int w, int begin, int end) {
        try {
            acc[static_cast<size_t>(w)] = ProbeAccumulator(cfg.depth, positions);
            for (int i = begin; i < end; ++i) {
                std::vector<LayerTrace> traces;
                forward(images[static_cast<size_t>(i)], spec, cfg, params, true, &traces);
                accumulate(acc[static_cast<size_t>(w)], traces, opts);
            }
        } catch (...) {
            errors[static_cast<size_t>(w)] = std::current_exception();
        }
    });
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (int w = 1; w < workers; ++w) merge(acc[0], acc[static_cast<size_t>(w)]);
    return finalize(acc[0], spec, cfg, opts);
}

}  // namespace retinavit
