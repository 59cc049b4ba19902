#pragma once

#include <array>
#include <string>
#include <vector>

#include "retinavit/encoder.hpp"
#include "retinavit/pyramid.hpp"

namespace retinavit {

enum class WeightAxis { kKey, kQuery };
enum class MagnitudeKind { kMeanAbs, kL2 };

struct ProbeOptions {
    WeightAxis weight_axis = WeightAxis::kKey;
    MagnitudeKind magnitude = MagnitudeKind::kMeanAbs;
};

struct LayerMagnitudes {
    std::vector<double> weight_mag;    // attention received per key position
    std::vector<double> score_mag;     // attention output magnitude per token
    std::vector<double> residual_mag;  // |input + attention output| per token
};

LayerMagnitudes magnitudes_from_trace(const LayerTrace& trace, const ProbeOptions& opts);

struct ProbeAccumulator {
    int depth = 0;
    int positions = 0;
    long long count = 0;
    // [layer][quantity][position] running sums; quantity order is
    // weights, scores, residuals.
    std::vector<std::array<std::vector<double>, 3>> sums;

    ProbeAccumulator() = default;
    ProbeAccumulator(int depth, int positions);
};

// One example's traces (length = depth). Positions beyond `positions`
// (the class token, appended last) are dropped.
void accumulate(ProbeAccumulator& acc, const std::vector<LayerTrace>& traces,
                const ProbeOptions& opts);

void merge(ProbeAccumulator& into, const ProbeAccumulator& other);

struct ProbeReport {
    int depth = 0;
    int positions = 0;
    long long count = 0;
    std::vector<int> boundaries;          // interior level boundaries
    std::vector<int> level_counts;        // tokens per level
    std::vector<std::array<std::vector<double>, 3>> layers;       // means
    std::vector<std::array<std::vector<double>, 3>> level_means;  // per-level summaries
    PyramidSpec spec;
    EncoderConfig config;
    ProbeOptions options;
};

ProbeReport finalize(const ProbeAccumulator& acc, const PyramidSpec& spec,
                     const EncoderConfig& cfg, const ProbeOptions& opts);

std::string report_to_json(const ProbeReport& report);
std::string report_to_csv(const ProbeReport& report);
ProbeReport report_from_json(const std::string& text);

// Forward passes with capture over a set of images, workers merged into
// one accumulator.
ProbeReport run_probe(const std::vector<ImageTensor>& images, const PyramidSpec& spec,
                      const EncoderConfig& cfg, const EncoderParams& params,
                      const ProbeOptions& opts);

}  // namespace retinavit
