#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "retinavit/dataset.hpp"
#include "retinavit/encoder.hpp"
#include "retinavit/pyramid.hpp"

namespace retinavit {

struct TrainConfig {
    PyramidSpec spec;
    EncoderConfig encoder;
    int epochs = 30;
    int batch_size = 32;
    double peak_lr = 1e-3;
    int warmup_steps = 100;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 42;
    bool augment_flip = false;
};

void validate_train_config(const TrainConfig& cfg);

// Linear warmup to peak, then cosine decay that reaches zero on the last
// executed step.
double lr_at(int step, int total_steps, int warmup_steps, double peak_lr);

// Decoupled weight decay Adam over the visit_params order.
struct AdamW {
    double beta1, beta2, eps, weight_decay;
    EncoderParams m, v;
    long long step_count = 0;

    AdamW(const EncoderConfig& cfg, double beta1, double beta2, double eps,
          double weight_decay);
    void step(const EncoderConfig& cfg, EncoderParams& params,
              EncoderParams& grads, double lr);
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double eval_top1 = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    EncoderParams params;  // last-good parameters when diverged is set
    std::vector<EpochRecord> log;
    std::vector<double> step_losses;
    bool diverged = false;
    std::string divergence_message;
};

// Optional per-step observer (step index, loss); used by tests.
using StepHook = std::function<void(int, double)>;
// Optional early stop, checked after each epoch record.
using StopCondition = std::function<bool(const EpochRecord&)>;

// eval_data may be empty, in which case per-epoch accuracy is measured on
// the training split (documented; the overfit smoke relies on it).
TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& eval_data, const StepHook& hook = nullptr,
                  int max_steps = 0, const StopCondition& stop = nullptr);

double evaluate(const EncoderParams& params, const EncoderConfig& cfg,
                const PyramidSpec& spec, const Dataset& data);

struct AblationRow {
    int depth = 0;
    std::string model;  // "baseline-vit" or "retina-vit"
    double top1 = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    uint64_t seed = 0;
};

// Arms of the depth ablation; both run the same training path, the
// baseline with the spec reduced to its base level only.
TrainResult train_retina_arm(const TrainConfig& cfg, const Dataset& train_data,
                             const Dataset& eval_data, int max_steps = 0);
TrainResult train_baseline_arm(const TrainConfig& cfg, const Dataset& train_data,
                               const Dataset& eval_data, int max_steps = 0);

AblationTable ablate_depth(const TrainConfig& base, const std::vector<int>& depths,
                           const Dataset& train_data, const Dataset& eval_data);

std::string ablation_to_csv(const AblationTable& table);

}  // namespace retinavit
