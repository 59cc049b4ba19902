#include "retinavit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "retinavit/errors.hpp"
#include "retinavit/threadpool.hpp"

namespace retinavit {

namespace {

bool params_finite(const EncoderConfig& cfg, EncoderParams& params) {
    bool ok = true;
    visit_params(cfg, params, [&](const std::string&, Mat& m) { ok = ok && all_finite(m); });
    return ok;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
    validate_spec(cfg.spec);
    validate_config(cfg.encoder);
    if (cfg.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (cfg.peak_lr <= 0.0) throw ConfigError("train.peak_lr must be > 0");
    if (cfg.warmup_steps < 1) throw ConfigError("train.warmup_steps must be >= 1");
    if (cfg.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
}

double lr_at(int step, int total_steps, int warmup_steps, double peak_lr) {
    if (step < warmup_steps) {
        return peak_lr * (step + 1) / static_cast<double>(warmup_steps);
    }
    // Cosine decay hitting zero exactly on the last executed step.
    const int last = total_steps - 1;
    if (last <= warmup_steps) return 0.0;
    const double progress = static_cast<double>(step - warmup_steps) / (last - warmup_steps);
    return 0.5 * peak_lr * (1.0 + std::cos(3.14159265358979323846 * std::min(progress, 1.0)));
}

AdamW::AdamW(const EncoderConfig& cfg, double b1, double b2, double e, double wd)
    : beta1(b1), beta2(b2), eps(e), weight_decay(wd),
      m(make_params(cfg)), v(make_params(cfg)) {}

void AdamW::step(const EncoderConfig& cfg, EncoderParams& params,
                 EncoderParams& grads, double lr) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    auto ps = param_tensors(cfg, params);
    auto gs = param_tensors(cfg, grads);
    auto ms = param_tensors(cfg, m);
    auto vs = param_tensors(cfg, v);
    for (size_t t = 0; t < ps.size(); ++t) {
        double* __restrict__ p = ps[t]->a.data();
        double* __restrict__ g = gs[t]->a.data();
        double* __restrict__ mm = ms[t]->a.data();
        double* __restrict__ vv = vs[t]->a.data();
        const size_t n = ps[t]->a.size();
        for (size_t i = 0; i < n; ++i) {
            mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = mm[i] / bc1;
            const double vhat = vv[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
        }
    }
}

double evaluate(const EncoderParams& params, const EncoderConfig& cfg,
                const PyramidSpec& spec, const Dataset& data) {
    if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
    const int n = static_cast<int>(data.size());
    const int workers = std::min(worker_count(), n);
    std::vector<long long> correct(static_cast<size_t>(workers), 0);
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

    parallel_chunks(n, [&](int w, int begin, int end) {
        try {
            long long ok = 0;
            for (int i = begin; i < end; ++i) {
                const Mat logits = forward(data.images[static_cast<size_t>(i)], spec, cfg, params);
                // argmax with lowest-index tie break
                int best = 0;
                for (int k = 1; k < logits.cols; ++k) {
                    if (logits.a[static_cast<size_t>(k)] > logits.a[static_cast<size_t>(best)]) best = k;
                }
                if (best == data.labels[static_cast<size_t>(i)]) ++ok;
            }
            correct[static_cast<size_t>(w)] = ok;
        } catch (...) {
            errors[static_cast<size_t>(w)] = std::current_exception();
        }
    });
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    long long total = std::accumulate(correct.begin(), correct.end(), 0ll);
    return static_cast<double>(total) / n;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& eval_data, const StepHook& hook,
                  int max_steps, const StopCondition& stop) {
    validate_train_config(cfg);
    if (train_data.size() == 0) throw DataError("training dataset is empty");
    for (int label : train_data.labels) {
        if (label < 0 || label >= cfg.encoder.num_classes) {
            throw DataError("training label outside [0, num_classes)");
        }
    }

    TrainResult res;
    res.params = init_params(cfg.encoder, cfg.seed);
    AdamW opt(cfg.encoder, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);

    // Independent seeded streams: parameter init consumed cfg.seed itself.
    Rng shuffle_rng(cfg.seed + 1);
    Rng augment_rng(cfg.seed + 2);

    const int n = static_cast<int>(train_data.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int total_steps = cfg.epochs * steps_per_epoch;
    if (max_steps > 0) total_steps = std::min(total_steps, max_steps);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    EncoderParams last_good = res.params;
    int step = 0;
    double lr = 0.0;
    for (int epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates with the seeded stream only.
        for (int i = n - 1; i > 0; --i) {
            const int j = shuffle_rng.next_int(i + 1);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        double loss_sum = 0.0;
        int batches = 0;
        std::vector<ImageTensor> flipped;  // owns augmented views for this batch
        for (int b0 = 0; b0 < n && step < total_steps; b0 += cfg.batch_size) {
            const int b1 = std::min(n, b0 + cfg.batch_size);
            Batch batch;
            flipped.clear();
            flipped.reserve(static_cast<size_t>(b1 - b0));
            for (int i = b0; i < b1; ++i) {
                const ImageTensor& img = train_data.images[static_cast<size_t>(order[static_cast<size_t>(i)])];
                if (cfg.augment_flip && augment_rng.next_unit() < 0.5) {
                    flipped.push_back(flip_horizontal(img));
                    batch.images.push_back(&flipped.back());
                } else {
                    batch.images.push_back(&img);
                }
                batch.labels.push_back(train_data.labels[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            }

            EncoderParams grads = make_params(cfg.encoder);
            double loss;
            try {
                loss = loss_and_gradients(batch, cfg.spec, cfg.encoder, res.params, grads);
            } catch (const DivergenceError& e) {
                res.params = last_good;
                res.diverged = true;
                res.divergence_message = e.what();
                return res;
            }
            if (!std::isfinite(loss)) {
                res.params = last_good;
                res.diverged = true;
                res.divergence_message = "training loss became non-finite";
                return res;
            }

            lr = lr_at(step, total_steps, cfg.warmup_steps, cfg.peak_lr);
            opt.step(cfg.encoder, res.params, grads, lr);
            if (!params_finite(cfg.encoder, res.params)) {
                res.params = last_good;
                res.diverged = true;
                res.divergence_message = "parameters became non-finite after optimizer step";
                return res;
            }
            res.step_losses.push_back(loss);
            if (hook) hook(step, loss);
            loss_sum += loss;
            ++batches;
            ++step;
        }

        const Dataset& eval_split = eval_data.size() > 0 ? eval_data : train_data;
        double top1;
        try {
            top1 = evaluate(res.params, cfg.encoder, cfg.spec, eval_split);
        } catch (const DivergenceError& e) {
            res.params = last_good;
            res.diverged = true;
            res.divergence_message = e.what();
            return res;
        }
        last_good = res.params;
        const auto t1 = std::chrono::steady_clock::now();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches > 0 ? loss_sum / batches : 0.0;
        rec.eval_top1 = top1;
        rec.lr = lr;
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        res.log.push_back(rec);

        if (stop && stop(rec)) break;
    }
    return res;
}

TrainResult train_retina_arm(const TrainConfig& cfg, const Dataset& train_data,
                             const Dataset& eval_data, int max_steps) {
    return train(cfg, train_data, eval_data, nullptr, max_steps);
}

TrainResult train_baseline_arm(const TrainConfig& cfg, const Dataset& train_data,
                               const Dataset& eval_data, int max_steps) {
    TrainConfig baseline = cfg;
    baseline.spec = PyramidSpec::single_level(cfg.spec.base_edge, cfg.spec.patch_edge,
                                              cfg.spec.stride);
    return train(baseline, train_data, eval_data, nullptr, max_steps);
}

AblationTable ablate_depth(const TrainConfig& base, const std::vector<int>& depths,
                           const Dataset& train_data, const Dataset& eval_data) {
    AblationTable table;
    table.seed = base.seed;
    for (int depth : depths) {
        TrainConfig cfg = base;
        cfg.encoder.depth = depth;
        const Dataset& eval_split = eval_data.size() > 0 ? eval_data : train_data;

        TrainResult baseline = train_baseline_arm(cfg, train_data, eval_data);
        if (baseline.diverged) throw DivergenceError(baseline.divergence_message);
        table.rows.push_back({depth, "baseline-vit",
                              evaluate(baseline.params, cfg.encoder,
                                       PyramidSpec::single_level(cfg.spec.base_edge,
                                                                 cfg.spec.patch_edge,
                                                                 cfg.spec.stride),
                                       eval_split)});

        TrainResult retina = train_retina_arm(cfg, train_data, eval_data);
        if (retina.diverged) throw DivergenceError(retina.divergence_message);
        table.rows.push_back({depth, "retina-vit",
                              evaluate(retina.params, cfg.encoder, cfg.spec, eval_split)});
    }
    return table;
}

std::string ablation_to_csv(const AblationTable& table) {
    std::string out = "depth,model,top1\n";
    char line[128];
    for (const auto& row : table.rows) {
        std::snprintf(line, sizeof(line), "%d,%s,%.6f\n", row.depth, row.model.c_str(),
                      row.top1);
        out += line;
    }
    return out;
}

}  // namespace retinavit
