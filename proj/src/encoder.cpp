#include "retinavit/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "retinavit/errors.hpp"
#include "retinavit/threadpool.hpp"

namespace retinavit {

double EncoderConfig::effective_norm_scale() const {
    return base_norm_scale < 0.0 ? std::sqrt(dim / 2.0) : base_norm_scale;
}

void validate_config(const EncoderConfig& cfg) {
    if (cfg.dim < 4 || cfg.dim % 4 != 0) throw ConfigError("encoder.dim must be a positive multiple of 4");
    if (cfg.heads < 1 || cfg.dim % cfg.heads != 0) throw ConfigError("encoder.dim must be divisible by encoder.heads");
    if (cfg.depth < 1) throw ConfigError("encoder.depth must be >= 1");
    if (cfg.mlp_dim < 1) throw ConfigError("encoder.mlp_dim must be >= 1");
    if (cfg.patch_edge < 1) throw ConfigError("patch_edge must be >= 1");
    if (cfg.channels < 1) throw ConfigError("channels must be >= 1");
    if (cfg.num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (cfg.posembed_temperature <= 0.0) throw ConfigError("posembed.temperature must be > 0");
}

EncoderParams make_params(const EncoderConfig& cfg) {
    EncoderParams p;
    p.patch_w = Mat(cfg.dim, cfg.patch_input());
    p.patch_b = Mat(1, cfg.dim);
    p.layers.resize(static_cast<size_t>(cfg.depth));
    for (auto& lp : p.layers) {
        lp.norm1_scale = Mat(1, cfg.dim);
        lp.norm1_shift = Mat(1, cfg.dim);
        lp.wq = Mat(cfg.dim, cfg.dim);
        lp.bq = Mat(1, cfg.dim);
        lp.wk = Mat(cfg.dim, cfg.dim);
        lp.bk = Mat(1, cfg.dim);
        lp.wv = Mat(cfg.dim, cfg.dim);
        lp.bv = Mat(1, cfg.dim);
        lp.wo = Mat(cfg.dim, cfg.dim);
        lp.bo = Mat(1, cfg.dim);
        lp.norm2_scale = Mat(1, cfg.dim);
        lp.norm2_shift = Mat(1, cfg.dim);
        lp.w1 = Mat(cfg.mlp_dim, cfg.dim);
        lp.b1 = Mat(1, cfg.mlp_dim);
        lp.w2 = Mat(cfg.dim, cfg.mlp_dim);
        lp.b2 = Mat(1, cfg.dim);
    }
    p.final_scale = Mat(1, cfg.dim);
    p.final_shift = Mat(1, cfg.dim);
    p.head_w = Mat(cfg.num_classes, cfg.dim);
    p.head_b = Mat(1, cfg.num_classes);
    p.cls_token = Mat(1, cfg.dim);
    return p;
}

namespace {

void fill_normal(Mat& m, double sigma, Rng& rng) {
    for (double& v : m.a) v = sigma * rng.next_normal();
}

void fill_ones(Mat& m) { std::fill(m.a.begin(), m.a.end(), 1.0); }

}  // namespace

EncoderParams init_params(const EncoderConfig& cfg, uint64_t seed) {
    validate_config(cfg);
    EncoderParams p = make_params(cfg);
    Rng rng(seed);
    fill_normal(p.patch_w, 1.0 / std::sqrt(static_cast<double>(cfg.patch_input())), rng);
    const double s_dim = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    const double s_mlp = 1.0 / std::sqrt(static_cast<double>(cfg.mlp_dim));
    for (auto& lp : p.layers) {
        fill_ones(lp.norm1_scale);
        fill_normal(lp.wq, s_dim, rng);
        fill_normal(lp.wk, s_dim, rng);
        fill_normal(lp.wv, s_dim, rng);
        fill_normal(lp.wo, s_dim, rng);
        fill_ones(lp.norm2_scale);
        fill_normal(lp.w1, s_dim, rng);
        fill_normal(lp.w2, s_mlp, rng);
    }
    fill_ones(p.final_scale);
    // Head stays zero so the first loss is exactly ln(num_classes).
    if (cfg.pooling == Pooling::kClassToken) fill_normal(p.cls_token, s_dim, rng);
    return p;
}

namespace {

struct EmbeddedExample {
    TokenSequence seq;
    Mat patch_matrix;  // patch_count x patch_input, rows match token order
};

TokenSequence embed_tokens_impl(const std::vector<PatchRecord>& patches,
                                const std::vector<ScaledPosEmbed>& posembeds,
                                const EncoderParams& params, const EncoderConfig& cfg,
                                Mat* patch_matrix_out) {
    if (patches.size() != posembeds.size()) {
        throw DataError("patch/posembed length mismatch");
    }
    const int np = static_cast<int>(patches.size());
    const int in = cfg.patch_input();
    const bool cls = cfg.pooling == Pooling::kClassToken;

    Mat pm(np, in);
    for (int i = 0; i < np; ++i) {
        if (static_cast<int>(patches[static_cast<size_t>(i)].pixels.size()) != in) {
            throw DataError("patch pixel count does not match projection input size");
        }
        std::copy(patches[static_cast<size_t>(i)].pixels.begin(),
                  patches[static_cast<size_t>(i)].pixels.end(), pm.row(i));
    }

    TokenSequence seq;
    seq.has_class_token = cls;
    seq.tokens = Mat(np + (cls ? 1 : 0), cfg.dim);

    Mat projected;
    linear_forward(pm, params.patch_w, params.patch_b, projected);
    for (int i = 0; i < np; ++i) {
        const auto& pe = posembeds[static_cast<size_t>(i)];
        if (static_cast<int>(pe.vector.size()) != cfg.dim) {
            throw DataError("posembed width does not match encoder dim");
        }
        double* t = seq.tokens.row(i);
        const double* pr = projected.row(i);
        for (int k = 0; k < cfg.dim; ++k) t[k] = pr[k] + pe.vector[static_cast<size_t>(k)];
    }
    if (cls) {
        std::copy(params.cls_token.a.begin(), params.cls_token.a.end(),
                  seq.tokens.row(np));
    }

    seq.metadata.reserve(static_cast<size_t>(np));
    for (const auto& p : patches) {
        seq.metadata.push_back({p.level_index, p.grid_row, p.grid_col, p.rf_box});
    }
    if (patch_matrix_out != nullptr) *patch_matrix_out = std::move(pm);
    return seq;
}

EmbeddedExample embed_example(const ImageTensor& image, const PyramidSpec& spec,
                              const EncoderConfig& cfg, const EncoderParams& params) {
    if (spec.patch_edge != cfg.patch_edge) {
        throw ConfigError("spec.patch_edge does not match encoder patch_edge");
    }
    const Pyramid pyr = build_pyramid(image, spec);
    const auto patches = extract_patches(pyr);
    const int cells = spec.base_edge / spec.patch_edge;
    PosEmbedGrid grid = sincos2d(cells, cells, cfg.dim, cfg.posembed_temperature);
    grid.cell_edge = spec.patch_edge;
    const auto pos = posembed_sequence(patches, grid, cfg.effective_norm_scale());
    EmbeddedExample ex;
    ex.seq = embed_tokens_impl(patches, pos, params, cfg, &ex.patch_matrix);
    return ex;
}

}  // namespace

TokenSequence embed_tokens(const std::vector<PatchRecord>& patches,
                           const std::vector<ScaledPosEmbed>& posembeds,
                           const EncoderParams& params, const EncoderConfig& cfg) {
    return embed_tokens_impl(patches, posembeds, params, cfg, nullptr);
}

TokenSequence tokenize(const ImageTensor& image, const PyramidSpec& spec,
                       const EncoderConfig& cfg, const EncoderParams& params) {
    return embed_example(image, spec, cfg, params).seq;
}

Mat mha_forward(const Mat& x, const LayerParams& layer, int heads, LayerCache* cache) {
    const int n = x.rows, dim = x.cols;
    const int hd = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    LayerCache local;
    LayerCache& c = cache != nullptr ? *cache : local;

    linear_forward(x, layer.wq, layer.bq, c.q);
    linear_forward(x, layer.wk, layer.bk, c.k);
    linear_forward(x, layer.wv, layer.bv, c.v);

    c.att.assign(static_cast<size_t>(heads), Mat());
    c.att_concat = Mat(n, dim);
    for (int h = 0; h < heads; ++h) {
        const int off = h * hd;
        Mat& att = c.att[static_cast<size_t>(h)];
        att = Mat(n, n);
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ qi = c.q.row(i) + off;
            double* __restrict__ si = att.row(i);
            for (int j = 0; j < n; ++j) {
                const double* __restrict__ kj = c.k.row(j) + off;
                double acc = 0.0;
                for (int d = 0; d < hd; ++d) acc += qi[d] * kj[d];
                si[j] = acc * scale;
            }
        }
        softmax_rows(att);
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ ai = att.row(i);
            double* __restrict__ oi = c.att_concat.row(i) + off;
            for (int j = 0; j < n; ++j) {
                const double w = ai[j];
                const double* __restrict__ vj = c.v.row(j) + off;
                for (int d = 0; d < hd; ++d) oi[d] += w * vj[d];
            }
        }
    }

    Mat out;
    linear_forward(c.att_concat, layer.wo, layer.bo, out);
    return out;
}

Mat attention_layer(const Mat& x, const LayerParams& layer, const EncoderConfig& cfg,
                    bool capture, std::optional<LayerTrace>* trace_out,
                    LayerCache* cache) {
    LayerCache local;
    LayerCache& c = cache != nullptr ? *cache : local;
    c.x_in = x;

    layernorm_forward(x, layer.norm1_scale, layer.norm1_shift, c.ln1, c.ln1_mean, c.ln1_rstd);
    c.attn_out = mha_forward(c.ln1, layer, cfg.heads, &c);

    c.u = Mat(x.rows, x.cols);
    for (size_t i = 0; i < c.u.a.size(); ++i) c.u.a[i] = x.a[i] + c.attn_out.a[i];

    if (capture && trace_out != nullptr) {
        LayerTrace trace;
        trace.attention_weights = c.att;
        trace.attention_output = c.attn_out;
        trace.residual_sum = c.u;
        *trace_out = std::move(trace);
    }

    layernorm_forward(c.u, layer.norm2_scale, layer.norm2_shift, c.ln2, c.ln2_mean, c.ln2_rstd);
    linear_forward(c.ln2, layer.w1, layer.b1, c.h_pre);
    gelu_forward(c.h_pre, c.h_act);
    linear_forward(c.h_act, layer.w2, layer.b2, c.mlp_out);

    Mat out(x.rows, x.cols);
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] = c.u.a[i] + c.mlp_out.a[i];
    if (!all_finite(out)) {
        throw DivergenceError("non-finite activations in transformer layer");
    }
    return out;
}

Mat encoder_forward(const TokenSequence& seq, const EncoderParams& params,
                    const EncoderConfig& cfg, bool capture,
                    std::vector<LayerTrace>* traces, ForwardCache* cache) {
    const int n = seq.count();
    Mat x = seq.tokens;
    if (cache != nullptr) {
        cache->tokens_in = seq.tokens;
        cache->layers.assign(static_cast<size_t>(cfg.depth), LayerCache());
    }
    if (capture && traces != nullptr) traces->clear();

    for (int l = 0; l < cfg.depth; ++l) {
        std::optional<LayerTrace> trace;
        LayerCache* lc = cache != nullptr ? &cache->layers[static_cast<size_t>(l)] : nullptr;
        x = attention_layer(x, params.layers[static_cast<size_t>(l)], cfg,
                            capture, &trace, lc);
        if (capture && traces != nullptr && trace.has_value()) {
            traces->push_back(std::move(*trace));
        }
    }

    ForwardCache local;
    ForwardCache& fc = cache != nullptr ? *cache : local;
    fc.x_final = std::move(x);
    layernorm_forward(fc.x_final, params.final_scale, params.final_shift,
                      fc.final_ln, fc.final_mean, fc.final_rstd);

    fc.pooled = Mat(1, cfg.dim);
    if (cfg.pooling == Pooling::kGlobalAverage) {
        for (int i = 0; i < n; ++i) {
            const double* r = fc.final_ln.row(i);
            for (int k = 0; k < cfg.dim; ++k) fc.pooled.a[static_cast<size_t>(k)] += r[k];
        }
        for (double& v : fc.pooled.a) v /= n;
    } else {
        std::copy(fc.final_ln.row(n - 1), fc.final_ln.row(n - 1) + cfg.dim,
                  fc.pooled.a.begin());
    }

    linear_forward(fc.pooled, params.head_w, params.head_b, fc.logits);
    return fc.logits;
}

Mat forward(const ImageTensor& image, const PyramidSpec& spec,
            const EncoderConfig& cfg, const EncoderParams& params,
            bool capture, std::vector<LayerTrace>* traces) {
    const TokenSequence seq = tokenize(image, spec, cfg, params);
    return encoder_forward(seq, params, cfg, capture, traces, nullptr);
}

double cross_entropy(const Mat& logits, int label) {
    const int c = logits.cols;
    if (label < 0 || label >= c) throw DataError("label outside [0, num_classes)");
    const double* z = logits.row(0);
    double mx = z[0];
    for (int k = 1; k < c; ++k) mx = std::max(mx, z[k]);
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += std::exp(z[k] - mx);
    return std::log(sum) + mx - z[label];
}

namespace {

// dS = A .* (dA - rowsum(dA .* A)), the softmax Jacobian application.
void softmax_backward_rows(const Mat& a, const Mat& da, Mat& ds) {
    const int n = a.rows, m = a.cols;
    if (!ds.same_shape(a)) ds = Mat(n, m);
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ ai = a.row(i);
        const double* __restrict__ dai = da.row(i);
        double* __restrict__ dsi = ds.row(i);
        double dot = 0.0;
        for (int j = 0; j < m; ++j) dot += dai[j] * ai[j];
        for (int j = 0; j < m; ++j) dsi[j] = ai[j] * (dai[j] - dot);
    }
}

// Backward through one pre-norm block. dy is d(block output); returns dx.
Mat layer_backward(const LayerCache& c, const LayerParams& lp, const EncoderConfig& cfg,
                   const Mat& dy, LayerParams& g) {
    const int n = c.x_in.rows, dim = c.x_in.cols;
    const int heads = cfg.heads, hd = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // MLP path: out = u + mlp(ln2(u))
    Mat dh_act, dh_pre, dln2, du_ln;
    linear_backward(c.h_act, lp.w2, dy, &dh_act, g.w2, g.b2);
    gelu_backward(c.h_pre, dh_act, dh_pre);
    linear_backward(c.ln2, lp.w1, dh_pre, &dln2, g.w1, g.b1);
    layernorm_backward(c.u, lp.norm2_scale, c.ln2_mean, c.ln2_rstd, dln2,
                       du_ln, g.norm2_scale, g.norm2_shift);

    Mat du(n, dim);
    for (size_t i = 0; i < du.a.size(); ++i) du.a[i] = dy.a[i] + du_ln.a[i];

    // Attention path: u = x + wo(att_concat) + bo
    Mat datt_concat;
    linear_backward(c.att_concat, lp.wo, du, &datt_concat, g.wo, g.bo);

    Mat dq(n, dim), dk(n, dim), dv(n, dim);
    Mat da(n, n), ds;
    for (int h = 0; h < heads; ++h) {
        const int off = h * hd;
        const Mat& att = c.att[static_cast<size_t>(h)];
        // dA = dO V^T ; dV = A^T dO
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ doi = datt_concat.row(i) + off;
            double* __restrict__ dai = da.row(i);
            for (int j = 0; j < n; ++j) {
                const double* __restrict__ vj = c.v.row(j) + off;
                double acc = 0.0;
                for (int d = 0; d < hd; ++d) acc += doi[d] * vj[d];
                dai[j] = acc;
            }
        }
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ ai = att.row(i);
            const double* __restrict__ doi = datt_concat.row(i) + off;
            for (int j = 0; j < n; ++j) {
                const double w = ai[j];
                double* __restrict__ dvj = dv.row(j) + off;
                for (int d = 0; d < hd; ++d) dvj[d] += w * doi[d];
            }
        }
        softmax_backward_rows(att, da, ds);
        // dQ = scale * dS K ; dK = scale * dS^T Q
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ dsi = ds.row(i);
            double* __restrict__ dqi = dq.row(i) + off;
            const double* __restrict__ qi = c.q.row(i) + off;
            for (int j = 0; j < n; ++j) {
                const double w = dsi[j] * scale;
                const double* __restrict__ kj = c.k.row(j) + off;
                double* __restrict__ dkj = dk.row(j) + off;
                for (int d = 0; d < hd; ++d) {
                    dqi[d] += w * kj[d];
                    dkj[d] += w * qi[d];
                }
            }
        }
    }

    Mat dln1_q, dln1_k, dln1_v;
    linear_backward(c.ln1, lp.wq, dq, &dln1_q, g.wq, g.bq);
    linear_backward(c.ln1, lp.wk, dk, &dln1_k, g.wk, g.bk);
    linear_backward(c.ln1, lp.wv, dv, &dln1_v, g.wv, g.bv);
    Mat dln1(n, dim);
    for (size_t i = 0; i < dln1.a.size(); ++i) {
        dln1.a[i] = dln1_q.a[i] + dln1_k.a[i] + dln1_v.a[i];
    }

    Mat dx_ln;
    layernorm_backward(c.x_in, lp.norm1_scale, c.ln1_mean, c.ln1_rstd, dln1,
                       dx_ln, g.norm1_scale, g.norm1_shift);

    Mat dx(n, dim);
    for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] = du.a[i] + dx_ln.a[i];
    return dx;
}

}  // namespace

double example_loss_and_gradients(const ImageTensor& image, int label,
                                  const PyramidSpec& spec, const EncoderConfig& cfg,
                                  const EncoderParams& params, double loss_scale,
                                  EncoderParams& grads) {
    EmbeddedExample ex = embed_example(image, spec, cfg, params);
    ForwardCache fc;
    const Mat logits = encoder_forward(ex.seq, params, cfg, false, nullptr, &fc);
    const double loss = cross_entropy(logits, label);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss");

    const int n = ex.seq.count(), dim = cfg.dim, classes = cfg.num_classes;

    // d logits = (softmax - onehot) * loss_scale
    Mat dlogits(1, classes);
    {
        const double* z = logits.row(0);
        double mx = z[0];
        for (int k = 1; k < classes; ++k) mx = std::max(mx, z[k]);
        double sum = 0.0;
        for (int k = 0; k < classes; ++k) sum += std::exp(z[k] - mx);
        for (int k = 0; k < classes; ++k) {
            dlogits.a[static_cast<size_t>(k)] = std::exp(z[k] - mx) / sum * loss_scale;
        }
        dlogits.a[static_cast<size_t>(label)] -= loss_scale;
    }

    Mat dpooled;
    linear_backward(fc.pooled, params.head_w, dlogits, &dpooled, grads.head_w, grads.head_b);

    Mat dfinal_ln(n, dim);
    if (cfg.pooling == Pooling::kGlobalAverage) {
        for (int i = 0; i < n; ++i) {
            double* r = dfinal_ln.row(i);
            for (int k = 0; k < dim; ++k) r[k] = dpooled.a[static_cast<size_t>(k)] / n;
        }
    } else {
        std::copy(dpooled.a.begin(), dpooled.a.end(), dfinal_ln.row(n - 1));
    }

    Mat dx;
    layernorm_backward(fc.x_final, params.final_scale, fc.final_mean, fc.final_rstd,
                       dfinal_ln, dx, grads.final_scale, grads.final_shift);

    for (int l = cfg.depth - 1; l >= 0; --l) {
        dx = layer_backward(fc.layers[static_cast<size_t>(l)],
                            params.layers[static_cast<size_t>(l)], cfg, dx,
                            grads.layers[static_cast<size_t>(l)]);
    }

    // Token embedding: patch tokens through the shared projection, class
    // token (if any) straight into its parameter.
    const int np = ex.seq.patch_count();
    Mat dtok_patches(np, dim);
    for (int i = 0; i < np; ++i) {
        std::copy(dx.row(i), dx.row(i) + dim, dtok_patches.row(i));
    }
    linear_backward(ex.patch_matrix, params.patch_w, dtok_patches, nullptr,
                    grads.patch_w, grads.patch_b);
    if (ex.seq.has_class_token) {
        const double* r = dx.row(n - 1);
        for (int k = 0; k < dim; ++k) grads.cls_token.a[static_cast<size_t>(k)] += r[k];
    }
    return loss;
}

double loss_and_gradients(const Batch& batch, const PyramidSpec& spec,
                          const EncoderConfig& cfg, const EncoderParams& params,
                          EncoderParams& grads) {
    const int b = static_cast<int>(batch.images.size());
    if (b == 0) throw DataError("empty batch");
    if (batch.labels.size() != batch.images.size()) throw DataError("batch label/image mismatch");

    const double inv_b = 1.0 / b;
    const int workers = std::min(worker_count(), b);
    std::vector<EncoderParams> partial(static_cast<size_t>(workers));
    std::vector<double> losses(static_cast<size_t>(workers), 0.0);
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

    parallel_chunks(b, [&](int w, int begin, int end) {
        try {
            partial[static_cast<size_t>(w)] = make_params(cfg);
            double sum = 0.0;
            for (int i = begin; i < end; ++i) {
                sum += example_loss_and_gradients(*batch.images[static_cast<size_t>(i)],
                                                  batch.labels[static_cast<size_t>(i)],
                                                  spec, cfg, params, inv_b,
                                                  partial[static_cast<size_t>(w)]);
            }
            losses[static_cast<size_t>(w)] = sum;
        } catch (...) {
            errors[static_cast<size_t>(w)] = std::current_exception();
        }
    });
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    // Combine partials in worker order: deterministic for a fixed thread
    // configuration.
    double total = 0.0;
    for (int w = 0; w < workers; ++w) total += losses[static_cast<size_t>(w)];
    auto dst = param_tensors(cfg, grads);
    for (int w = 0; w < workers; ++w) {
        auto src = param_tensors(cfg, partial[static_cast<size_t>(w)]);
        for (size_t t = 0; t < dst.size(); ++t) {
            for (size_t i = 0; i < dst[t]->a.size(); ++i) {
                dst[t]->a[i] += src[t]->a[i];
            }
        }
    }
    return total * inv_b;
}

std::vector<Mat*> param_tensors(const EncoderConfig& cfg, EncoderParams& p) {
    std::vector<Mat*> out;
    visit_params(cfg, p, [&](const std::string&, Mat& m) { out.push_back(&m); });
    return out;
}

}  // namespace retinavit
