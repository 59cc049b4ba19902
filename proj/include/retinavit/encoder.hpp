#pragma once

#include <optional>
#include <string>
#include <vector>

#include "retinavit/image.hpp"
#include "retinavit/mat.hpp"
#include "retinavit/nn.hpp"
#include "retinavit/posembed.hpp"
#include "retinavit/pyramid.hpp"

namespace retinavit {

enum class Pooling { kGlobalAverage, kClassToken };

struct EncoderConfig {
    int dim = 384;
    int depth = 12;
    int heads = 6;
    int mlp_dim = 1536;
    int patch_edge = 16;
    int channels = 3;
    int num_classes = 1000;
    Pooling pooling = Pooling::kGlobalAverage;
    double posembed_temperature = 10000.0;
    // < 0 means "auto": sqrt(dim/2), which leaves base-level tokens at the
    // plain sincos2d norm. Set 1.0 for the literal absolute-norm reading.
    double base_norm_scale = -1.0;

    int head_dim() const { return dim / heads; }
    int patch_input() const { return patch_edge * patch_edge * channels; }
    double effective_norm_scale() const;
};

void validate_config(const EncoderConfig& cfg);

struct LayerParams {
    Mat norm1_scale, norm1_shift;
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat norm2_scale, norm2_shift;
    Mat w1, b1, w2, b2;  // dim -> mlp_dim -> dim
};

struct EncoderParams {
    Mat patch_w, patch_b;  // shared projection, dim x (patch_edge^2 * channels)
    std::vector<LayerParams> layers;
    Mat final_scale, final_shift;
    Mat head_w, head_b;
    Mat cls_token;  // 1 x dim, only used with class-token pooling
};

EncoderParams make_params(const EncoderConfig& cfg);

// Zero-mean init scaled by 1/sqrt(fan_in); norms to scale 1 / shift 0;
// head zero-initialised so the first loss is exactly ln(num_classes).
EncoderParams init_params(const EncoderConfig& cfg, uint64_t seed);

// Visits every parameter tensor in a fixed order with a stable name.
template <typename F>
void visit_params(const EncoderConfig& cfg, EncoderParams& p, F&& f) {
    f("patch_w", p.patch_w);
    f("patch_b", p.patch_b);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        LayerParams& lp = p.layers[l];
        f(pre + "norm1_scale", lp.norm1_scale);
        f(pre + "norm1_shift", lp.norm1_shift);
        f(pre + "wq", lp.wq);
        f(pre + "bq", lp.bq);
        f(pre + "wk", lp.wk);
        f(pre + "bk", lp.bk);
        f(pre + "wv", lp.wv);
        f(pre + "bv", lp.bv);
        f(pre + "wo", lp.wo);
        f(pre + "bo", lp.bo);
        f(pre + "norm2_scale", lp.norm2_scale);
        f(pre + "norm2_shift", lp.norm2_shift);
        f(pre + "w1", lp.w1);
        f(pre + "b1", lp.b1);
        f(pre + "w2", lp.w2);
        f(pre + "b2", lp.b2);
    }
    f("final_scale", p.final_scale);
    f("final_shift", p.final_shift);
    f("head_w", p.head_w);
    f("head_b", p.head_b);
    if (cfg.pooling == Pooling::kClassToken) f("cls_token", p.cls_token);
}

struct TokenMeta {
    int level_index = 0;
    int grid_row = 0;
    int grid_col = 0;
    RfBox rf_box;
};

struct TokenSequence {
    Mat tokens;  // N x dim
    std::vector<TokenMeta> metadata;
    bool has_class_token = false;

    int count() const { return tokens.rows; }
    int patch_count() const { return tokens.rows - (has_class_token ? 1 : 0); }
};

struct LayerTrace {
    std::vector<Mat> attention_weights;  // per head, N x N post-softmax
    Mat attention_output;                // N x dim, after output projection
    Mat residual_sum;                    // layer input + attention output
};

TokenSequence embed_tokens(const std::vector<PatchRecord>& patches,
                           const std::vector<ScaledPosEmbed>& posembeds,
                           const EncoderParams& params, const EncoderConfig& cfg);

// Pyramid -> patches -> pos embeddings -> tokens, for one image.
TokenSequence tokenize(const ImageTensor& image, const PyramidSpec& spec,
                       const EncoderConfig& cfg, const EncoderParams& params);

struct LayerCache {
    Mat x_in;
    Mat ln1, ln1_mean, ln1_rstd;
    Mat q, k, v;
    std::vector<Mat> att;  // per-head post-softmax weights
    Mat att_concat;        // per-token weighted sum of V, heads concatenated
    Mat attn_out;          // after output projection
    Mat u;                 // x_in + attn_out
    Mat ln2, ln2_mean, ln2_rstd;
    Mat h_pre, h_act;
    Mat mlp_out;
};

struct ForwardCache {
    Mat tokens_in;
    std::vector<LayerCache> layers;
    Mat x_final;
    Mat final_ln, final_mean, final_rstd;
    Mat pooled;   // 1 x dim
    Mat logits;   // 1 x num_classes
};

// Multi-head attention on already-normalised input; fills the trace's
// attention weights and concatenated head outputs when caches are given.
Mat mha_forward(const Mat& x, const LayerParams& layer, int heads, LayerCache* cache);

// Pre-norm residual block. Returns the block output; optionally records
// the probe trace (post-softmax weights, attention output, residual sum).
Mat attention_layer(const Mat& x, const LayerParams& layer, const EncoderConfig& cfg,
                    bool capture, std::optional<LayerTrace>* trace_out,
                    LayerCache* cache);

// Full encoder over an embedded token sequence.
Mat encoder_forward(const TokenSequence& seq, const EncoderParams& params,
                    const EncoderConfig& cfg, bool capture,
                    std::vector<LayerTrace>* traces, ForwardCache* cache);

Mat forward(const ImageTensor& image, const PyramidSpec& spec,
            const EncoderConfig& cfg, const EncoderParams& params,
            bool capture = false, std::vector<LayerTrace>* traces = nullptr);

double cross_entropy(const Mat& logits, int label);

struct Batch {
    std::vector<const ImageTensor*> images;
    std::vector<int> labels;
};

// Mean cross-entropy over the batch plus gradients for every parameter.
// Gradients come back in an EncoderParams-shaped container.
double loss_and_gradients(const Batch& batch, const PyramidSpec& spec,
                          const EncoderConfig& cfg, const EncoderParams& params,
                          EncoderParams& grads);

// Single-example building block used by loss_and_gradients; exposed for
// the gradient-check tests. Accumulates into grads, returns the example
// loss. loss_scale multiplies the logit gradient (1/batch for means).
double example_loss_and_gradients(const ImageTensor& image, int label,
                                  const PyramidSpec& spec, const EncoderConfig& cfg,
                                  const EncoderParams& params, double loss_scale,
                                  EncoderParams& grads);

// Pointers to every parameter tensor in visit_params order.
std::vector<Mat*> param_tensors(const EncoderConfig& cfg, EncoderParams& p);

}  // namespace retinavit
