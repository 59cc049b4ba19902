#include "retinavit/pyramid.hpp"

#include <algorithm>

#include "retinavit/errors.hpp"

namespace retinavit {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// 1-D exact area overlap weights for downscaling S -> T. In units scaled
// by T, source pixel s covers [sT, (s+1)T) and target cell t covers
// [tS, (t+1)S); integer overlaps per target cell sum to S.
struct AxisWeights {
    std::vector<int> start;                  // first contributing source index
    std::vector<std::vector<long long>> w;   // integer overlap lengths
};

AxisWeights axis_weights(int source, int target) {
    AxisWeights aw;
    aw.start.resize(target);
    aw.w.resize(target);
    for (int t = 0; t < target; ++t) {
        long long lo = static_cast<long long>(t) * source;        // scaled by T
        long long hi = static_cast<long long>(t + 1) * source;
        int s0 = static_cast<int>(lo / target);
        aw.start[t] = s0;
        for (int s = s0; static_cast<long long>(s) * target < hi; ++s) {
            long long a = std::max(lo, static_cast<long long>(s) * target);
            long long b = std::min(hi, static_cast<long long>(s + 1) * target);
            aw.w[t].push_back(b - a);
        }
    }
    return aw;
}

}  // namespace

std::vector<int> plan_levels(int base_edge, int patch_edge) {
    if (patch_edge < 1) throw DataError("patch_edge must be >= 1");
    if (base_edge < patch_edge) throw DataError("base_edge must be >= patch_edge");
    if (base_edge % patch_edge != 0) {
        throw DataError("base_edge not divisible by patch_edge: unusable base resolution");
    }
    std::vector<int> levels{base_edge};
    for (long long e = patch_edge; e < base_edge; e *= 2) {
        levels.push_back(static_cast<int>(e));
    }
    std::sort(levels.begin(), levels.end(), std::greater<int>());
    return levels;
}

PyramidSpec PyramidSpec::retina(int base_edge, int patch_edge, int stride) {
    PyramidSpec spec{base_edge, patch_edge, stride, plan_levels(base_edge, patch_edge)};
    validate_spec(spec);
    return spec;
}

PyramidSpec PyramidSpec::single_level(int base_edge, int patch_edge, int stride) {
    PyramidSpec spec{base_edge, patch_edge, stride, {base_edge}};
    validate_spec(spec);
    return spec;
}

void validate_spec(const PyramidSpec& spec) {
    if (spec.patch_edge < 1) throw DataError("patch_edge must be >= 1");
    if (spec.base_edge < spec.patch_edge) throw DataError("base_edge must be >= patch_edge");
    if (spec.base_edge % spec.patch_edge != 0) {
        throw DataError("base_edge not divisible by patch_edge");
    }
    if (spec.stride < 1 || spec.stride > spec.patch_edge) {
        throw DataError("stride must be in [1, patch_edge]");
    }
    if (spec.patch_edge % spec.stride != 0) throw DataError("stride must divide patch_edge");
    if (spec.levels.empty()) throw DataError("spec has no levels");
    if (spec.levels.front() != spec.base_edge) throw DataError("first level must equal base_edge");
    for (size_t i = 0; i < spec.levels.size(); ++i) {
        int e = spec.levels[i];
        if (e % spec.patch_edge != 0) throw DataError("level edge not divisible by patch_edge");
        if (i > 0) {
            if (e >= spec.levels[i - 1]) throw DataError("levels must be strictly descending");
            // Scaled levels sit on the power-of-two lattice so receptive
            // fields stay dyadic (no arbitrary-ratio pyramids).
            if (!is_power_of_two(e / spec.patch_edge)) {
                throw DataError("scaled level edges must be patch_edge * 2^k");
            }
        }
    }
}

ImageTensor downscale(const ImageTensor& image, int target_edge) {
    if (!image.square()) throw DataError("downscale requires a square image");
    if (target_edge < 1) throw DataError("target_edge must be >= 1");
    if (target_edge > image.edge()) throw DataError("target_edge exceeds image edge");
    if (target_edge == image.edge()) return image;

    const int S = image.edge();
    const int T = target_edge;
    const AxisWeights aw = axis_weights(S, T);
    const double total = static_cast<double>(S) * static_cast<double>(S);

    ImageTensor out(T, T, image.channels);
    for (int ty = 0; ty < T; ++ty) {
        for (int tx = 0; tx < T; ++tx) {
            for (int ch = 0; ch < image.channels; ++ch) {
                double acc = 0.0;
                for (size_t iy = 0; iy < aw.w[ty].size(); ++iy) {
                    const int sy = aw.start[ty] + static_cast<int>(iy);
                    const double wy = static_cast<double>(aw.w[ty][iy]);
                    double row_acc = 0.0;
                    for (size_t ix = 0; ix < aw.w[tx].size(); ++ix) {
                        const int sx = aw.start[tx] + static_cast<int>(ix);
                        row_acc += static_cast<double>(aw.w[tx][ix]) * image.at(sy, sx, ch);
                    }
                    acc += wy * row_acc;
                }
                out.at(ty, tx, ch) = acc / total;
            }
        }
    }
    return out;
}

Pyramid build_pyramid(const ImageTensor& image, const PyramidSpec& spec) {
    validate_spec(spec);
    validate_image(image);
    if (!image.square() || image.edge() != spec.base_edge) {
        throw DataError("image edge does not match spec.base_edge");
    }
    Pyramid pyr;
    pyr.spec = spec;
    pyr.images.reserve(spec.levels.size());
    for (size_t i = 0; i < spec.levels.size(); ++i) {
        if (i == 0) {
            pyr.images.push_back(image);
        } else {
            pyr.images.push_back(downscale(image, spec.levels[i]));
        }
    }
    return pyr;
}

int level_token_count(const PyramidSpec& spec, int level_index) {
    int edge = spec.levels[static_cast<size_t>(level_index)];
    int n = (edge - spec.patch_edge) / spec.stride + 1;
    return n * n;
}

std::vector<int> level_token_counts(const PyramidSpec& spec) {
    std::vector<int> counts;
    counts.reserve(spec.levels.size());
    for (size_t i = 0; i < spec.levels.size(); ++i) {
        counts.push_back(level_token_count(spec, static_cast<int>(i)));
    }
    return counts;
}

int total_token_count(const PyramidSpec& spec) {
    validate_spec(spec);
    int total = 0;
    for (int c : level_token_counts(spec)) total += c;
    return total;
}

std::vector<int> level_boundaries(const PyramidSpec& spec) {
    std::vector<int> bounds;
    int cum = 0;
    const auto counts = level_token_counts(spec);
    for (size_t i = 0; i + 1 < counts.size(); ++i) {
        cum += counts[i];
        bounds.push_back(cum);
    }
    return bounds;
}

std::vector<PatchRecord> extract_patches(const Pyramid& pyramid) {
    const PyramidSpec& spec = pyramid.spec;
    validate_spec(spec);
    const int P = spec.patch_edge;

    std::vector<PatchRecord> patches;
    patches.reserve(static_cast<size_t>(total_token_count(spec)));

    for (size_t li = 0; li < spec.levels.size(); ++li) {
        const ImageTensor& img = pyramid.images[li];
        const int edge = spec.levels[li];
        const int grid_n = (edge - P) / spec.stride + 1;
        // base/level is m/2^k, a dyadic rational: exact in doubles.
        const double scale = static_cast<double>(spec.base_edge) / edge;
        const double rf_edge = P * scale;
        const int ch = img.channels;

        for (int gr = 0; gr < grid_n; ++gr) {
            for (int gc = 0; gc < grid_n; ++gc) {
                PatchRecord rec;
                rec.level_index = static_cast<int>(li);
                rec.grid_row = gr;
                rec.grid_col = gc;
                rec.rf_box = {gr * spec.stride * scale, gc * spec.stride * scale, rf_edge};
                rec.rf_edge = rf_edge;
                rec.pixels.resize(static_cast<size_t>(P) * P * ch);
                const int r0 = gr * spec.stride;
                const int c0 = gc * spec.stride;
                size_t k = 0;
                for (int r = 0; r < P; ++r) {
                    for (int c = 0; c < P; ++c) {
                        for (int d = 0; d < ch; ++d) {
                            rec.pixels[k++] = img.at(r0 + r, c0 + c, d);
                        }
                    }
                }
                patches.push_back(std::move(rec));
            }
        }
    }
    return patches;
}

}  // namespace retinavit
