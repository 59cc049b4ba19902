#pragma once

#include <vector>

#include "retinavit/mat.hpp"
#include "retinavit/pyramid.hpp"

namespace retinavit {

struct PosEmbedGrid {
    int grid_h = 0;
    int grid_w = 0;
    int dim = 0;
    int cell_edge = 0;         // pixels per grid cell (= patch_edge)
    Mat vectors;               // (grid_h * grid_w) x dim, row-major by (y, x)

    const double* at(int y, int x) const { return vectors.row(y * grid_w + x); }
};

struct ScaledPosEmbed {
    std::vector<double> vector;
    int level_index = 0;
    double norm_target = 0.0;
};

struct OverlapWeight {
    int cell_row = 0;
    int cell_col = 0;
    double weight = 0.0;
};

// 2-D sine/cosine embedding: for cell (y, x) and frequency index
// k in [0, dim/4), omega_k = temperature^(-k/(dim/4)) and the vector is
// [sin(y*omega) | cos(y*omega) | sin(x*omega) | cos(x*omega)].
// Every vector has norm sqrt(dim/2). The caller sets cell_edge before
// using the grid for receptive-field averaging.
PosEmbedGrid sincos2d(int grid_h, int grid_w, int dim, double temperature = 10000.0);

// Area of intersection between rf_box and each grid cell, normalised by
// the box area. Weights of the touched cells sum to 1.
std::vector<OverlapWeight> overlap_weights(const RfBox& rf_box, int cell_edge,
                                           int grid_h, int grid_w);

// Area-weighted average of the covered grid vectors, rescaled so its norm
// equals base_norm_scale * sqrt(rf_edge / patch_edge).
ScaledPosEmbed scaled_avg_posembed(const PatchRecord& patch, const PosEmbedGrid& grid,
                                   double base_norm_scale);

std::vector<ScaledPosEmbed> posembed_sequence(const std::vector<PatchRecord>& patches,
                                              const PosEmbedGrid& grid,
                                              double base_norm_scale);

}  // namespace retinavit
