#include "retinavit/posembed.hpp"

#include <cmath>

#include "retinavit/errors.hpp"

namespace retinavit {

PosEmbedGrid sincos2d(int grid_h, int grid_w, int dim, double temperature) {
    if (dim % 4 != 0) throw DataError("sincos2d dim must be divisible by 4");
    if (grid_h < 1 || grid_w < 1) throw DataError("sincos2d grid must be non-empty");
    if (temperature <= 0.0) throw DataError("sincos2d temperature must be > 0");

    const int quarter = dim / 4;
    std::vector<double> omega(static_cast<size_t>(quarter));
    for (int k = 0; k < quarter; ++k) {
        omega[static_cast<size_t>(k)] =
            std::pow(temperature, -static_cast<double>(k) / quarter);
    }

    PosEmbedGrid grid;
    grid.grid_h = grid_h;
    grid.grid_w = grid_w;
    grid.dim = dim;
    grid.vectors = Mat(grid_h * grid_w, dim);
    for (int y = 0; y < grid_h; ++y) {
        for (int x = 0; x < grid_w; ++x) {
            double* v = grid.vectors.row(y * grid_w + x);
            for (int k = 0; k < quarter; ++k) {
                const double wy = y * omega[static_cast<size_t>(k)];
                const double wx = x * omega[static_cast<size_t>(k)];
                v[k] = std::sin(wy);
                v[quarter + k] = std::cos(wy);
                v[2 * quarter + k] = std::sin(wx);
                v[3 * quarter + k] = std::cos(wx);
            }
        }
    }
    return grid;
}

std::vector<OverlapWeight> overlap_weights(const RfBox& rf_box, int cell_edge,
                                           int grid_h, int grid_w) {
    if (cell_edge < 1) throw DataError("cell_edge must be >= 1");
    const double top = rf_box.top, left = rf_box.left, edge = rf_box.edge;
    if (edge <= 0.0) throw DataError("rf_box edge must be > 0");
    if (top < 0.0 || left < 0.0 ||
        top + edge > static_cast<double>(grid_h) * cell_edge ||
        left + edge > static_cast<double>(grid_w) * cell_edge) {
        throw DataError("rf_box outside the positional-embedding grid");
    }

    const double area = edge * edge;
    const int r0 = static_cast<int>(std::floor(top / cell_edge));
    const int c0 = static_cast<int>(std::floor(left / cell_edge));

    std::vector<OverlapWeight> weights;
    for (int r = r0; r < grid_h && r * static_cast<double>(cell_edge) < top + edge; ++r) {
        const double oy = std::min(top + edge, (r + 1) * static_cast<double>(cell_edge)) -
                          std::max(top, r * static_cast<double>(cell_edge));
        if (oy <= 0.0) continue;
        for (int c = c0; c < grid_w && c * static_cast<double>(cell_edge) < left + edge; ++c) {
            const double ox = std::min(left + edge, (c + 1) * static_cast<double>(cell_edge)) -
                              std::max(left, c * static_cast<double>(cell_edge));
            if (ox <= 0.0) continue;
            weights.push_back({r, c, oy * ox / area});
        }
    }
    return weights;
}

ScaledPosEmbed scaled_avg_posembed(const PatchRecord& patch, const PosEmbedGrid& grid,
                                   double base_norm_scale) {
    const auto weights = overlap_weights(patch.rf_box, grid.cell_edge,
                                         grid.grid_h, grid.grid_w);
    std::vector<double> v(static_cast<size_t>(grid.dim), 0.0);
    for (const auto& ow : weights) {
        const double* g = grid.at(ow.cell_row, ow.cell_col);
        for (int k = 0; k < grid.dim; ++k) v[static_cast<size_t>(k)] += ow.weight * g[k];
    }

    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) throw DataError("degenerate positional average (zero vector)");

    ScaledPosEmbed out;
    out.level_index = patch.level_index;
    out.norm_target = base_norm_scale * std::sqrt(patch.rf_edge / grid.cell_edge);
    const double factor = out.norm_target / norm;
    out.vector.resize(v.size());
    for (size_t k = 0; k < v.size(); ++k) out.vector[k] = v[k] * factor;
    return out;
}

std::vector<ScaledPosEmbed> posembed_sequence(const std::vector<PatchRecord>& patches,
                                              const PosEmbedGrid& grid,
                                              double base_norm_scale) {
    std::vector<ScaledPosEmbed> out;
    out.reserve(patches.size());
    for (const auto& p : patches) {
        out.push_back(scaled_avg_posembed(p, grid, base_norm_scale));
    }
    return out;
}

}  // namespace retinavit
