#pragma once

#include <vector>

#include "retinavit/image.hpp"

namespace retinavit {

// Geometry of a multi-resolution stack. `levels` is descending and every
// entry is divisible by patch_edge. plan_levels() produces the canonical
// stack ending at patch_edge; an explicit single-level list is also valid
// (that is the plain-ViT baseline configuration).
struct PyramidSpec {
    int base_edge = 0;
    int patch_edge = 0;
    int stride = 0;
    std::vector<int> levels;

    static PyramidSpec retina(int base_edge, int patch_edge, int stride);
    static PyramidSpec single_level(int base_edge, int patch_edge, int stride);
};

void validate_spec(const PyramidSpec& spec);

struct Pyramid {
    PyramidSpec spec;
    std::vector<ImageTensor> images;  // one per level, images[0] is the base
};

// Axis-aligned square in base-image pixel coordinates. Coordinates are
// dyadic rationals (level edges are patch_edge * 2^k), so doubles hold
// them exactly.
struct RfBox {
    double top = 0.0;
    double left = 0.0;
    double edge = 0.0;
};

struct PatchRecord {
    int level_index = 0;
    int grid_row = 0;
    int grid_col = 0;
    std::vector<double> pixels;  // patch_edge x patch_edge x channels, (r,c,ch)
    RfBox rf_box;
    double rf_edge = 0.0;
};

// {base_edge} followed by every patch_edge*2^k below it, descending.
std::vector<int> plan_levels(int base_edge, int patch_edge);

// Exact area (box) average. Requires a square input; target may be any
// edge <= the input edge (weights are separable 1-D interval overlaps).
ImageTensor downscale(const ImageTensor& image, int target_edge);

// Every level is computed directly from the base image, never chained.
Pyramid build_pyramid(const ImageTensor& image, const PyramidSpec& spec);

// Largest level first, row-major within each level.
std::vector<PatchRecord> extract_patches(const Pyramid& pyramid);

int level_token_count(const PyramidSpec& spec, int level_index);
std::vector<int> level_token_counts(const PyramidSpec& spec);
int total_token_count(const PyramidSpec& spec);

// Interior boundaries (cumulative counts without the final total), e.g.
// [196, 260, 276, 280] for the (224,16,16) stack.
std::vector<int> level_boundaries(const PyramidSpec& spec);

}  // namespace retinavit
