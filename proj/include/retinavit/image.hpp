#pragma once

#include <vector>

namespace retinavit {

// Image with values in [0,1], row-major by (row, col, channel).
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int r, int c, int ch) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }

    bool square() const { return height == width; }
    int edge() const { return height; }
};

void validate_image(const ImageTensor& img);

// Integer-factor nearest-neighbour upscale (pixel replication).
ImageTensor upscale_nearest(const ImageTensor& img, int target_edge);

ImageTensor flip_horizontal(const ImageTensor& img);

}  // namespace retinavit
