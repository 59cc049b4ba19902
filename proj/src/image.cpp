#include "retinavit/image.hpp"

#include <cmath>

#include "retinavit/errors.hpp"

namespace retinavit {

void validate_image(const ImageTensor& img) {
    if (img.height < 1 || img.width < 1 || img.channels < 1) {
        throw DataError("image dimensions must be positive");
    }
    if (img.data.size() != static_cast<size_t>(img.height) * img.width * img.channels) {
        throw DataError("image buffer size does not match dimensions");
    }
    for (double v : img.data) {
        if (!std::isfinite(v)) throw DataError("image contains non-finite values");
    }
}

ImageTensor upscale_nearest(const ImageTensor& img, int target_edge) {
    if (!img.square()) throw DataError("upscale_nearest requires a square image");
    if (target_edge == img.edge()) return img;
    if (target_edge < img.edge() || target_edge % img.edge() != 0) {
        throw DataError("upscale target must be an integer multiple of the source edge");
    }
    int f = target_edge / img.edge();
    ImageTensor out(target_edge, target_edge, img.channels);
    for (int r = 0; r < target_edge; ++r) {
        for (int c = 0; c < target_edge; ++c) {
            for (int ch = 0; ch < img.channels; ++ch) {
                out.at(r, c, ch) = img.at(r / f, c / f, ch);
            }
        }
    }
    return out;
}

ImageTensor flip_horizontal(const ImageTensor& img) {
    ImageTensor out(img.height, img.width, img.channels);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            for (int ch = 0; ch < img.channels; ++ch) {
                out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
            }
        }
    }
    return out;
}

}  // namespace retinavit
