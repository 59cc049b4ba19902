#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retinavit/image.hpp"

namespace retinavit {

struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    int num_classes = 0;

    size_t size() const { return images.size(); }
};

// Seeded synthetic set: class c is an oriented sinusoidal grating (angle
// and frequency derived from c) plus per-example seeded noise, clamped to
// [0,1]. Classes are balanced in generation order 0,1,...,C-1,0,1,...
Dataset synthetic_dataset(uint64_t seed, int count, int num_classes, int edge,
                          int channels = 3);

// CIFAR-10-style binary records: 1 label byte then 3072 pixel bytes
// (1024 red row-major, 1024 green, 1024 blue) per record, 32x32x3.
// `path` may be a single .bin file or a directory of .bin files.
Dataset load_cifar10(const std::string& path, int max_records = 0);

// Directory of PNG/PPM/PGM images. If the directory has subdirectories,
// each subdirectory is one class (sorted by name); otherwise all images
// get label 0. 8-bit samples map to [0,1] by v/255.
Dataset load_image_dir(const std::string& path, int max_images = 0);

ImageTensor load_image_file(const std::string& path);

// Resamples every image to `edge`: identity if equal, nearest-neighbour
// replication if edge is an integer multiple, otherwise an error.
void resize_dataset(Dataset& ds, int edge);

}  // namespace retinavit
