#include "retinavit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <png.h>

#include "retinavit/errors.hpp"
#include "retinavit/nn.hpp"

namespace retinavit {

namespace fs = std::filesystem;

Dataset synthetic_dataset(uint64_t seed, int count, int num_classes, int edge,
                          int channels) {
    if (count < 1 || num_classes < 1 || edge < 1) {
        throw DataError("synthetic dataset needs positive count/classes/edge");
    }
    Dataset ds;
    ds.num_classes = num_classes;
    ds.images.reserve(static_cast<size_t>(count));
    ds.labels.reserve(static_cast<size_t>(count));
    const double pi = 3.14159265358979323846;

    for (int i = 0; i < count; ++i) {
        const int label = i % num_classes;
        Rng rng(seed + 0x9E3779B97F4A7C15ull * static_cast<uint64_t>(i + 1));
        // Class signature: grating orientation and frequency.
        const double theta = pi * label / num_classes;
        const double freq = 2.0 + (label % 5);
        const double phase = 2.0 * pi * rng.next_unit();
        const double ct = std::cos(theta), st = std::sin(theta);

        ImageTensor img(edge, edge, channels);
        for (int r = 0; r < edge; ++r) {
            for (int c = 0; c < edge; ++c) {
                const double proj = (c * ct + r * st) / edge;
                for (int ch = 0; ch < channels; ++ch) {
                    double v = 0.5 + 0.35 * std::sin(2.0 * pi * freq * proj + phase + 0.5 * ch) +
                               0.2 * (rng.next_unit() - 0.5);
                    img.at(r, c, ch) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    return ds;
}

namespace {

constexpr int kCifarEdge = 32;
constexpr size_t kCifarRecord = 1 + 3 * 1024;

void append_cifar_file(Dataset& ds, const fs::path& file, int max_records) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open cifar file: " + file.string());
    std::vector<unsigned char> rec(kCifarRecord);
    while (max_records == 0 || static_cast<int>(ds.images.size()) < max_records) {
        in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (in.gcount() == 0 && in.eof()) break;
        if (static_cast<size_t>(in.gcount()) != rec.size()) {
            throw DataError("truncated cifar record in " + file.string());
        }
        const int label = rec[0];
        if (label < 0 || label > 9) throw DataError("cifar label out of range");
        ImageTensor img(kCifarEdge, kCifarEdge, 3);
        for (int ch = 0; ch < 3; ++ch) {
            const unsigned char* plane = rec.data() + 1 + ch * 1024;
            for (int r = 0; r < kCifarEdge; ++r) {
                for (int c = 0; c < kCifarEdge; ++c) {
                    img.at(r, c, ch) = plane[r * kCifarEdge + c] / 255.0;
                }
            }
        }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
}

}  // namespace

Dataset load_cifar10(const std::string& path, int max_records) {
    Dataset ds;
    ds.num_classes = 10;
    fs::path p(path);
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.path().extension() == ".bin") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("no .bin files in " + path);
        for (const auto& f : files) {
            append_cifar_file(ds, f, max_records);
            if (max_records != 0 && static_cast<int>(ds.images.size()) >= max_records) break;
        }
    } else if (fs::exists(p)) {
        append_cifar_file(ds, p, max_records);
    } else {
        throw DataError("cifar path does not exist: " + path);
    }
    if (ds.images.empty()) throw DataError("cifar dataset is empty");
    return ds;
}

namespace {

ImageTensor load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6" && magic != "P5") throw DataError("unsupported PNM magic in " + path);
    auto next_int = [&]() {
        int v;
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v)) throw DataError("bad PNM header in " + path);
            return v;
        }
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw DataError("only 8-bit PNM supported: " + path);
    in.get();  // single whitespace after maxval
    const int src_ch = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * src_ch);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) throw DataError("truncated PNM: " + path);

    ImageTensor img(h, w, 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const size_t idx = (static_cast<size_t>(r) * w + c) * src_ch +
                                   (src_ch == 3 ? ch : 0);
                img.at(r, c, ch) = raw[idx] / 255.0;
            }
        }
    }
    return img;
}

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png != nullptr) png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
        if (fp != nullptr) std::fclose(fp);
    }
};

ImageTensor load_png(const std::string& path) {
    PngReader r;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 w = 0, h = 0;

    r.fp = std::fopen(path.c_str(), "rb");
    if (r.fp == nullptr) throw DataError("cannot open: " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (r.png == nullptr) throw DataError("png init failed");
    r.info = png_create_info_struct(r.png);
    if (r.info == nullptr) throw DataError("png init failed");
    if (setjmp(png_jmpbuf(r.png))) {
        throw DataError("png decode failed: " + path);
    }
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);
    w = png_get_image_width(r.png, r.info);
    h = png_get_image_height(r.png, r.info);
    const png_byte color = png_get_color_type(r.png, r.info);
    const png_byte depth = png_get_bit_depth(r.png, r.info);

    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(r.png);
    }
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);

    pixels.resize(static_cast<size_t>(w) * h * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = pixels.data() + static_cast<size_t>(y) * w * 3;
    }
    png_read_image(r.png, rows.data());

    ImageTensor img(static_cast<int>(h), static_cast<int>(w), 3);
    for (size_t i = 0; i < pixels.size(); ++i) img.data[i] = pixels[i] / 255.0;
    return img;
}

bool has_image_extension(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

}  // namespace

ImageTensor load_image_file(const std::string& path) {
    const auto ext = fs::path(path).extension().string();
    if (ext == ".png") return load_png(path);
    if (ext == ".ppm" || ext == ".pgm") return load_pnm(path);
    throw DataError("unsupported image format: " + path);
}

Dataset load_image_dir(const std::string& path, int max_images) {
    fs::path root(path);
    if (!fs::is_directory(root)) throw DataError("not a directory: " + path);

    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) subdirs.push_back(e.path());
    }
    std::sort(subdirs.begin(), subdirs.end());

    Dataset ds;
    auto load_dir_into = [&](const fs::path& dir, int label) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            if (max_images != 0 && static_cast<int>(ds.images.size()) >= max_images) return;
            ds.images.push_back(load_image_file(f.string()));
            ds.labels.push_back(label);
        }
    };

    if (subdirs.empty()) {
        ds.num_classes = 1;
        load_dir_into(root, 0);
    } else {
        ds.num_classes = static_cast<int>(subdirs.size());
        for (size_t i = 0; i < subdirs.size(); ++i) {
            load_dir_into(subdirs[i], static_cast<int>(i));
        }
    }
    if (ds.images.empty()) throw DataError("no images found under " + path);
    return ds;
}

void resize_dataset(Dataset& ds, int edge) {
    for (auto& img : ds.images) {
        if (!img.square()) throw DataError("dataset images must be square");
        if (img.edge() != edge) img = upscale_nearest(img, edge);
    }
}

}  // namespace retinavit
