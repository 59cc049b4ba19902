#include "retinavit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "retinavit/errors.hpp"

namespace retinavit {

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.append(b, 4);
}

void put_f32(std::string& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    uint32_t u32() {
        if (pos + 4 > buf.size()) throw DataError("truncated checkpoint");
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]);
        }
        pos += 4;
        return v;
    }
    float f32() {
        uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string bytes(size_t n) {
        if (pos + n > buf.size()) throw DataError("truncated checkpoint");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const EncoderParams& params) {
    std::string out;
    put_u32(out, kCheckpointMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(cfg.dim));
    put_u32(out, static_cast<uint32_t>(cfg.depth));
    put_u32(out, static_cast<uint32_t>(cfg.heads));
    put_u32(out, static_cast<uint32_t>(cfg.mlp_dim));
    put_u32(out, static_cast<uint32_t>(cfg.patch_edge));
    put_u32(out, static_cast<uint32_t>(cfg.channels));
    put_u32(out, static_cast<uint32_t>(cfg.num_classes));
    put_u32(out, cfg.pooling == Pooling::kClassToken ? 1u : 0u);

    uint32_t count = 0;
    EncoderParams& p = const_cast<EncoderParams&>(params);
    visit_params(cfg, p, [&](const std::string&, Mat&) { ++count; });
    put_u32(out, count);
    visit_params(cfg, p, [&](const std::string& name, Mat& m) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, 2u);  // rank: every tensor is stored rows x cols
        put_u32(out, static_cast<uint32_t>(m.rows));
        put_u32(out, static_cast<uint32_t>(m.cols));
        for (double v : m.a) put_f32(out, static_cast<float>(v));
    });

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};

    if (r.u32() != kCheckpointMagic) throw DataError("bad checkpoint magic");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version");

    LoadedCheckpoint ck;
    EncoderConfig& cfg = ck.config;
    cfg.dim = static_cast<int>(r.u32());
    cfg.depth = static_cast<int>(r.u32());
    cfg.heads = static_cast<int>(r.u32());
    cfg.mlp_dim = static_cast<int>(r.u32());
    cfg.patch_edge = static_cast<int>(r.u32());
    cfg.channels = static_cast<int>(r.u32());
    cfg.num_classes = static_cast<int>(r.u32());
    cfg.pooling = r.u32() == 1u ? Pooling::kClassToken : Pooling::kGlobalAverage;
    validate_config(cfg);

    ck.params = make_params(cfg);
    const uint32_t count = r.u32();

    std::map<std::string, Mat*> by_name;
    visit_params(cfg, ck.params, [&](const std::string& name, Mat& m) {
        by_name[name] = &m;
    });
    if (count != by_name.size()) throw DataError("checkpoint tensor count mismatch");

    for (uint32_t t = 0; t < count; ++t) {
        const uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const uint32_t rank = r.u32();
        if (rank != 2) throw DataError("unexpected tensor rank in checkpoint");
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("unknown tensor in checkpoint: " + name);
        Mat& m = *it->second;
        if (m.rows != static_cast<int>(rows) || m.cols != static_cast<int>(cols)) {
            throw DataError("tensor shape mismatch in checkpoint: " + name);
        }
        for (double& v : m.a) v = static_cast<double>(r.f32());
    }
    if (r.pos != buf.size()) throw DataError("trailing bytes in checkpoint");
    return ck;
}

}  // namespace retinavit
