#include "eaef/io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace eaef {

namespace {

constexpr char kMagic[4] = {'E', 'A', 'E', 'T'};

[[noreturn]] void fail_at(const std::string& path, size_t offset, const std::string& what) {
    throw FormatError(path + ": " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f.write(kMagic, 4);
    const uint8_t header[4] = {1, 0, static_cast<uint8_t>(t.rank()), 0};
    f.write(reinterpret_cast<const char*>(header), 4);
    for (int d : t.dims) {
        const uint32_t u = static_cast<uint32_t>(d);
        f.write(reinterpret_cast<const char*>(&u), 4);
    }
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    if (!f) throw FormatError("short write to " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    char magic[4];
    if (!f.read(magic, 4)) fail_at(path, 0, "truncated magic");
    if (std::memcmp(magic, kMagic, 4) != 0) fail_at(path, 0, "bad magic");
    uint8_t header[4];
    if (!f.read(reinterpret_cast<char*>(header), 4)) fail_at(path, 4, "truncated header");
    if (header[0] != 1) fail_at(path, 4, "unsupported version");
    if (header[1] != 0) fail_at(path, 5, "unsupported dtype");
    const int ndim = header[2];
    std::vector<int> dims(ndim);
    for (int i = 0; i < ndim; ++i) {
        uint32_t u;
        if (!f.read(reinterpret_cast<char*>(&u), 4))
            fail_at(path, 8 + static_cast<size_t>(i) * 4, "truncated dims");
        dims[i] = static_cast<int>(u);
    }
    Tensor t(dims);
    const size_t payload_off = 8 + static_cast<size_t>(ndim) * 4;
    if (!f.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(float))))
        fail_at(path, payload_off + static_cast<size_t>(f.gcount()), "truncated payload");
    return t;
}

void write_pgm(const std::string& path, const float* values, int h, int w) {
    float lo = values[0], hi = values[0];
    for (int i = 1; i < h * w; ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    const float span = (hi > lo) ? (hi - lo) : 1.0f;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(h) * w);
    for (int i = 0; i < h * w; ++i)
        row[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::clamp((values[i] - lo) / span * 255.0f, 0.0f, 255.0f));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
}

void write_ppm(const std::string& path, const float* chw, int h, int w) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> buf(static_cast<size_t>(h) * w * 3);
    for (int p = 0; p < h * w; ++p)
        for (int c = 0; c < 3; ++c)
            buf[static_cast<size_t>(p) * 3 + c] = static_cast<uint8_t>(
                std::clamp(chw[static_cast<size_t>(c) * h * w + p] * 255.0f, 0.0f, 255.0f));
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void export_fusion_state(const FusionState& s, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    auto dump = [&](const char* name, const Tensor& t) {
        if (t.size() == 0) return;
        const std::string file = std::string(name) + ".eaet";
        write_tensor(dir + "/" + file, t);
        manifest << name << " " << file << "\n";
    };
    dump("R", s.R);
    dump("T", s.T_);
    dump("gate_i", s.gate_i);
    dump("gate_c", s.gate_c);
    dump("f_aib_rgb", s.f_aib_rgb);
    dump("f_aib_t", s.f_aib_t);
    dump("f_acb_rgb", s.f_acb_rgb);
    dump("f_acb_t", s.f_acb_t);
    dump("f_bar_rgb", s.f_bar_rgb);
    dump("f_bar_t", s.f_bar_t);
    dump("spatial_attn", s.spatial_attn);
    dump("f_final", s.f_final);

    {
        std::ofstream cases(dir + "/case_labels.txt");
        for (size_t i = 0; i < s.case_labels.size(); ++i)
            cases << case_name(s.case_labels[i]) << "\n";
        manifest << "case_labels case_labels.txt\n";
    }

    if (s.spatial_attn.size() > 0 && s.spatial_attn.rank() == 4) {
        const int n = s.spatial_attn.dim(0), c = s.spatial_attn.dim(1);
        const int h = s.spatial_attn.dim(2), w = s.spatial_attn.dim(3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) {
                const std::string file =
                    "attn_n" + std::to_string(i) + "_c" + std::to_string(j) + ".pgm";
                write_pgm(dir + "/" + file,
                          &s.spatial_attn.v[(static_cast<size_t>(i) * c + j) *
                                            static_cast<size_t>(h) * w],
                          h, w);
                manifest << "attn[" << i << "," << j << "] " << file << "\n";
            }
    }
}

}  // namespace eaef
