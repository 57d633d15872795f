#pragma once

#include <string>

#include "eaef/fusion.hpp"
#include "eaef/tensor.hpp"

namespace eaef {

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dump format, little-endian: "EAET", u8 version=1, u8 dtype (0 = f32),
// u8 ndim, u8 pad, ndim x u32 dims, row-major f32 payload.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// 8-bit binary PGM, min-max normalized per map. `values` points at h*w cells.
void write_pgm(const std::string& path, const float* values, int h, int w);

// 8-bit binary PPM from a [3,H,W] slice.
void write_ppm(const std::string& path, const float* chw, int h, int w);

// Dumps every named field plus a manifest listing field -> filename;
// attention and gate maps additionally as PGM.
void export_fusion_state(const FusionState& s, const std::string& dir);

}  // namespace eaef
