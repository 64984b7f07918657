#pragma once

#include <filesystem>

#include "blurvid/tensor.hpp"

namespace blurvid {

// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to 1/255 steps.
void write_png(const std::filesystem::path& path, const Tensor& image);

// Returns (1,3,H,W) in [0,1]. Grayscale and alpha inputs are converted.
Tensor read_png(const std::filesystem::path& path);

}  // namespace blurvid
