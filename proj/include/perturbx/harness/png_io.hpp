#pragma once

#include <string>

#include "perturbx/types.hpp"

namespace perturbx::harness {

/// 8- or 16-bit gray/RGB PNG as a unit_0_1 image; alpha is dropped and
/// palettes are expanded. Throws std::runtime_error on I/O or decode errors.
Image read_png(const std::string& path);

/// Writes a 1- or 3-channel unit-range image as 8-bit PNG, clamping values.
void write_png(const Image& image, const std::string& path);

}  // namespace perturbx::harness
