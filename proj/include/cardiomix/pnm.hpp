#pragma once

#include <string>

#include "cardiomix/image.hpp"

namespace cardiomix {

/// Reads a binary (P5) or ASCII (P2) graymap with maxval <= 255.
/// Pixel p maps to p/maxval; the result is single-channel.
Image load_pgm(const std::string& path);

/// Writes a single-channel image as binary P5 with maxval 255.
/// Quantization: round(clamp(v,0,1)*255), halves away from zero.
/// Output bytes are deterministic for equal input.
void save_pgm(const Image& img, const std::string& path);

/// Writes a three-channel image as binary P6, same quantization rule.
void save_ppm(const Image& rgb, const std::string& path);

}  // namespace cardiomix
