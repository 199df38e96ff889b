#pragma once

#include <vector>

#include "cardiomix/image.hpp"

namespace cardiomix {

struct PreprocessConfig {
    double sigma = 1.0;      // Gaussian std-dev, pixels
    int radius = 2;          // kernel reaches [-radius, radius]
    int target_height = 100;
    int target_width = 100;

    void validate() const;
};

/// Normalized 1-D Gaussian kernel of length 2*radius+1; sums to 1.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable Gaussian smoothing with edge replication at the borders.
/// Radius 0 is the identity.
Image gaussian_blur(const Image& img, const PreprocessConfig& cfg);

/// Bilinear interpolation on one plane of doubles, pixel centers aligned:
/// source coordinate of output index i is (i+0.5)*scale - 0.5, clamped.
void resize_plane(const double* src, int src_h, int src_w, double* dst, int dst_h,
                  int dst_w);

/// Bilinear resize; same-size input is returned unchanged.
Image resize(const Image& img, int target_h, int target_w);

/// Blur followed by resize to the configured target dimensions.
Image preprocess(const Image& img, const PreprocessConfig& cfg);

}  // namespace cardiomix
