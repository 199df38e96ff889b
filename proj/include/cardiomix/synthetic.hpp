#pragma once

#include <cstdint>

#include "cardiomix/image.hpp"

namespace cardiomix {

/// Parameters for the synthetic lesion dataset: class 0 is a smooth
/// low-frequency background, class 1 adds one bright elliptic lesion with a
/// Gaussian intensity profile at a uniformly random interior position. The
/// lesion's bounding box is recorded as ground truth for localization
/// scoring.
struct SyntheticSpec {
    int per_class = 20;
    int height = 100;
    int width = 100;
    double radius_min = 8.0;   // pixels, per ellipse axis
    double radius_max = 16.0;  // pixels
    double contrast = 0.5;     // additive lesion brightness in [0,1]
    double noise = 0.3;        // background level in [0,1]
    std::uint64_t seed = 1;

    void validate() const;
};

/// Deterministic given the seed: same spec, byte-identical dataset.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace cardiomix
