#include "cardiomix/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "cardiomix/errors.hpp"
#include "cardiomix/manifest.hpp"
#include "cardiomix/rng.hpp"

namespace cardiomix {

namespace {

constexpr int kCellSize = 16;  // background noise grid spacing, pixels

// Low-frequency background: independent uniform values on a coarse grid,
// bilinearly interpolated to pixel resolution.
std::vector<double> low_freq_background(int height, int width, double level,
                                        SplitMix64& rng) {
    const int gh = (height - 1) / kCellSize + 2;
    const int gw = (width - 1) / kCellSize + 2;
    std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
    for (double& g : grid) g = level * rng.uniform01();

    std::vector<double> out(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        const int gy = y / kCellSize;
        const double fy = static_cast<double>(y % kCellSize) / kCellSize;
        for (int x = 0; x < width; ++x) {
            const int gx = x / kCellSize;
            const double fx = static_cast<double>(x % kCellSize) / kCellSize;
            const double v00 = grid[static_cast<std::size_t>(gy) * gw + gx];
            const double v01 = grid[static_cast<std::size_t>(gy) * gw + gx + 1];
            const double v10 = grid[static_cast<std::size_t>(gy + 1) * gw + gx];
            const double v11 = grid[static_cast<std::size_t>(gy + 1) * gw + gx + 1];
            out[static_cast<std::size_t>(y) * width + x] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

std::string example_id(int cls, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "c%d_%04d", cls, index);
    return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (per_class < 1) throw UsageError("per_class must be >= 1");
    if (height < 4 || width < 4) throw UsageError("image size must be at least 4x4");
    if (!(radius_min > 0.0) || radius_max < radius_min)
        throw UsageError("lesion radius range invalid");
    if (radius_max >= std::min(height, width) / 2.0)
        throw UsageError("lesion radius must be below half the image size");
    if (contrast < 0.0 || contrast > 1.0) throw UsageError("contrast must be in [0,1]");
    if (noise < 0.0 || noise > 1.0) throw UsageError("noise must be in [0,1]");
    if (contrast + noise > 1.0)
        throw UsageError("contrast + noise must not exceed 1 (values would clamp)");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int h = spec.height;
    const int w = spec.width;

    std::vector<Example> examples;
    examples.reserve(static_cast<std::size_t>(spec.per_class) * 2);

    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < spec.per_class; ++i) {
            SplitMix64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(cls), i));
            std::vector<double> data = low_freq_background(h, w, spec.noise, rng);
            std::optional<Rect> box;
            if (cls == 1) {
                const double rx = rng.uniform(spec.radius_min, spec.radius_max);
                const double ry = rng.uniform(spec.radius_min, spec.radius_max);
                const double cx = rng.uniform(rx, w - 1 - rx);
                const double cy = rng.uniform(ry, h - 1 - ry);
                // Gaussian profile: contrast at the center, contrast*e^-1/2 at
                // the ellipse edge; pixel centers sit at integer coordinates.
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const double dx = (x - cx) / rx;
                        const double dy = (y - cy) / ry;
                        const double rho2 = dx * dx + dy * dy;
                        double& v = data[static_cast<std::size_t>(y) * w + x];
                        v = std::min(1.0, v + spec.contrast * std::exp(-0.5 * rho2));
                    }
                }
                box = Rect{static_cast<int>(std::ceil(cx - rx)),
                           static_cast<int>(std::ceil(cy - ry)),
                           static_cast<int>(std::floor(cx + rx)) + 1,
                           static_cast<int>(std::floor(cy + ry)) + 1};
            }
            examples.push_back({example_id(cls, i), Image(h, w, 1, std::move(data)),
                                SoftLabel::one_hot(cls, 2), box});
        }
    }
    return Dataset(std::move(examples), default_class_names(2));
}

}  // namespace cardiomix
