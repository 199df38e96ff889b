#pragma once

#include <string>
#include <vector>

#include "cardiomix/image.hpp"
#include "cardiomix/model.hpp"

namespace cardiomix {

enum class AttributionTarget { Logit, Probability };

const char* attribution_target_name(AttributionTarget t);
std::optional<AttributionTarget> attribution_target_from_name(const std::string& name);

struct OcclusionConfig {
    int window = 15;
    int stride = 8;
    double baseline = 0.0;  // a black patch
    AttributionTarget target = AttributionTarget::Logit;
    int target_class = 1;

    void validate(int image_h, int image_w) const;
};

/// Signed per-pixel attribution; positive values are evidence for the target
/// class. Dimensions equal the explained image's.
struct AttributionMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Window top-left offsets along one axis: 0, stride, 2*stride, ... plus one
/// end-aligned offset (dim - window) when the regular grid stops short of the
/// border, so every pixel is covered.
std::vector<int> window_positions(int dim, int window, int stride);

struct WindowDelta {
    int x0 = 0;
    int y0 = 0;
    double delta = 0.0;  // score(original) - score(occluded)
};

/// Score change for every occlusion window, row-major over the window grid.
std::vector<WindowDelta> occlusion_deltas(const ModelParams& params, const Image& image,
                                          const OcclusionConfig& cfg, int threads = 1);

/// Mean of the window deltas covering each pixel.
AttributionMap occlusion_map(const ModelParams& params, const Image& image,
                             const OcclusionConfig& cfg, int threads = 1);

/// |d logit_target / d pixel|, channel-max for multichannel inputs.
AttributionMap saliency_grad(const ModelParams& params, const Image& image,
                             int target_class);

/// Last-conv class activation map: feature maps weighted by their spatially
/// averaged logit gradients, ReLU-rectified, bilinearly upsampled to the
/// input size. Requires the smallcnn architecture.
AttributionMap gradcam(const ModelParams& params, const Image& image, int target_class);

/// Red (positive) / blue (negative) overlay on the grayscale underlay at
/// 50% strength of the normalized attribution value; writes a P6 file with
/// deterministic bytes. An all-zero map renders the underlay unchanged.
void render_heatmap(const AttributionMap& map, const Image& underlay,
                    const std::string& path);

/// Raw attribution values as a CSV grid, one row per pixel row.
std::string attribution_csv(const AttributionMap& map);

/// True iff the map's argmax (ties break to the lowest row-major index)
/// falls inside the given box.
bool pointing_game(const AttributionMap& map, const Rect& lesion_box);

}  // namespace cardiomix
