#include "cardiomix/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "cardiomix/errors.hpp"

namespace cardiomix {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

void PreprocessConfig::validate() const {
    if (!(sigma > 0.0)) throw UsageError("gaussian sigma must be > 0");
    if (radius < 0) throw UsageError("kernel radius must be >= 0");
    if (target_height < 1 || target_width < 1)
        throw UsageError("target dimensions must be >= 1");
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        k[t + radius] = std::exp(-(static_cast<double>(t) * t) / (2.0 * sigma * sigma));
        sum += k[t + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

Image gaussian_blur(const Image& img, const PreprocessConfig& cfg) {
    cfg.validate();
    if (cfg.radius == 0) return img;
    const std::vector<double> kernel = gaussian_kernel(cfg.sigma, cfg.radius);
    const int h = img.height(), w = img.width(), c = img.channels(), r = cfg.radius;

    // Horizontal pass, then vertical; out-of-range taps replicate the edge.
    std::vector<double> tmp(img.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int t = -r; t <= r; ++t) {
                    const int xx = std::clamp(x + t, 0, w - 1);
                    s += kernel[t + r] * img.at(y, xx, ch);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = s;
            }
        }
    }
    std::vector<double> out(img.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int t = -r; t <= r; ++t) {
                    const int yy = std::clamp(y + t, 0, h - 1);
                    s += kernel[t + r] * tmp[(static_cast<std::size_t>(yy) * w + x) * c + ch];
                }
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] = clamp01(s);
            }
        }
    }
    return Image(h, w, c, std::move(out));
}

void resize_plane(const double* src, int src_h, int src_w, double* dst, int dst_h,
                  int dst_w) {
    const double scale_y = static_cast<double>(src_h) / dst_h;
    const double scale_x = static_cast<double>(src_w) / dst_w;
    for (int ty = 0; ty < dst_h; ++ty) {
        double sy = (ty + 0.5) * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(src_h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src_h - 1);
        const double fy = sy - y0;
        for (int tx = 0; tx < dst_w; ++tx) {
            double sx = (tx + 0.5) * scale_x - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(src_w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src_w - 1);
            const double fx = sx - x0;
            const double v =
                (1 - fy) * ((1 - fx) * src[y0 * src_w + x0] + fx * src[y0 * src_w + x1]) +
                fy * ((1 - fx) * src[y1 * src_w + x0] + fx * src[y1 * src_w + x1]);
            dst[ty * dst_w + tx] = v;
        }
    }
}

Image resize(const Image& img, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1) throw UsageError("target dimensions must be >= 1");
    if (target_h == img.height() && target_w == img.width()) return img;
    const int c = img.channels();
    const int sh = img.height(), sw = img.width();

    // Deinterleave per channel so resize_plane can run on contiguous planes.
    std::vector<double> out(static_cast<std::size_t>(target_h) * target_w * c);
    std::vector<double> src_plane(static_cast<std::size_t>(sh) * sw);
    std::vector<double> dst_plane(static_cast<std::size_t>(target_h) * target_w);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < sh; ++y)
            for (int x = 0; x < sw; ++x)
                src_plane[static_cast<std::size_t>(y) * sw + x] = img.at(y, x, ch);
        resize_plane(src_plane.data(), sh, sw, dst_plane.data(), target_h, target_w);
        for (int y = 0; y < target_h; ++y)
            for (int x = 0; x < target_w; ++x)
                out[(static_cast<std::size_t>(y) * target_w + x) * c + ch] =
                    clamp01(dst_plane[static_cast<std::size_t>(y) * target_w + x]);
    }
    return Image(target_h, target_w, c, std::move(out));
}

Image preprocess(const Image& img, const PreprocessConfig& cfg) {
    return resize(gaussian_blur(img, cfg), cfg.target_height, cfg.target_width);
}

}  // namespace cardiomix
