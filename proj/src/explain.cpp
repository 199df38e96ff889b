#include "cardiomix/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "cardiomix/errors.hpp"
#include "cardiomix/pnm.hpp"
#include "cardiomix/preprocess.hpp"

namespace cardiomix {

const char* attribution_target_name(AttributionTarget t) {
    return t == AttributionTarget::Logit ? "logit" : "probability";
}

std::optional<AttributionTarget> attribution_target_from_name(const std::string& name) {
    if (name == "logit") return AttributionTarget::Logit;
    if (name == "probability" || name == "prob") return AttributionTarget::Probability;
    return std::nullopt;
}

void OcclusionConfig::validate(int image_h, int image_w) const {
    if (window < 1) throw UsageError("occlusion window must be >= 1");
    if (window > std::min(image_h, image_w))
        throw UsageError("occlusion window " + std::to_string(window) +
                         " larger than image " + std::to_string(image_h) + "x" +
                         std::to_string(image_w));
    if (stride < 1) throw UsageError("occlusion stride must be >= 1");
    if (baseline < 0.0 || baseline > 1.0) throw UsageError("baseline must be in [0,1]");
    if (target_class < 0) throw UsageError("target class must be >= 0");
}

std::vector<int> window_positions(int dim, int window, int stride) {
    std::vector<int> pos;
    for (int p = 0; p + window <= dim; p += stride) pos.push_back(p);
    if (pos.empty() || pos.back() != dim - window) pos.push_back(dim - window);
    return pos;
}

namespace {

double model_score(const ModelParams& params, const Image& image,
                   const OcclusionConfig& cfg) {
    if (cfg.target == AttributionTarget::Logit)
        return forward_logits(params, image)[cfg.target_class];
    return forward(params, image).probs[cfg.target_class];
}

}  // namespace

std::vector<WindowDelta> occlusion_deltas(const ModelParams& params, const Image& image,
                                          const OcclusionConfig& cfg, int threads) {
    cfg.validate(image.height(), image.width());
    if (cfg.target_class >= params.spec().num_classes)
        throw UsageError("target class out of range");
    const std::vector<int> xs = window_positions(image.width(), cfg.window, cfg.stride);
    const std::vector<int> ys = window_positions(image.height(), cfg.window, cfg.stride);
    const double base_score = model_score(params, image, cfg);
    const int c = image.channels();

    std::vector<WindowDelta> deltas(xs.size() * ys.size());
    auto run_window = [&](std::size_t wi) {
        const int y0 = ys[wi / xs.size()];
        const int x0 = xs[wi % xs.size()];
        std::vector<double> data = image.data();
        for (int y = y0; y < y0 + cfg.window; ++y)
            for (int x = x0; x < x0 + cfg.window; ++x)
                for (int ch = 0; ch < c; ++ch)
                    data[(static_cast<std::size_t>(y) * image.width() + x) * c + ch] =
                        cfg.baseline;
        const Image occluded(image.height(), image.width(), c, std::move(data));
        deltas[wi] = {x0, y0, base_score - model_score(params, occluded, cfg)};
    };

    const int workers =
        std::max(1, std::min<int>(threads, static_cast<int>(deltas.size())));
    if (workers == 1) {
        for (std::size_t wi = 0; wi < deltas.size(); ++wi) run_window(wi);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                try {
                    for (std::size_t wi = w; wi < deltas.size(); wi += workers) run_window(wi);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (std::thread& th : pool) th.join();
        for (const std::exception_ptr& err : errors)
            if (err) std::rethrow_exception(err);
    }
    return deltas;
}

AttributionMap occlusion_map(const ModelParams& params, const Image& image,
                             const OcclusionConfig& cfg, int threads) {
    const std::vector<WindowDelta> deltas = occlusion_deltas(params, image, cfg, threads);

    AttributionMap map;
    map.height = image.height();
    map.width = image.width();
    map.values.assign(static_cast<std::size_t>(map.height) * map.width, 0.0);
    std::vector<int> cover(map.values.size(), 0);
    // Aggregation runs in window order regardless of thread count, so the
    // floating-point result is identical across runs.
    for (const WindowDelta& wd : deltas) {
        for (int y = wd.y0; y < wd.y0 + cfg.window; ++y) {
            for (int x = wd.x0; x < wd.x0 + cfg.window; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * map.width + x;
                map.values[i] += wd.delta;
                cover[i] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < map.values.size(); ++i)
        if (cover[i] > 0) map.values[i] /= cover[i];
    return map;
}

AttributionMap saliency_grad(const ModelParams& params, const Image& image,
                             int target_class) {
    const InputGradResult g = logit_input_gradient(params, image, target_class);
    const int h = image.height(), w = image.width(), c = image.channels();
    AttributionMap map;
    map.height = h;
    map.width = w;
    map.values.assign(static_cast<std::size_t>(h) * w, 0.0);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v =
                    std::abs(g.input_grad.data[(static_cast<std::size_t>(ch) * h + y) * w + x]);
                double& dst = map.values[static_cast<std::size_t>(y) * w + x];
                dst = std::max(dst, v);
            }
    return map;
}

AttributionMap gradcam(const ModelParams& params, const Image& image, int target_class) {
    if (params.spec().arch != Arch::SmallCnn)
        throw UnsupportedArchError("gradcam requires conv feature maps (smallcnn)");
    const InputGradResult g = logit_input_gradient(params, image, target_class);
    const int fc = g.feature_maps.shape[0];
    const int fh = g.feature_maps.shape[1];
    const int fw = g.feature_maps.shape[2];
    const std::size_t plane = static_cast<std::size_t>(fh) * fw;

    std::vector<double> cam(plane, 0.0);
    for (int k = 0; k < fc; ++k) {
        double alpha = 0.0;
        for (std::size_t i = 0; i < plane; ++i) alpha += g.feature_grad.data[k * plane + i];
        alpha /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i)
            cam[i] += alpha * g.feature_maps.data[k * plane + i];
    }
    for (double& v : cam) v = std::max(v, 0.0);

    AttributionMap map;
    map.height = image.height();
    map.width = image.width();
    map.values.assign(static_cast<std::size_t>(map.height) * map.width, 0.0);
    resize_plane(cam.data(), fh, fw, map.values.data(), map.height, map.width);
    return map;
}

void render_heatmap(const AttributionMap& map, const Image& underlay,
                    const std::string& path) {
    if (underlay.channels() != 1)
        throw UsageError("heatmap underlay must be grayscale");
    if (map.height != underlay.height() || map.width != underlay.width())
        throw UsageError("attribution map dimensions do not match the underlay");

    double max_abs = 0.0;
    for (double v : map.values) max_abs = std::max(max_abs, std::abs(v));

    std::vector<double> rgb(static_cast<std::size_t>(map.height) * map.width * 3);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const double gray = underlay.at(y, x);
            double r = gray, g = gray, b = gray;
            if (max_abs > 0.0) {
                const double n = map.at(y, x) / max_abs;
                const double a = 0.5 * std::abs(n);
                r = (1.0 - a) * gray + (n > 0.0 ? a : 0.0);
                g = (1.0 - a) * gray;
                b = (1.0 - a) * gray + (n < 0.0 ? a : 0.0);
            }
            const std::size_t i = (static_cast<std::size_t>(y) * map.width + x) * 3;
            rgb[i] = r;
            rgb[i + 1] = g;
            rgb[i + 2] = b;
        }
    }
    save_ppm(Image(map.height, map.width, 3, std::move(rgb)), path);
}

std::string attribution_csv(const AttributionMap& map) {
    std::ostringstream out;
    char buf[48];
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            std::snprintf(buf, sizeof(buf), "%.12g", map.at(y, x));
            if (x) out << ",";
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

bool pointing_game(const AttributionMap& map, const Rect& lesion_box) {
    if (!lesion_box.inside(map.width, map.height))
        throw UsageError("lesion box outside the attribution map");
    int best_x = 0, best_y = 0;
    double best = map.at(0, 0);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.at(y, x) > best) {
                best = map.at(y, x);
                best_y = y;
                best_x = x;
            }
    return lesion_box.contains(best_x, best_y);
}

}  // namespace cardiomix
