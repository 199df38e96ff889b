#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cardiomix/errors.hpp"
#include "cardiomix/explain.hpp"
#include "cardiomix/model.hpp"
#include "cardiomix/pnm.hpp"
#include "cardiomix/rng.hpp"

using namespace cardiomix;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, SplitMix64& rng) {
    std::vector<double> data(static_cast<std::size_t>(h) * w);
    for (double& v : data) v = rng.uniform01();
    return Image(h, w, 1, std::move(data));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("window positions cover the axis and include the end-aligned stop") {
    const std::vector<int> pos = window_positions(100, 15, 8);
    REQUIRE(pos.size() == 12);  // floor(85/8)+1 regular stops plus 85
    CHECK(pos.front() == 0);
    CHECK(pos[10] == 80);
    CHECK(pos.back() == 85);

    CHECK(window_positions(16, 16, 4) == std::vector<int>{0});
    CHECK(window_positions(20, 16, 4) == std::vector<int>{0, 4});

    // Every pixel covered whenever the stride does not exceed the window.
    SplitMix64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 4 + static_cast<int>(rng.below(60));
        const int window = 1 + static_cast<int>(rng.below(dim));
        const int stride = 1 + static_cast<int>(rng.below(window));
        std::vector<int> covered(dim, 0);
        for (int p : window_positions(dim, window, stride))
            for (int i = p; i < p + window; ++i) ++covered[i];
        for (int c : covered) CHECK(c >= 1);
    }
}

TEST_CASE("a model that ignores its input gets an all-zero map") {
    const ModelSpec spec{Arch::Logistic, 24, 24, 1, 2};
    ModelParams params = ModelParams::zeros_like(ModelParams(spec, 1));
    params.at("b").data = {0.3, -0.2};  // constant logits
    SplitMix64 rng(4);
    OcclusionConfig cfg;
    cfg.window = 7;
    cfg.stride = 5;
    const AttributionMap map = occlusion_map(params, random_image(24, 24, rng), cfg);
    for (double v : map.values) CHECK(v == 0.0);
}

TEST_CASE("occlusion deltas on a linear model match the closed form") {
    const ModelSpec spec{Arch::Logistic, 30, 30, 1, 2};
    const ModelParams params(spec, 77);
    SplitMix64 rng(5);
    const Image img = random_image(30, 30, rng);

    OcclusionConfig cfg;
    cfg.window = 9;
    cfg.stride = 6;
    cfg.baseline = 0.25;
    cfg.target_class = 1;

    const Tensor& w = params.at("w");
    const std::vector<WindowDelta> deltas = occlusion_deltas(params, img, cfg);
    const std::vector<int> xs = window_positions(30, 9, 6);
    REQUIRE(deltas.size() == xs.size() * xs.size());

    std::vector<double> expected_map(30 * 30, 0.0);
    std::vector<int> cover(30 * 30, 0);
    for (const WindowDelta& wd : deltas) {
        double expect = 0.0;
        for (int y = wd.y0; y < wd.y0 + 9; ++y)
            for (int x = wd.x0; x < wd.x0 + 9; ++x)
                expect += w.data[static_cast<std::size_t>(900) + y * 30 + x] *
                          (img.at(y, x) - cfg.baseline);
        CHECK(std::abs(wd.delta - expect) <= 1e-9);
        for (int y = wd.y0; y < wd.y0 + 9; ++y)
            for (int x = wd.x0; x < wd.x0 + 9; ++x) {
                expected_map[y * 30 + x] += expect;
                ++cover[y * 30 + x];
            }
    }
    const AttributionMap map = occlusion_map(params, img, cfg);
    for (int i = 0; i < 900; ++i)
        CHECK(std::abs(map.values[i] - expected_map[i] / cover[i]) <= 1e-9);

    // Multi-threaded evaluation gives the identical map.
    const AttributionMap map4 = occlusion_map(params, img, cfg, 4);
    CHECK(map.values == map4.values);
}

TEST_CASE("occluding pixels already at the baseline changes nothing") {
    const ModelSpec spec{Arch::SmallCnn, 16, 16, 1, 2};
    const ModelParams params(spec, 12);
    SplitMix64 rng(6);
    std::vector<double> data(16 * 16);
    for (double& v : data) v = rng.uniform01();
    // First window already equals the baseline.
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) data[y * 16 + x] = 0.0;
    const Image img(16, 16, 1, std::move(data));
    OcclusionConfig cfg;
    cfg.window = 5;
    cfg.stride = 11;
    cfg.baseline = 0.0;
    const std::vector<WindowDelta> deltas = occlusion_deltas(params, img, cfg);
    CHECK(deltas.front().delta == 0.0);
}

TEST_CASE("occlusion rejects oversized windows") {
    const ModelSpec spec{Arch::Logistic, 8, 8, 1, 2};
    const ModelParams params(spec, 1);
    OcclusionConfig cfg;
    cfg.window = 9;
    SplitMix64 rng(7);
    CHECK_THROWS_AS(occlusion_map(params, random_image(8, 8, rng), cfg), UsageError);
}

TEST_CASE("saliency of a linear model is the absolute weight plane") {
    const ModelSpec spec{Arch::Logistic, 10, 10, 1, 2};
    const ModelParams params(spec, 21);
    SplitMix64 rng(8);
    const AttributionMap map = saliency_grad(params, random_image(10, 10, rng), 1);
    const Tensor& w = params.at("w");
    for (int i = 0; i < 100; ++i)
        CHECK(map.values[i] == doctest::Approx(std::abs(w.data[100 + i])).epsilon(1e-15));

    ModelParams zeros = ModelParams::zeros_like(params);
    const AttributionMap flat = saliency_grad(zeros, random_image(10, 10, rng), 1);
    for (double v : flat.values) CHECK(v == 0.0);
}

TEST_CASE("saliency matches finite differences through the cnn") {
    const ModelSpec spec{Arch::SmallCnn, 12, 12, 1, 2};
    const ModelParams params(spec, 33);
    SplitMix64 rng(9);
    const Image img = random_image(12, 12, rng);
    const int target = 1;
    const AttributionMap map = saliency_grad(params, img, target);

    const double h = 1e-5;
    for (int i = 0; i < 144; i += 7) {
        std::vector<double> up = img.data(), down = img.data();
        up[i] = std::min(1.0, up[i] + h);
        down[i] = std::max(0.0, down[i] - h);
        const double fd = (forward_logits(params, Image(12, 12, 1, up))[target] -
                           forward_logits(params, Image(12, 12, 1, down))[target]) /
                          (up[i] - down[i]);
        const double rel = std::abs(std::abs(fd) - map.values[i]) /
                           std::max({std::abs(fd), map.values[i], 1e-6});
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("gradcam output is nonnegative, input-sized, and cnn-only") {
    const ModelSpec spec{Arch::SmallCnn, 20, 20, 1, 2};
    const ModelParams params(spec, 55);
    SplitMix64 rng(10);
    const Image img = random_image(20, 20, rng);
    const AttributionMap map = gradcam(params, img, 1);
    CHECK(map.height == 20);
    CHECK(map.width == 20);
    for (double v : map.values) CHECK(v >= 0.0);

    // Constant head: zero gradients reach the feature maps.
    ModelParams constant_head = params;
    std::fill(constant_head.at("fc2.w").data.begin(), constant_head.at("fc2.w").data.end(),
              0.0);
    const AttributionMap zero_map = gradcam(constant_head, img, 1);
    for (double v : zero_map.values) CHECK(v == 0.0);

    const ModelSpec logi{Arch::Logistic, 20, 20, 1, 2};
    const ModelParams lparams(logi, 1);
    CHECK_THROWS_AS(gradcam(lparams, img, 1), UnsupportedArchError);
}

TEST_CASE("heatmap rendering blends red/blue over the underlay") {
    const fs::path dir = fs::temp_directory_path() / "cardiomix_test_heat";
    fs::create_directories(dir);
    const Image underlay = Image::constant(4, 4, 1, 0.5);

    AttributionMap zero;
    zero.height = 4;
    zero.width = 4;
    zero.values.assign(16, 0.0);
    render_heatmap(zero, underlay, (dir / "zero.ppm").string());
    const std::string z = slurp(dir / "zero.ppm");
    // P6, then 48 payload bytes all equal to round(0.5*255) = 128.
    CHECK(z.substr(0, 2) == "P6");
    const std::string payload = z.substr(z.size() - 48);
    for (char c : payload) CHECK(static_cast<unsigned char>(c) == 128);

    AttributionMap hot = zero;
    hot.values[2 * 4 + 1] = 3.0;  // single positive pixel
    render_heatmap(hot, underlay, (dir / "hot.ppm").string());
    const Image rendered = [&] {
        // reload through the PPM payload by hand: 3 channels
        const std::string bytes = slurp(dir / "hot.ppm");
        std::vector<double> vals(48);
        for (int i = 0; i < 48; ++i)
            vals[i] = static_cast<unsigned char>(bytes[bytes.size() - 48 + i]) / 255.0;
        return Image(4, 4, 3, std::move(vals));
    }();
    double best_red = -1.0;
    int best_idx = -1;
    for (int i = 0; i < 16; ++i)
        if (rendered.data()[i * 3] > best_red) {
            best_red = rendered.data()[i * 3];
            best_idx = i;
        }
    CHECK(best_idx == 9);
    for (int i = 0; i < 16; ++i)
        if (i != best_idx) CHECK(rendered.data()[i * 3] < best_red);

    render_heatmap(hot, underlay, (dir / "hot2.ppm").string());
    CHECK(slurp(dir / "hot.ppm") == slurp(dir / "hot2.ppm"));

    CHECK_THROWS_AS(render_heatmap(hot, Image::zeros(5, 4), (dir / "bad.ppm").string()),
                    UsageError);
}

TEST_CASE("pointing game follows the argmax with row-major tie-break") {
    AttributionMap map;
    map.height = 6;
    map.width = 6;
    map.values.assign(36, 0.1);

    map.values[3 * 6 + 3] = 0.9;
    CHECK(pointing_game(map, Rect{2, 2, 5, 5}));
    CHECK(!pointing_game(map, Rect{0, 0, 2, 2}));

    // Uniform map: argmax ties resolve to (0,0).
    AttributionMap uniform;
    uniform.height = 4;
    uniform.width = 4;
    uniform.values.assign(16, 0.25);
    CHECK(pointing_game(uniform, Rect{0, 0, 1, 1}));
    CHECK(!pointing_game(uniform, Rect{1, 1, 4, 4}));

    CHECK_THROWS_AS(pointing_game(uniform, Rect{0, 0, 9, 9}), UsageError);
}

TEST_CASE("attribution csv is a dense grid") {
    AttributionMap map;
    map.height = 2;
    map.width = 3;
    map.values = {1.0, -0.5, 0.0, 0.25, 2.0, -1.0};
    CHECK(attribution_csv(map) == "1,-0.5,0\n0.25,2,-1\n");
}
