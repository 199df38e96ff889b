#include <doctest.h>

#include <cmath>
#include <vector>

#include "cardiomix/preprocess.hpp"
#include "cardiomix/rng.hpp"

using namespace cardiomix;

TEST_CASE("gaussian kernel is normalized and symmetric") {
    const std::vector<double> k = gaussian_kernel(1.0, 2);
    REQUIRE(k.size() == 5);
    double sum = 0.0;
    for (double v : k) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(k[0] == k[4]);
    CHECK(k[1] == k[3]);
    CHECK(k[2] > k[1]);
}

TEST_CASE("blurring a constant image changes nothing") {
    PreprocessConfig cfg;
    const Image img = Image::constant(9, 7, 1, 0.37);
    const Image out = gaussian_blur(img, cfg);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(out.data()[i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("radius zero is the identity") {
    PreprocessConfig cfg;
    cfg.radius = 0;
    SplitMix64 rng(3);
    std::vector<double> data(8 * 8);
    for (double& v : data) v = rng.uniform01();
    const Image img(8, 8, 1, data);
    const Image out = gaussian_blur(img, cfg);
    CHECK(out.data() == img.data());
}

TEST_CASE("impulse response at the center equals k(0)^2") {
    PreprocessConfig cfg;
    cfg.sigma = 1.3;
    cfg.radius = 3;
    std::vector<double> data(11 * 11, 0.0);
    data[5 * 11 + 5] = 1.0;
    const Image out = gaussian_blur(Image(11, 11, 1, std::move(data)), cfg);

    // Independent kernel evaluation as the oracle.
    double sum = 0.0;
    std::vector<double> k(2 * cfg.radius + 1);
    for (int t = -cfg.radius; t <= cfg.radius; ++t) {
        k[t + cfg.radius] = std::exp(-t * t / (2.0 * cfg.sigma * cfg.sigma));
        sum += k[t + cfg.radius];
    }
    const double k0 = k[cfg.radius] / sum;
    CHECK(out.at(5, 5) == doctest::Approx(k0 * k0).epsilon(1e-12));
}

TEST_CASE("blur keeps the mean of interior-dominated images") {
    SplitMix64 rng(17);
    std::vector<double> data(20 * 20);
    for (double& v : data) v = rng.uniform01();
    // Constant rows/cols at the border make edge replication mean-exact.
    for (int x = 0; x < 20; ++x) {
        for (int t = 0; t < 3; ++t) {
            data[t * 20 + x] = 0.5;
            data[(19 - t) * 20 + x] = 0.5;
            data[x * 20 + t] = 0.5;
            data[x * 20 + (19 - t)] = 0.5;
        }
    }
    const Image img(20, 20, 1, data);
    PreprocessConfig cfg;  // sigma 1, radius 2
    const Image out = gaussian_blur(img, cfg);
    double mean_in = 0.0, mean_out = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        mean_in += img.data()[i];
        mean_out += out.data()[i];
    }
    CHECK(std::abs(mean_in - mean_out) / img.size() < 1e-6);
}

TEST_CASE("resize identities") {
    SplitMix64 rng(5);
    std::vector<double> data(10 * 6);
    for (double& v : data) v = rng.uniform01();
    const Image img(10, 6, 1, data);
    const Image same = resize(img, 10, 6);
    CHECK(same.data() == img.data());

    const Image constant = Image::constant(7, 7, 1, 0.62);
    const Image scaled = resize(constant, 13, 3);
    for (double v : scaled.data()) CHECK(v == doctest::Approx(0.62).epsilon(1e-12));
}

TEST_CASE("bilinear 2x2 -> 1x2 collapses rows to their average") {
    const Image img(2, 2, 1, {0.0, 1.0, 0.0, 1.0});
    const Image out = resize(img, 1, 2);
    REQUIRE(out.height() == 1);
    REQUIRE(out.width() == 2);
    CHECK(out.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("resized values stay inside the source range") {
    SplitMix64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const int sh = 2 + static_cast<int>(rng.below(12));
        const int sw = 2 + static_cast<int>(rng.below(12));
        std::vector<double> data(static_cast<std::size_t>(sh) * sw);
        double lo = 1.0, hi = 0.0;
        for (double& v : data) {
            v = rng.uniform(0.2, 0.8);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const Image img(sh, sw, 1, std::move(data));
        const int th = 1 + static_cast<int>(rng.below(20));
        const int tw = 1 + static_cast<int>(rng.below(20));
        const Image out = resize(img, th, tw);
        for (double v : out.data()) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}
