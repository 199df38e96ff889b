#include "cardiomix/augment.hpp"

#include <algorithm>
#include <cmath>

#include "cardiomix/errors.hpp"

namespace cardiomix {

const char* mix_method_name(MixMethod m) {
    return m == MixMethod::CutMix ? "cutmix" : "mixup";
}

std::optional<MixMethod> mix_method_from_name(const std::string& name) {
    if (name == "cutmix") return MixMethod::CutMix;
    if (name == "mixup") return MixMethod::MixUp;
    return std::nullopt;
}

double default_mix_alpha(MixMethod m) {
    return m == MixMethod::CutMix ? 1.0 : 0.2;
}

void MixParams::validate() const {
    if (!(alpha > 0.0)) throw UsageError("mix alpha must be > 0");
}

double sample_lambda(double alpha, SplitMix64& rng) {
    if (!(alpha > 0.0)) throw UsageError("mix alpha must be > 0");
    return sample_beta(alpha, alpha, rng);
}

CutBox sample_cutbox(int width, int height, double lambda, SplitMix64& rng) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
    CutBox box;
    box.center_x = rng.uniform(0.0, width);
    box.center_y = rng.uniform(0.0, height);
    const double side = std::sqrt(1.0 - lambda);
    box.extent_w = width * side;
    box.extent_h = height * side;

    // Edges rounded to nearest (halves away from zero), then clipped.
    int x0 = static_cast<int>(std::llround(box.center_x - box.extent_w / 2.0));
    int x1 = static_cast<int>(std::llround(box.center_x + box.extent_w / 2.0));
    int y0 = static_cast<int>(std::llround(box.center_y - box.extent_h / 2.0));
    int y1 = static_cast<int>(std::llround(box.center_y + box.extent_h / 2.0));
    x0 = std::clamp(x0, 0, width);
    x1 = std::clamp(x1, 0, width);
    y0 = std::clamp(y0, 0, height);
    y1 = std::clamp(y1, 0, height);
    box.clipped = Rect{x0, y0, std::max(x0, x1), std::max(y0, y1)};
    return box;
}

namespace {

void require_same_dims(const Example& a, const Example& b) {
    if (!a.image.same_dims(b.image))
        throw UsageError("mixing requires equal image dimensions ('" + a.id + "' vs '" +
                         b.id + "')");
}

}  // namespace

MixedExample apply_cutmix(const Example& a, const Example& b, const CutBox& box) {
    require_same_dims(a, b);
    const int w = a.image.width(), h = a.image.height(), c = a.image.channels();
    const Rect& r = box.clipped;
    if (!r.inside(w, h)) throw UsageError("cut box outside image bounds");

    std::vector<double> data = a.image.data();
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int ch = 0; ch < c; ++ch)
                data[(static_cast<std::size_t>(y) * w + x) * c + ch] = b.image.at(y, x, ch);

    const double lambda_eff =
        1.0 - static_cast<double>(r.area()) / (static_cast<double>(w) * h);
    return MixedExample{Image(h, w, c, std::move(data)),
                        mix_labels(a.label, b.label, lambda_eff),
                        a.id,
                        b.id,
                        lambda_eff,
                        box};
}

MixedExample mixup_with_lambda(const Example& a, const Example& b, double lambda) {
    require_same_dims(a, b);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
    const int w = a.image.width(), h = a.image.height(), c = a.image.channels();
    std::vector<double> data(a.image.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double va = a.image.data()[i], vb = b.image.data()[i];
        // Rounding can leave the convex hull of the sources by one ulp;
        // pin the result to it so range invariants hold exactly.
        data[i] = std::clamp(lambda * va + (1.0 - lambda) * vb, std::min(va, vb),
                             std::max(va, vb));
    }
    return MixedExample{Image(h, w, c, std::move(data)),
                        mix_labels(a.label, b.label, lambda),
                        a.id,
                        b.id,
                        lambda,
                        std::nullopt};
}

MixedExample cutmix(const Example& a, const Example& b, const MixParams& params,
                    SplitMix64& rng) {
    params.validate();
    const double lambda = sample_lambda(params.alpha, rng);
    return apply_cutmix(a, b, sample_cutbox(a.image.width(), a.image.height(), lambda, rng));
}

MixedExample mixup(const Example& a, const Example& b, const MixParams& params,
                   SplitMix64& rng) {
    params.validate();
    return mixup_with_lambda(a, b, sample_lambda(params.alpha, rng));
}

std::vector<MixedExample> augment_batch(const Dataset& dataset, const MixParams& params,
                                        int n_out) {
    params.validate();
    if (n_out < 0) throw UsageError("n_out must be >= 0");
    if (dataset.size() == 0) throw UsageError("cannot augment an empty dataset");
    if (dataset.size() == 1 && n_out > 0)
        throw UsageError("cannot pick distinct source pairs from a single example");

    const std::size_t n = dataset.size();
    std::vector<MixedExample> out;
    out.reserve(static_cast<std::size_t>(n_out));
    for (int item = 0; item < n_out; ++item) {
        SplitMix64 rng(derive_seed(params.seed, static_cast<std::uint64_t>(item)));
        const std::size_t i = rng.below(n);
        std::size_t j = rng.below(n - 1);
        if (j >= i) ++j;
        const Example& a = dataset.examples()[i];
        const Example& b = dataset.examples()[j];
        out.push_back(params.method == MixMethod::CutMix ? cutmix(a, b, params, rng)
                                                         : mixup(a, b, params, rng));
    }
    return out;
}

}  // namespace cardiomix
