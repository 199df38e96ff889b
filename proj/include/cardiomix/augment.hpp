#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cardiomix/image.hpp"
#include "cardiomix/rng.hpp"

namespace cardiomix {

enum class MixMethod { CutMix, MixUp };

const char* mix_method_name(MixMethod m);
std::optional<MixMethod> mix_method_from_name(const std::string& name);

/// Conventional Beta concentration when the caller gives none.
double default_mix_alpha(MixMethod m);

struct MixParams {
    MixMethod method = MixMethod::CutMix;
    double alpha = 1.0;      // Beta(alpha, alpha) concentration, > 0
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rectangular cut region: real-valued center and extents plus the integer
/// pixel rectangle actually used (edges rounded to nearest, then clipped to
/// the image).
struct CutBox {
    double center_x = 0.0;
    double center_y = 0.0;
    double extent_w = 0.0;
    double extent_h = 0.0;
    Rect clipped;
};

struct MixedExample {
    Image image;
    SoftLabel label;
    std::string src_i;
    std::string src_j;
    double lambda_eff = 1.0;
    std::optional<CutBox> box;  // present for CutMix only
};

/// Mixing coefficient drawn from Beta(alpha, alpha); strictly inside [0,1].
double sample_lambda(double alpha, SplitMix64& rng);

/// Cut rectangle for a mixing coefficient: center uniform over the image,
/// extents width*sqrt(1-lambda) x height*sqrt(1-lambda). Draw order is
/// center x, then center y.
CutBox sample_cutbox(int width, int height, double lambda, SplitMix64& rng);

/// Composites b's pixels into a inside the clipped box; the label mixes by
/// the realized kept-area fraction lambda_eff = 1 - box_area/(W*H).
MixedExample apply_cutmix(const Example& a, const Example& b, const CutBox& box);

/// Per-pixel convex combination lambda*a + (1-lambda)*b; labels likewise.
MixedExample mixup_with_lambda(const Example& a, const Example& b, double lambda);

MixedExample cutmix(const Example& a, const Example& b, const MixParams& params,
                    SplitMix64& rng);
MixedExample mixup(const Example& a, const Example& b, const MixParams& params,
                   SplitMix64& rng);

/// n_out mixed examples from uniformly drawn source pairs (i != j). Each
/// output item uses its own derived stream (derive_seed(params.seed, item)),
/// so results do not depend on evaluation order.
std::vector<MixedExample> augment_batch(const Dataset& dataset, const MixParams& params,
                                        int n_out);

}  // namespace cardiomix
