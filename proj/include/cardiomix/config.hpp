#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>

#include "cardiomix/augment.hpp"
#include "cardiomix/explain.hpp"
#include "cardiomix/model.hpp"
#include "cardiomix/preprocess.hpp"
#include "cardiomix/synthetic.hpp"

namespace cardiomix {

// Stage tags: the one global seed fans out to per-stage seeds via
// derive_seed(seed, tag), so stages can be rerun independently yet
// reproducibly.
inline constexpr std::uint64_t kStageGen = 1;
inline constexpr std::uint64_t kStageAugment = 2;
inline constexpr std::uint64_t kStageTrain = 3;
inline constexpr std::uint64_t kStageEval = 4;

/// Merged run settings. Precedence: built-in defaults, then the config file,
/// then command-line flags. Every run writes its fully resolved values to
/// `<out>/config.resolved`, which is itself a loadable config file.
struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = all available cores, 1 = serial

    PreprocessConfig preprocess;

    MixMethod mix_method = MixMethod::CutMix;
    std::optional<double> mix_alpha;  // unset = method default (1.0 / 0.2)
    double mix_fraction = 0.5;
    bool mix_enabled = false;  // train-time batch mixing

    Arch arch = Arch::SmallCnn;
    int num_classes = 2;

    int epochs = 30;
    int batch_size = 16;
    std::optional<double> learning_rate;  // unset = arch default
    double momentum = 0.9;
    double init_scale = 1.0;

    int folds = 10;

    OcclusionConfig occlusion;
    SyntheticSpec gen;

    double effective_alpha() const;
    double effective_learning_rate() const;
    int effective_threads() const;
    ModelSpec model_spec() const;
    MixParams mix_params(std::uint64_t stage_seed) const;
    TrainConfig train_config() const;
};

/// Applies one `section.key = value` assignment. `where` names the source
/// (file and line) for error messages. Unknown keys and ill-typed or
/// out-of-range values raise UsageError.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where);

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// skipped.
void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& name);

/// Defaults overlaid with the given file.
RunConfig load_config(const std::string& path);

/// Full key set with resolved values; round-trips through load_config.
std::string serialize_config(const RunConfig& cfg);

}  // namespace cardiomix
