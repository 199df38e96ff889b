#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cardiomix/image.hpp"
#include "cardiomix/model.hpp"

namespace cardiomix {

struct ConfusionMatrix {
    long long tp = 0;
    long long fp = 0;
    long long tn = 0;
    long long fn = 0;

    long long total() const { return tp + fp + tn + fn; }
};

struct ScoredPrediction {
    std::string id;
    double score = 0.0;  // positive-class probability (or logit)
    int predicted = 0;
    int truth = 0;
};

ConfusionMatrix confusion(const std::vector<ScoredPrediction>& preds,
                          int positive_class = 1);

/// Confusion-matrix metrics, each an exact integer-ratio evaluation converted
/// to double. A metric whose denominator is zero is left unset and excluded
/// from aggregation. Order matches report columns and the fold CSV.
struct MetricSet {
    std::optional<double> acc, prec, npv, sens, spec, f1, kappa;
};

MetricSet metrics(const ConfusionMatrix& cm);

/// Probability that a positive outscores a negative, ties counted half;
/// computed via midranks in O(m log m). Needs at least one example of each
/// class.
double auroc(const std::vector<ScoredPrediction>& preds);

/// ROC curve points (fpr, tpr) from (0,0) to (1,1), thresholds descending.
std::vector<std::pair<double, double>> roc_points(const std::vector<ScoredPrediction>& preds);
std::string roc_csv(const std::vector<ScoredPrediction>& preds);

struct FoldPlan {
    int k = 0;
    std::vector<int> assignment;  // example index -> fold index
    std::uint64_t seed = 0;
};

/// Per-class seeded shuffle followed by round-robin assignment, so per-class
/// fold sizes differ by at most one. Every class needs >= k examples.
FoldPlan stratified_kfold(const Dataset& dataset, int k, std::uint64_t seed);

inline constexpr int kMetricCount = 8;
inline constexpr std::array<const char*, kMetricCount> kMetricKeys = {
    "acc", "prec", "npv", "sens", "spec", "f1", "auroc", "kappa"};
inline constexpr std::array<const char*, kMetricCount> kMetricColumns = {
    "ACC", "Prec", "NPV", "Rec", "Spec", "F1", "AUROC", "Cohen"};

/// Per-fold metric values plus mean and population standard deviation over
/// the folds where each metric is defined.
struct MetricsReport {
    int k = 0;
    std::vector<std::array<std::optional<double>, kMetricCount>> per_fold;
    std::array<std::optional<double>, kMetricCount> mean;
    std::array<std::optional<double>, kMetricCount> stddev;
    std::vector<std::string> undefined_notes;
};

MetricsReport aggregate_folds(
    const std::vector<std::array<std::optional<double>, kMetricCount>>& per_fold);

struct CvResult {
    MetricsReport report;
    std::vector<ScoredPrediction> pooled;  // held-out predictions, fold order
};

/// Stratified k-fold cross-validation: trains one model per fold on the
/// remaining folds (seed_f derived from cfg.seed and the fold index), scores
/// the held-out fold, and aggregates mean(std) per metric. Folds may run
/// concurrently; results do not depend on thread count.
CvResult run_cv(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& cfg,
                int k, int threads = 1);

/// mean (std) table, percentages with two decimals, one row per model.
std::string render_report(const MetricsReport& report, const std::string& model_name);

/// CSV: fold,acc,prec,npv,sens,spec,f1,auroc,kappa (empty cell = undefined).
std::string folds_csv(const MetricsReport& report);

}  // namespace cardiomix
