#include "cardiomix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "cardiomix/errors.hpp"
#include "cardiomix/rng.hpp"

namespace cardiomix {

namespace {

// Seed stream tags inside cross-validation.
constexpr std::uint64_t kSeedFoldPlan = 0x41;
constexpr std::uint64_t kSeedFoldTrain = 0x42;

std::optional<double> ratio(long long num, long long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion(const std::vector<ScoredPrediction>& preds, int positive_class) {
    if (preds.empty()) throw UsageError("confusion: no predictions");
    ConfusionMatrix cm;
    for (const ScoredPrediction& p : preds) {
        const bool actual_pos = p.truth == positive_class;
        const bool pred_pos = p.predicted == positive_class;
        if (actual_pos && pred_pos) ++cm.tp;
        else if (actual_pos && !pred_pos) ++cm.fn;
        else if (!actual_pos && pred_pos) ++cm.fp;
        else ++cm.tn;
    }
    return cm;
}

MetricSet metrics(const ConfusionMatrix& cm) {
    if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0)
        throw UsageError("confusion counts must be nonnegative");
    const long long total = cm.total();
    if (total == 0) throw UsageError("metrics: empty confusion matrix");

    MetricSet m;
    m.acc = ratio(cm.tp + cm.tn, total);
    m.prec = ratio(cm.tp, cm.tp + cm.fp);
    m.npv = ratio(cm.tn, cm.tn + cm.fn);
    m.sens = ratio(cm.tp, cm.tp + cm.fn);
    m.spec = ratio(cm.tn, cm.tn + cm.fp);
    m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    // kappa = (p_o - p_e)/(1 - p_e) with chance agreement from the marginals;
    // evaluated as one integer ratio so the conversion to double is exact.
    const long long pe_n2 =
        (cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.fn + cm.tn) * (cm.fp + cm.tn);
    m.kappa = ratio(total * (cm.tp + cm.tn) - pe_n2, total * total - pe_n2);
    return m;
}

double auroc(const std::vector<ScoredPrediction>& preds) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const ScoredPrediction& p : preds) (p.truth == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("auroc needs at least one positive and one negative");

    std::vector<std::pair<double, int>> items;  // (score, truth)
    items.reserve(preds.size());
    for (const ScoredPrediction& p : preds) items.emplace_back(p.score, p.truth);
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Midrank sum over positives; equivalent to pairwise counting with ties
    // worth one half.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].first == items[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t t = i; t < j; ++t)
            if (items[t].second == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<std::pair<double, double>> roc_points(const std::vector<ScoredPrediction>& preds) {
    long long n_pos = 0, n_neg = 0;
    for (const ScoredPrediction& p : preds) (p.truth == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("roc needs at least one positive and one negative");

    std::vector<std::pair<double, int>> items;
    items.reserve(preds.size());
    for (const ScoredPrediction& p : preds) items.emplace_back(p.score, p.truth);
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 0.0);
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].first == items[i].first) ++j;
        for (std::size_t t = i; t < j; ++t) (items[t].second == 1 ? tp : fp) += 1;
        pts.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
        i = j;
    }
    return pts;
}

std::string roc_csv(const std::vector<ScoredPrediction>& preds) {
    std::ostringstream out;
    out << "fpr,tpr\n";
    char buf[64];
    for (const auto& [fpr, tpr] : roc_points(preds)) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", fpr, tpr);
        out << buf;
    }
    return out.str();
}

FoldPlan stratified_kfold(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("fold count must be >= 2");
    std::vector<std::vector<int>> by_class(dataset.num_classes());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset.examples()[i].label.argmax()].push_back(static_cast<int>(i));
    for (int c = 0; c < dataset.num_classes(); ++c)
        if (static_cast<int>(by_class[c].size()) < k)
            throw UsageError("class '" + dataset.class_names()[c] + "' has " +
                             std::to_string(by_class[c].size()) + " examples, needs >= " +
                             std::to_string(k) + " for " + std::to_string(k) + " folds");

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignment.assign(dataset.size(), 0);
    for (int c = 0; c < dataset.num_classes(); ++c) {
        std::vector<int>& idx = by_class[c];
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.below(i)]);
        for (std::size_t pos = 0; pos < idx.size(); ++pos)
            plan.assignment[idx[pos]] = static_cast<int>(pos % k);
    }
    return plan;
}

MetricsReport aggregate_folds(
    const std::vector<std::array<std::optional<double>, kMetricCount>>& per_fold) {
    MetricsReport report;
    report.k = static_cast<int>(per_fold.size());
    report.per_fold = per_fold;
    for (int mi = 0; mi < kMetricCount; ++mi) {
        double sum = 0.0;
        int count = 0;
        for (int f = 0; f < report.k; ++f) {
            if (per_fold[f][mi]) {
                sum += *per_fold[f][mi];
                ++count;
            } else {
                report.undefined_notes.push_back(std::string(kMetricKeys[mi]) + " undefined in fold " +
                                                 std::to_string(f) + ", excluded from aggregation");
            }
        }
        if (count == 0) continue;
        const double mean = sum / count;
        double var = 0.0;
        for (int f = 0; f < report.k; ++f)
            if (per_fold[f][mi]) var += (*per_fold[f][mi] - mean) * (*per_fold[f][mi] - mean);
        report.mean[mi] = mean;
        report.stddev[mi] = std::sqrt(var / count);  // population std over folds
    }
    return report;
}

CvResult run_cv(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& cfg,
                int k, int threads) {
    spec.validate();
    cfg.validate();
    if (dataset.num_classes() != 2)
        throw UsageError("cross-validation metrics need a binary dataset");
    const FoldPlan plan = stratified_kfold(dataset, k, derive_seed(cfg.seed, kSeedFoldPlan));

    std::vector<std::array<std::optional<double>, kMetricCount>> per_fold(k);
    std::vector<std::vector<ScoredPrediction>> fold_preds(k);

    auto run_fold = [&](int f) {
        std::vector<int> train_idx, test_idx;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            (plan.assignment[i] == f ? test_idx : train_idx).push_back(static_cast<int>(i));

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, kSeedFoldTrain, static_cast<std::uint64_t>(f));
        const TrainResult trained = train_subset(dataset, train_idx, spec, fold_cfg);

        std::vector<ScoredPrediction>& preds = fold_preds[f];
        preds.reserve(test_idx.size());
        for (int idx : test_idx) {
            const Example& ex = dataset.examples()[idx];
            const ForwardResult fr = forward(trained.params, ex.image);
            preds.push_back({ex.id, fr.probs[1], fr.probs.argmax(), ex.label.argmax()});
        }

        const MetricSet ms = metrics(confusion(preds, 1));
        std::array<std::optional<double>, kMetricCount>& row = per_fold[f];
        row[0] = ms.acc;
        row[1] = ms.prec;
        row[2] = ms.npv;
        row[3] = ms.sens;
        row[4] = ms.spec;
        row[5] = ms.f1;
        try {
            row[6] = auroc(preds);
        } catch (const UndefinedMetricError&) {
            row[6] = std::nullopt;
        }
        row[7] = ms.kappa;
    };

    const int workers = std::max(1, std::min(threads, k));
    if (workers == 1) {
        for (int f = 0; f < k; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                try {
                    for (int f = w; f < k; f += workers) run_fold(f);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (std::thread& th : pool) th.join();
        for (const std::exception_ptr& err : errors)
            if (err) std::rethrow_exception(err);
    }

    CvResult result;
    result.report = aggregate_folds(per_fold);
    for (int f = 0; f < k; ++f)
        result.pooled.insert(result.pooled.end(), fold_preds[f].begin(), fold_preds[f].end());
    return result;
}

namespace {

std::string mean_std_cell(const std::optional<double>& mean,
                          const std::optional<double>& stddev) {
    if (!mean) return "--";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f (%.2f)", *mean * 100.0,
                  stddev ? *stddev * 100.0 : 0.0);
    return buf;
}

}  // namespace

std::string render_report(const MetricsReport& report, const std::string& model_name) {
    constexpr int kCell = 15;
    std::ostringstream out;
    out << "Results (%) over " << report.k << " folds, mean (std)\n";
    std::string header = "Model       ";
    if (model_name.size() + 2 > header.size()) header = model_name + "  ";
    out << header;
    for (const char* col : kMetricColumns) {
        std::string cell = col;
        cell.resize(kCell, ' ');
        out << cell;
    }
    out << "\n";
    std::string name = model_name;
    name.resize(header.size(), ' ');
    out << name;
    for (int mi = 0; mi < kMetricCount; ++mi) {
        std::string cell = mean_std_cell(report.mean[mi], report.stddev[mi]);
        cell.resize(kCell, ' ');
        out << cell;
    }
    out << "\n";
    for (const std::string& note : report.undefined_notes) out << "note: " << note << "\n";
    return out.str();
}

std::string folds_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "fold";
    for (const char* key : kMetricKeys) out << "," << key;
    out << "\n";
    char buf[48];
    for (int f = 0; f < report.k; ++f) {
        out << f;
        for (int mi = 0; mi < kMetricCount; ++mi) {
            out << ",";
            if (report.per_fold[f][mi]) {
                std::snprintf(buf, sizeof(buf), "%.12g", *report.per_fold[f][mi]);
                out << buf;
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace cardiomix
