#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rmb {

/// Exact non-negative fraction; den == 0 only for the zero-division convention.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 0;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Ratio& other) const = default;
};

/// counts[i][j] = number of samples with true class i predicted as class j.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::uint64_t>> counts;

    std::size_t num_classes() const { return class_names.size(); }
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t true_positives(std::size_t c) const { return counts[c][c]; }
    std::uint64_t false_positives(std::size_t c) const;
    std::uint64_t false_negatives(std::size_t c) const;
    std::uint64_t true_negatives(std::size_t c) const;

    /// Throws unless the matrix is square, non-empty and consistent with the names.
    void validate() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted_labels,
                          std::size_t num_classes);
ConfusionMatrix confusion(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted_labels,
                          std::vector<std::string> class_names);

struct ClassMetrics {
    std::string name;
    Ratio precision;
    Ratio recall;
    Ratio f1;  // 2TP / (2TP + FP + FN), identical to the harmonic mean of P and R
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

struct ClassReport {
    std::vector<ClassMetrics> classes;
    Ratio accuracy;
    std::vector<std::string> warnings;

    const ClassMetrics& at(const std::string& name) const;
};

/// One-vs-rest precision, recall and F1 per class plus overall accuracy.
/// Zero denominators yield 0 and a warning entry.
ClassReport kpis(const ConfusionMatrix& cm);

/// Folds every class except `positive_class` into a single "rest" class.
/// The two classes keep their relative order from the input.
ConfusionMatrix binary_collapse(const ConfusionMatrix& cm, std::size_t positive_class);

/// Area under the ROC curve for a score threshold separating `positive`
/// from `negative` scores (higher means positive); tied scores count half.
double roc_auc(std::span<const double> positive, std::span<const double> negative);

/// Percentage of r truncated toward zero to `decimals` places, computed
/// exactly from the fraction. Trailing zeros after the point are trimmed,
/// so 231/232 gives "99.5" and 59/60 at zero decimals gives "98".
std::string format_percent(const Ratio& r, int decimals = 1);

/// Aligned text table (percent at 0.1 resolution).
std::string format_report_table(const ClassReport& report);
/// CSV: class,precision,recall,f1 rows followed by accuracy,<value>,,
std::string format_report_csv(const ClassReport& report);
/// Confusion matrix as aligned text with true classes on rows.
std::string format_confusion(const ConfusionMatrix& cm);

}  // namespace rmb
