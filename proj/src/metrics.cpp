#include "resmamba/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "resmamba/checkpoint.hpp"

namespace rmb {

std::uint64_t ConfusionMatrix::total() const
{
    std::uint64_t sum = 0;
    for (const auto& row : counts) {
        for (auto v : row) sum += v;
    }
    return sum;
}

std::uint64_t ConfusionMatrix::trace() const
{
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) sum += counts[i][i];
    return sum;
}

std::uint64_t ConfusionMatrix::false_positives(std::size_t c) const
{
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i != c) sum += counts[i][c];
    }
    return sum;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t c) const
{
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j < counts[c].size(); ++j) {
        if (j != c) sum += counts[c][j];
    }
    return sum;
}

std::uint64_t ConfusionMatrix::true_negatives(std::size_t c) const
{
    return total() - true_positives(c) - false_positives(c) - false_negatives(c);
}

void ConfusionMatrix::validate() const
{
    if (class_names.empty()) throw std::invalid_argument("confusion matrix has no classes");
    if (counts.size() != class_names.size()) {
        throw std::invalid_argument("confusion matrix has " + std::to_string(counts.size()) + " rows for " +
                                    std::to_string(class_names.size()) + " classes");
    }
    for (const auto& row : counts) {
        if (row.size() != class_names.size()) throw std::invalid_argument("confusion matrix is not square");
    }
}

ConfusionMatrix confusion(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted_labels,
                          std::vector<std::string> class_names)
{
    const std::size_t c = class_names.size();
    if (c == 0) throw std::invalid_argument("confusion: need at least one class");
    if (true_labels.size() != predicted_labels.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(true_labels.size()) + " true labels vs " +
                                    std::to_string(predicted_labels.size()) + " predictions");
    }
    ConfusionMatrix cm{std::move(class_names), std::vector<std::vector<std::uint64_t>>(c, std::vector<std::uint64_t>(c))};
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        if (true_labels[i] >= c || predicted_labels[i] >= c) {
            throw std::invalid_argument("confusion: label out of range [0, " + std::to_string(c) + ") at sample " +
                                        std::to_string(i));
        }
        ++cm.counts[true_labels[i]][predicted_labels[i]];
    }
    return cm;
}

ConfusionMatrix confusion(std::span<const std::size_t> true_labels, std::span<const std::size_t> predicted_labels,
                          std::size_t num_classes)
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < num_classes; ++i) names.push_back("class" + std::to_string(i));
    return confusion(true_labels, predicted_labels, std::move(names));
}

const ClassMetrics& ClassReport::at(const std::string& name) const
{
    for (const auto& c : classes) {
        if (c.name == name) return c;
    }
    throw std::out_of_range("no class named '" + name + "' in report");
}

ClassReport kpis(const ConfusionMatrix& cm)
{
    cm.validate();
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("kpis: confusion matrix is empty");

    ClassReport report;
    report.accuracy = {cm.trace(), total};
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
        const auto tp = cm.true_positives(c), fp = cm.false_positives(c), fn = cm.false_negatives(c);
        ClassMetrics m;
        m.name = cm.class_names[c];
        auto fill = [&](Ratio& r, bool& undefined, std::uint64_t num, std::uint64_t den, const char* what) {
            if (den == 0) {
                undefined = true;
                r = {0, 0};
                report.warnings.push_back(m.name + ": " + what + " undefined (zero denominator), reported as 0");
            } else {
                r = {num, den};
            }
        };
        fill(m.precision, m.precision_undefined, tp, tp + fp, "precision");
        fill(m.recall, m.recall_undefined, tp, tp + fn, "recall");
        fill(m.f1, m.f1_undefined, 2 * tp, 2 * tp + fp + fn, "f1");
        report.classes.push_back(std::move(m));
    }
    return report;
}

ConfusionMatrix binary_collapse(const ConfusionMatrix& cm, std::size_t positive_class)
{
    cm.validate();
    const std::size_t c = cm.num_classes();
    if (c < 2) throw std::invalid_argument("binary_collapse: need at least two classes");
    if (positive_class >= c) {
        throw std::invalid_argument("binary_collapse: positive class " + std::to_string(positive_class) +
                                    " out of range");
    }
    if (c == 2) return cm;

    const std::size_t pos = positive_class == 0 ? 0 : 1;
    const std::size_t neg = 1 - pos;
    ConfusionMatrix out;
    out.class_names.resize(2);
    out.class_names[pos] = cm.class_names[positive_class];
    out.class_names[neg] = "rest";
    out.counts.assign(2, std::vector<std::uint64_t>(2, 0));
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t bi = i == positive_class ? pos : neg;
            const std::size_t bj = j == positive_class ? pos : neg;
            out.counts[bi][bj] += cm.counts[i][j];
        }
    }
    return out;
}

double roc_auc(std::span<const double> positive, std::span<const double> negative)
{
    if (positive.empty() || negative.empty()) throw std::invalid_argument("roc_auc: both score sets must be non-empty");
    // Mann-Whitney U via a merged sort with average ranks for ties.
    std::vector<std::pair<double, bool>> all;
    all.reserve(positive.size() + negative.size());
    for (double s : positive) all.emplace_back(s, true);
    for (double s : negative) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::size_t pos_in_group = 0;
        while (j < all.size() && all[j].first == all[i].first) pos_in_group += all[j++].second;
        const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += average_rank * static_cast<double>(pos_in_group);
        i = j;
    }
    const auto np = static_cast<double>(positive.size()), nn = static_cast<double>(negative.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::string format_percent(const Ratio& r, int decimals)
{
    if (decimals < 0 || decimals > 12) throw std::invalid_argument("format_percent: decimals must be in [0, 12]");
    if (r.den == 0) return "0";
    std::uint64_t scale = 100;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    // num * scale stays far below 2^128 and is computed exactly.
    const unsigned __int128 scaled = static_cast<unsigned __int128>(r.num) * scale / r.den;
    std::uint64_t unit = 1;
    for (int i = 0; i < decimals; ++i) unit *= 10;
    const auto whole = static_cast<std::uint64_t>(scaled / unit);
    auto frac = static_cast<std::uint64_t>(scaled % unit);
    std::string text = std::to_string(whole);
    if (decimals > 0) {
        std::string digits = std::to_string(frac);
        digits.insert(0, static_cast<std::size_t>(decimals) - digits.size(), '0');
        while (!digits.empty() && digits.back() == '0') digits.pop_back();
        if (!digits.empty()) text += "." + digits;
    }
    return text;
}

std::string format_report_table(const ClassReport& report)
{
    std::size_t name_width = 8;
    for (const auto& c : report.classes) name_width = std::max(name_width, c.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width)) << "class" << std::right << std::setw(12)
       << "precision%" << std::setw(10) << "recall%" << std::setw(8) << "f1%" << '\n';
    for (const auto& c : report.classes) {
        os << std::left << std::setw(static_cast<int>(name_width)) << c.name << std::right << std::setw(12)
           << format_percent(c.precision) << std::setw(10) << format_percent(c.recall) << std::setw(8)
           << format_percent(c.f1) << '\n';
    }
    os << "accuracy: " << format_percent(report.accuracy) << "% (" << report.accuracy.num << '/' << report.accuracy.den
       << ")\n";
    for (const auto& w : report.warnings) os << "warning: " << w << '\n';
    return os.str();
}

std::string format_report_csv(const ClassReport& report)
{
    std::ostringstream os;
    os << "class,precision,recall,f1\n";
    for (const auto& c : report.classes) {
        os << c.name << ',' << format_double(c.precision.value()) << ',' << format_double(c.recall.value()) << ','
           << format_double(c.f1.value()) << '\n';
    }
    os << "accuracy," << format_double(report.accuracy.value()) << ",,\n";
    return os.str();
}

std::string format_confusion(const ConfusionMatrix& cm)
{
    cm.validate();
    std::size_t width = 10;
    for (const auto& n : cm.class_names) width = std::max(width, n.size() + 1);
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(width)) << "true\\pred";
    for (const auto& n : cm.class_names) os << std::right << std::setw(static_cast<int>(width)) << n;
    os << '\n';
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
        os << std::left << std::setw(static_cast<int>(width)) << cm.class_names[i];
        for (auto v : cm.counts[i]) os << std::right << std::setw(static_cast<int>(width)) << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace rmb
