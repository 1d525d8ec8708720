#pragma once

#include "spl/losses.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace spl {

struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<std::int64_t> counts;  // row-major, rows = ground truth, cols = prediction
    std::int64_t total = 0;

    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * static_cast<std::size_t>(n_classes) +
                      static_cast<std::size_t>(pred)];
    }
    std::int64_t column_sum(int pred) const;
    std::int64_t trace() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> gts, int n_classes);

// 1 - trace / total. Throws InputError on an empty matrix.
double error_rate(const ConfusionMatrix& cm);

// Class j is collapsed when its column share of predictions falls below eps / n,
// i.e. it receives less than eps times its uniform share.
inline constexpr double kCollapseEps = 0.20;
std::set<int> collapsed_classes(const ConfusionMatrix& cm, double eps = kCollapseEps);

struct PseudoLabelStats {
    double coverage = 0.0;
    std::optional<double> purity;  // empty when nothing was accepted
    double mean_weight = 0.0;

    bool operator==(const PseudoLabelStats&) const = default;
};

PseudoLabelStats pseudo_label_stats(std::span<const std::vector<double>> probs_weak, std::span<const int> gts,
                                    const LossConfig& cfg);
// Same statistic from already computed pseudo-labels.
PseudoLabelStats pseudo_label_stats(std::span<const PseudoLabel> labels, std::span<const int> gts);

enum class Alternative { greater, less, two_sided };

std::string to_string(Alternative a);

struct WilcoxonOutcome {
    int n_effective = 0;
    double statistic = 0.0;  // W+, sum of ranks of positive differences
    double p_value = 1.0;
    Alternative alternative = Alternative::greater;
    int zero_count = 0;  // dropped zero differences
    int tie_count = 0;   // |d| values sharing a rank with another
    bool exact = true;
    bool degenerate = false;  // all differences zero

    bool operator==(const WilcoxonOutcome&) const = default;
};

inline constexpr int kExactWilcoxonLimit = 20;

// Signed-rank test with mid-ranks. Exact null distribution for
// n_effective <= 20, tie-corrected normal approximation above that.
WilcoxonOutcome wilcoxon_one_sided(std::span<const double> diffs, Alternative alternative = Alternative::greater);

// Average ranks (1-based) of |x|, ties share their mean rank.
std::vector<double> mid_ranks(std::span<const double> values);

struct GainSummary {
    std::vector<double> gains;
    double mean = 0.0;
    std::optional<double> std;  // sample std; empty for a single fold
    double max = 0.0;
    double min = 0.0;
    double range = 0.0;

    bool operator==(const GainSummary&) const = default;
};

// gain_i = baseline_i - method_i (lower error is better).
GainSummary paired_gain(std::span<const double> baseline, std::span<const double> method);

}  // namespace spl
