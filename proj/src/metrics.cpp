#include "spl/metrics.hpp"

#include "spl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spl {

std::int64_t ConfusionMatrix::column_sum(int pred) const {
    std::int64_t s = 0;
    for (int t = 0; t < n_classes; ++t) s += at(t, pred);
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (int k = 0; k < n_classes; ++k) s += at(k, k);
    return s;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> gts, int n_classes) {
    if (n_classes < 1) throw InputError("confusion: need at least one class");
    if (preds.size() != gts.size()) throw InputError("confusion: predictions and labels differ in length");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i];
        const int g = gts[i];
        if (p < 0 || p >= n_classes || g < 0 || g >= n_classes)
            throw InputError("confusion: class index out of range at position " + std::to_string(i));
        ++cm.counts[static_cast<std::size_t>(g) * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(p)];
        ++cm.total;
    }
    return cm;
}

double error_rate(const ConfusionMatrix& cm) {
    if (cm.total <= 0) throw InputError("error_rate: empty confusion matrix");
    return 1.0 - static_cast<double>(cm.trace()) / static_cast<double>(cm.total);
}

std::set<int> collapsed_classes(const ConfusionMatrix& cm, double eps) {
    if (!(eps >= 0.0 && eps < 1.0)) throw InputError("collapse eps must lie in [0, 1)");
    std::set<int> out;
    if (cm.total <= 0) return out;
    const double threshold = eps / static_cast<double>(cm.n_classes);
    for (int j = 0; j < cm.n_classes; ++j)
        if (static_cast<double>(cm.column_sum(j)) / static_cast<double>(cm.total) < threshold) out.insert(j);
    return out;
}

PseudoLabelStats pseudo_label_stats(std::span<const PseudoLabel> labels, std::span<const int> gts) {
    if (labels.empty()) throw InputError("pseudo_label_stats: no unlabeled items");
    if (labels.size() != gts.size()) throw InputError("pseudo_label_stats: lists not aligned");
    std::size_t accepted = 0;
    std::size_t correct = 0;
    double weight = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        weight += labels[i].weight;
        if (labels[i].weight > 0.0) {
            ++accepted;
            if (labels[i].cls == gts[i]) ++correct;
        }
    }
    PseudoLabelStats s;
    s.coverage = static_cast<double>(accepted) / static_cast<double>(labels.size());
    if (accepted > 0) s.purity = static_cast<double>(correct) / static_cast<double>(accepted);
    s.mean_weight = weight / static_cast<double>(labels.size());
    return s;
}

PseudoLabelStats pseudo_label_stats(std::span<const std::vector<double>> probs_weak, std::span<const int> gts,
                                    const LossConfig& cfg) {
    std::vector<PseudoLabel> labels;
    labels.reserve(probs_weak.size());
    for (const auto& p : probs_weak) labels.push_back(pseudo_label(p, cfg));
    return pseudo_label_stats(labels, gts);
}

std::string to_string(Alternative a) {
    switch (a) {
        case Alternative::greater: return "greater";
        case Alternative::less: return "less";
        case Alternative::two_sided: return "two_sided";
    }
    return "?";
}

std::vector<double> mid_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(values[a]) < std::abs(values[b]); });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(values[order[j + 1]]) == std::abs(values[order[i]])) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

WilcoxonOutcome wilcoxon_one_sided(std::span<const double> diffs, Alternative alternative) {
    if (diffs.empty()) throw InputError("wilcoxon: need at least one difference");
    WilcoxonOutcome out;
    out.alternative = alternative;

    std::vector<double> nz;
    for (double d : diffs) {
        if (!std::isfinite(d)) throw InputError("wilcoxon: non-finite difference");
        if (d == 0.0)
            ++out.zero_count;
        else
            nz.push_back(d);
    }
    out.n_effective = static_cast<int>(nz.size());
    if (nz.empty()) {
        out.degenerate = true;
        out.p_value = 1.0;
        return out;
    }

    const auto ranks = mid_ranks(nz);
    {
        std::vector<double> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            const bool left = i > 0 && sorted[i - 1] == sorted[i];
            const bool right = i + 1 < sorted.size() && sorted[i + 1] == sorted[i];
            if (left || right) ++out.tie_count;
        }
    }
    for (std::size_t i = 0; i < nz.size(); ++i)
        if (nz[i] > 0.0) out.statistic += ranks[i];

    const int n = out.n_effective;
    double p_greater;
    double p_less;
    if (n <= kExactWilcoxonLimit) {
        out.exact = true;
        // Mid-ranks are multiples of 1/2, so doubled ranks are integers and the
        // null distribution of 2 W+ is a subset-sum count.
        std::vector<int> twice(ranks.size());
        int max_sum = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            twice[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
            max_sum += twice[i];
        }
        std::vector<std::uint64_t> count(static_cast<std::size_t>(max_sum) + 1, 0);
        count[0] = 1;
        int reach = 0;
        for (int r : twice) {
            for (int s = reach; s >= 0; --s)
                if (count[static_cast<std::size_t>(s)] != 0)
                    count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
            reach += r;
        }
        const auto observed = static_cast<int>(std::lround(2.0 * out.statistic));
        std::uint64_t ge = 0;
        std::uint64_t le = 0;
        for (int s = 0; s <= max_sum; ++s) {
            if (s >= observed) ge += count[static_cast<std::size_t>(s)];
            if (s <= observed) le += count[static_cast<std::size_t>(s)];
        }
        const double total = std::ldexp(1.0, n);
        p_greater = static_cast<double>(ge) / total;
        p_less = static_cast<double>(le) / total;
    } else {
        out.exact = false;
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        std::vector<double> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        const double z = (out.statistic - mean) / std::sqrt(var);
        p_greater = 0.5 * std::erfc(z / std::sqrt(2.0));
        p_less = 0.5 * std::erfc(-z / std::sqrt(2.0));
    }

    switch (alternative) {
        case Alternative::greater: out.p_value = p_greater; break;
        case Alternative::less: out.p_value = p_less; break;
        case Alternative::two_sided: out.p_value = std::min(1.0, 2.0 * std::min(p_greater, p_less)); break;
    }
    return out;
}

GainSummary paired_gain(std::span<const double> baseline, std::span<const double> method) {
    if (baseline.size() != method.size()) throw InputError("paired_gain: arrays differ in length");
    if (baseline.empty()) throw InputError("paired_gain: no folds");
    GainSummary g;
    for (std::size_t i = 0; i < baseline.size(); ++i) g.gains.push_back(baseline[i] - method[i]);
    const double k = static_cast<double>(g.gains.size());
    g.mean = std::accumulate(g.gains.begin(), g.gains.end(), 0.0) / k;
    if (g.gains.size() > 1) {
        double ss = 0.0;
        for (double x : g.gains) ss += (x - g.mean) * (x - g.mean);
        g.std = std::sqrt(ss / (k - 1.0));
    }
    g.max = *std::max_element(g.gains.begin(), g.gains.end());
    g.min = *std::min_element(g.gains.begin(), g.gains.end());
    g.range = g.max - g.min;
    return g;
}

}  // namespace spl
