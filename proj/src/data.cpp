#include "spl/data.hpp"

#include "spl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace spl {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

std::vector<int> Dataset::class_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

Dataset gen_two_moons(int n, double noise, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw InputError("two moons needs an even n >= 2");
    if (!(noise >= 0.0)) throw InputError("noise must be >= 0");
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int half = n / 2;
    Dataset ds;
    ds.name = "two_moons";
    ds.n_classes = 2;
    ds.points.resize(n, 2);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < half; ++i) {
        const double t = half == 1 ? 0.0 : std::numbers::pi * i / (half - 1);
        ds.points(i, 0) = std::cos(t);
        ds.points(i, 1) = std::sin(t);
        ds.labels[static_cast<std::size_t>(i)] = 0;
        ds.points(half + i, 0) = 1.0 - std::cos(t);
        ds.points(half + i, 1) = 0.5 - std::sin(t);
        ds.labels[static_cast<std::size_t>(half + i)] = 1;
    }
    if (noise > 0.0)
        for (Eigen::Index r = 0; r < ds.points.rows(); ++r)
            for (Eigen::Index c = 0; c < 2; ++c) ds.points(r, c) += noise * gauss(rng);
    return ds;
}

Matrix blob_centers(int n_classes, int dim) {
    if (n_classes < 2) throw InputError("blobs need at least two classes");
    if (dim < 2) throw InputError("blobs need at least two dimensions");
    Matrix c = Matrix::Zero(n_classes, dim);
    for (int k = 0; k < n_classes; ++k) {
        const double a = 2.0 * std::numbers::pi * k / n_classes;
        c(k, 0) = std::cos(a);
        c(k, 1) = std::sin(a);
    }
    return c;
}

Dataset gen_blobs(int n, int n_classes, double spread, std::uint64_t seed, int dim) {
    if (n < 1) throw InputError("blobs need n >= 1");
    if (!(spread >= 0.0)) throw InputError("spread must be >= 0");
    const Matrix centers = blob_centers(n_classes, dim);
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset ds;
    ds.name = "blobs";
    ds.n_classes = n_classes;
    ds.points.resize(n, dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % n_classes;
        ds.labels[static_cast<std::size_t>(i)] = k;
        for (int c = 0; c < dim; ++c) ds.points(i, c) = centers(k, c) + spread * gauss(rng);
    }
    return ds;
}

// --- augmentation -----------------------------------------------------------

AugmentParams AugmentParams::for_dataset(const Dataset& ds, const AugmentSettings& s) {
    AugmentParams p;
    p.centroid = ds.points.colwise().mean().transpose();
    double scale = 0.0;
    if (ds.points.rows() > 0)
        scale = std::sqrt((ds.points.rowwise() - p.centroid.transpose()).rowwise().squaredNorm().mean());
    p.weak_std = s.weak_fraction * scale;
    p.strong_std = s.strong_fraction * scale;
    p.max_angle_rad = s.max_angle_deg * std::numbers::pi / 180.0;
    p.scale_jitter = s.scale_jitter;
    return p;
}

Vector augment(const Vector& x, Strength strength, const AugmentParams& params, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector out = x;
    double jitter = params.weak_std;
    if (strength == Strength::strong) {
        jitter = params.strong_std;
        std::uniform_real_distribution<double> angle(-params.max_angle_rad, params.max_angle_rad);
        std::uniform_real_distribution<double> scale(1.0 - params.scale_jitter, 1.0 + params.scale_jitter);
        const double a = params.max_angle_rad > 0.0 ? angle(rng) : 0.0;
        const double s = params.scale_jitter > 0.0 ? scale(rng) : 1.0;
        Vector c = params.centroid.size() == x.size() ? params.centroid : Vector::Zero(x.size());
        Vector d = x - c;
        if (d.size() >= 2) {
            const double u = d(0);
            const double v = d(1);
            d(0) = std::cos(a) * u - std::sin(a) * v;
            d(1) = std::sin(a) * u + std::cos(a) * v;
        }
        out = c + s * d;
    }
    if (jitter > 0.0)
        for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += jitter * gauss(rng);
    return out;
}

// --- folds ------------------------------------------------------------------

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::balanced: return "balanced";
        case Protocol::random: return "random";
        case Protocol::imbalanced: return "imbalanced";
    }
    return "?";
}

Protocol parse_protocol(const std::string& name) {
    if (name == "balanced") return Protocol::balanced;
    if (name == "random") return Protocol::random;
    if (name == "imbalanced") return Protocol::imbalanced;
    throw InputError("unknown fold protocol '" + name + "'");
}

namespace {

// First `count` entries of a Fisher-Yates shuffle. Growing `count` only extends
// the prefix, which gives nested label sets for free.
template <typename T>
void partial_shuffle(std::vector<T>& v, std::size_t count, std::mt19937_64& rng) {
    count = std::min(count, v.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
        std::swap(v[i], v[pick(rng)]);
    }
}

void check_fraction(double test_fraction) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InputError("test fraction must lie in [0, 1)");
}

FoldSpec finish_fold(const Split& split, std::vector<int> labeled) {
    FoldSpec f;
    std::sort(labeled.begin(), labeled.end());
    f.labeled = std::move(labeled);
    f.test = split.test;
    std::set_difference(split.train.begin(), split.train.end(), f.labeled.begin(), f.labeled.end(),
                        std::back_inserter(f.unlabeled));
    return f;
}

}  // namespace

Split split_train_test(std::size_t n, double test_fraction) {
    check_fraction(test_fraction);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    auto rng = make_rng(kTestSplitSeed, 0);
    partial_shuffle(idx, n_test, rng);
    Split s;
    s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

FoldSpec sample_fold_balanced(const Dataset& ds, int per_class, std::uint64_t fold_seed, double test_fraction) {
    return sample_fold_balanced(ds, split_train_test(ds.size(), test_fraction), per_class, fold_seed,
                                test_fraction);
}

FoldSpec sample_fold_balanced(const Dataset& ds, const Split& split, int per_class, std::uint64_t fold_seed,
                              double test_fraction) {
    check_fraction(test_fraction);
    if (per_class < 0) throw InputError("per_class must be >= 0");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (int i : split.train) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    auto rng = make_rng(fold_seed, 1);
    std::vector<int> labeled;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        auto& members = by_class[k];
        if (members.size() < static_cast<std::size_t>(per_class))
            throw InputError("class " + std::to_string(k) + " has " + std::to_string(members.size()) +
                             " training examples, fewer than per_class=" + std::to_string(per_class));
        partial_shuffle(members, static_cast<std::size_t>(per_class), rng);
        labeled.insert(labeled.end(), members.begin(), members.begin() + per_class);
    }
    FoldSpec f = finish_fold(split, std::move(labeled));
    f.protocol = Protocol::balanced;
    f.seed = fold_seed;
    f.meta.dataset = ds.name;
    f.meta.test_fraction = test_fraction;
    f.meta.per_class = per_class;
    f.meta.n_labels = static_cast<int>(f.labeled.size());
    f.meta.base_protocol = Protocol::balanced;
    return f;
}

FoldSpec sample_fold_random(const Dataset& ds, int n_labels, std::uint64_t fold_seed, double test_fraction) {
    return sample_fold_random(ds, split_train_test(ds.size(), test_fraction), n_labels, fold_seed, test_fraction);
}

FoldSpec sample_fold_random(const Dataset& ds, const Split& split, int n_labels, std::uint64_t fold_seed,
                            double test_fraction) {
    check_fraction(test_fraction);
    if (n_labels < 0 || static_cast<std::size_t>(n_labels) > split.train.size())
        throw InputError("n_labels must lie in [0, training size]");
    std::vector<int> pool = split.train;
    auto rng = make_rng(fold_seed, 2);
    partial_shuffle(pool, static_cast<std::size_t>(n_labels), rng);
    pool.resize(static_cast<std::size_t>(n_labels));
    FoldSpec f = finish_fold(split, std::move(pool));
    f.protocol = Protocol::random;
    f.seed = fold_seed;
    f.meta.dataset = ds.name;
    f.meta.test_fraction = test_fraction;
    f.meta.n_labels = n_labels;
    f.meta.base_protocol = Protocol::random;
    return f;
}

FoldSpec apply_imbalance(const FoldSpec& fold, const Dataset& ds, std::uint64_t seed, double keep_fraction,
                         std::optional<int> target_class) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InputError("keep_fraction must lie in (0, 1]");
    auto rng = make_rng(seed, 3);

    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (int i : fold.unlabeled) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    int target;
    if (target_class) {
        target = *target_class;
        if (target < 0 || target >= ds.n_classes) throw InputError("imbalance class out of range");
    } else {
        std::vector<int> present;
        for (int k = 0; k < ds.n_classes; ++k)
            if (!by_class[static_cast<std::size_t>(k)].empty()) present.push_back(k);
        if (present.empty()) throw InputError("unlabeled set is empty");
        std::uniform_int_distribution<std::size_t> pick(0, present.size() - 1);
        target = present[pick(rng)];
    }
    auto& members = by_class[static_cast<std::size_t>(target)];
    if (members.empty()) throw InputError("class " + std::to_string(target) + " is absent from the unlabeled set");

    // The small slack keeps e.g. (1 - 0.6) * 100 from rounding up to 41.
    const double raw = (1.0 - keep_fraction) * static_cast<double>(members.size());
    const auto n_drop = static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9)));
    partial_shuffle(members, n_drop, rng);
    std::vector<int> dropped(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_drop));
    std::sort(dropped.begin(), dropped.end());

    FoldSpec out = fold;
    out.unlabeled.clear();
    std::set_difference(fold.unlabeled.begin(), fold.unlabeled.end(), dropped.begin(), dropped.end(),
                        std::back_inserter(out.unlabeled));
    out.protocol = Protocol::imbalanced;
    out.meta.imbalance_class = target;
    out.meta.keep_fraction = keep_fraction;
    out.meta.imbalance_seed = seed;
    return out;
}

double normalized_freq_deviation(const std::vector<double>& frequencies) {
    if (frequencies.empty()) throw InputError("no class frequencies");
    const double uniform = 1.0 / static_cast<double>(frequencies.size());
    double ss = 0.0;
    for (double f : frequencies) ss += (f - uniform) * (f - uniform);
    return std::sqrt(ss / static_cast<double>(frequencies.size())) / uniform;
}

double class_freq_deviation(const FoldSpec& fold, const Dataset& ds) {
    if (fold.labeled.empty()) throw InputError("class_freq_deviation: labeled set is empty");
    std::vector<double> freq(static_cast<std::size_t>(ds.n_classes), 0.0);
    for (int i : fold.labeled) freq[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] += 1.0;
    for (auto& f : freq) f /= static_cast<double>(fold.labeled.size());
    return normalized_freq_deviation(freq);
}

void check_partition(const FoldSpec& fold, std::size_t dataset_size) {
    std::vector<char> seen(dataset_size, 0);
    auto mark = [&](const std::vector<int>& ids, const char* what) {
        for (int i : ids) {
            if (i < 0 || static_cast<std::size_t>(i) >= dataset_size)
                throw InputError(std::string(what) + " index out of range");
            if (seen[static_cast<std::size_t>(i)]) throw InputError(std::string(what) + " overlaps another set");
            seen[static_cast<std::size_t>(i)] = 1;
        }
    };
    mark(fold.labeled, "labeled");
    mark(fold.unlabeled, "unlabeled");
    mark(fold.test, "test");
}

// --- batches ----------------------------------------------------------------

TrainingView::TrainingView(const Dataset& ds, const FoldSpec& fold) : n_classes_(ds.n_classes) {
    check_partition(fold, ds.size());
    labeled_points_.resize(static_cast<Eigen::Index>(fold.labeled.size()), ds.dim());
    for (std::size_t i = 0; i < fold.labeled.size(); ++i) {
        labeled_points_.row(static_cast<Eigen::Index>(i)) = ds.points.row(fold.labeled[i]);
        labeled_labels_.push_back(ds.labels[static_cast<std::size_t>(fold.labeled[i])]);
    }
    labeled_ids_ = fold.labeled;
    unlabeled_points_.resize(static_cast<Eigen::Index>(fold.unlabeled.size()), ds.dim());
    for (std::size_t i = 0; i < fold.unlabeled.size(); ++i)
        unlabeled_points_.row(static_cast<Eigen::Index>(i)) = ds.points.row(fold.unlabeled[i]);
    unlabeled_ids_ = fold.unlabeled;
}

ViewPair Batch::view(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    return {weak.row(r).transpose(), strong.row(r).transpose(), unlabeled_ids.at(i)};
}

BatchIterator::BatchIterator(const TrainingView& view, int batch_labeled, int ratio, std::uint64_t train_seed,
                             AugmentParams augment, bool draw_unlabeled)
    : view_(&view),
      augment_(std::move(augment)),
      draw_unlabeled_(draw_unlabeled),
      labeled_order_rng_(make_rng(train_seed, 11)),
      labeled_aug_rng_(make_rng(train_seed, 12)),
      unlabeled_order_rng_(make_rng(train_seed, 13)),
      unlabeled_aug_rng_(make_rng(train_seed, 14)) {
    if (batch_labeled < 1) throw InputError("labeled batch size must be >= 1");
    if (ratio < 1) throw InputError("unlabeled ratio must be >= 1");
    if (view.labeled_ids().empty()) throw InputError("labeled set is empty");
    batch_labeled_ = static_cast<std::size_t>(batch_labeled);
    batch_unlabeled_ = static_cast<std::size_t>(ratio) * batch_labeled_;
    labeled_order_.resize(view.labeled_ids().size());
    std::iota(labeled_order_.begin(), labeled_order_.end(), std::size_t{0});
    labeled_cursor_ = labeled_order_.size();
    unlabeled_order_.resize(view.unlabeled_ids().size());
    std::iota(unlabeled_order_.begin(), unlabeled_order_.end(), std::size_t{0});
    unlabeled_cursor_ = unlabeled_order_.size();
}

std::size_t BatchIterator::unlabeled_batch_size() const {
    return draw_unlabeled_ && !view_->unlabeled_ids().empty() ? batch_unlabeled_ : 0;
}

std::vector<std::size_t> BatchIterator::take(std::vector<std::size_t>& order, std::size_t& cursor,
                                             std::size_t count, std::mt19937_64& rng) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        if (cursor == order.size()) {
            std::sort(order.begin(), order.end());
            partial_shuffle(order, order.size(), rng);
            cursor = 0;
        }
        out.push_back(order[cursor++]);
    }
    return out;
}

Batch BatchIterator::next() {
    Batch b;
    const auto dim = view_->labeled_points().cols();
    const auto li = take(labeled_order_, labeled_cursor_, batch_labeled_, labeled_order_rng_);
    b.labeled.resize(static_cast<Eigen::Index>(li.size()), dim);
    for (std::size_t i = 0; i < li.size(); ++i) {
        const Vector x = view_->labeled_points().row(static_cast<Eigen::Index>(li[i])).transpose();
        b.labeled.row(static_cast<Eigen::Index>(i)) = augment(x, Strength::weak, augment_, labeled_aug_rng_).transpose();
        b.labels.push_back(view_->labeled_labels()[li[i]]);
        b.labeled_ids.push_back(view_->labeled_ids()[li[i]]);
    }

    const std::size_t nu = unlabeled_batch_size();
    b.weak.resize(static_cast<Eigen::Index>(nu), dim);
    b.strong.resize(static_cast<Eigen::Index>(nu), dim);
    if (nu == 0) return b;
    const auto ui = take(unlabeled_order_, unlabeled_cursor_, nu, unlabeled_order_rng_);
    for (std::size_t i = 0; i < ui.size(); ++i) {
        const Vector x = view_->unlabeled_points().row(static_cast<Eigen::Index>(ui[i])).transpose();
        const auto r = static_cast<Eigen::Index>(i);
        b.weak.row(r) = augment(x, Strength::weak, augment_, unlabeled_aug_rng_).transpose();
        b.strong.row(r) = augment(x, Strength::strong, augment_, unlabeled_aug_rng_).transpose();
        b.unlabeled_ids.push_back(view_->unlabeled_ids()[ui[i]]);
    }
    return b;
}

}  // namespace spl
