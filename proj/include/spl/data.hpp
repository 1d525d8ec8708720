#pragma once

// Synthetic datasets, weak/strong augmentation and the fold protocols.
//
// Ground-truth labels of unlabeled items never leave this module through the
// training path: a TrainingView only carries labeled points with labels and
// unlabeled points without them. Evaluation code reads labels from the
// Dataset directly.

#include "spl/diffcore.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spl {

struct Dataset {
    Matrix points;  // one example per row
    std::vector<int> labels;
    int n_classes = 0;
    std::string name;

    std::size_t size() const { return labels.size(); }
    Eigen::Index dim() const { return points.cols(); }
    std::vector<int> class_counts() const;
};

// Two interleaved half circles, n/2 points each. Throws InputError for odd n.
Dataset gen_two_moons(int n, double noise, std::uint64_t seed);

// Isotropic Gaussian clusters with centers evenly spaced on the unit circle
// (first two coordinates). Extra dimensions, if any, are pure noise.
// Class sizes differ by at most one.
Dataset gen_blobs(int n, int n_classes, double spread, std::uint64_t seed, int dim = 2);

// Centers used by gen_blobs, exposed for nearest-center checks.
Matrix blob_centers(int n_classes, int dim = 2);

// --- augmentation -----------------------------------------------------------

enum class Strength { weak, strong };

struct AugmentSettings {
    double weak_fraction = 0.05;    // weak jitter std, in units of data scale
    double strong_fraction = 0.15;  // strong jitter std, in units of data scale
    double max_angle_deg = 25.0;
    double scale_jitter = 0.2;

    bool operator==(const AugmentSettings&) const = default;
};

struct AugmentParams {
    double weak_std = 0.0;
    double strong_std = 0.0;
    double max_angle_rad = 0.0;
    double scale_jitter = 0.0;
    Vector centroid;

    // Data scale is the RMS distance of the points to their centroid.
    static AugmentParams for_dataset(const Dataset& ds, const AugmentSettings& s);
};

// Weak: x + N(0, weak_std^2). Strong: rotate the first two coordinates about
// the centroid by U[-A, A], scale about the centroid by U[1-r, 1+r], then add
// N(0, strong_std^2).
Vector augment(const Vector& x, Strength strength, const AugmentParams& params, std::mt19937_64& rng);

// --- folds ------------------------------------------------------------------

inline constexpr std::uint64_t kTestSplitSeed = 0x7e57'5eedULL;

struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

// Carves round(test_fraction * n) test indices using kTestSplitSeed. Both lists sorted.
Split split_train_test(std::size_t n, double test_fraction);

enum class Protocol { balanced, random, imbalanced };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

struct FoldMeta {
    std::string dataset;
    double test_fraction = 0.2;
    int per_class = 0;   // balanced
    int n_labels = 0;    // |L|
    Protocol base_protocol = Protocol::balanced;
    // imbalanced only
    std::optional<int> imbalance_class;
    double keep_fraction = 1.0;
    std::uint64_t imbalance_seed = 0;

    bool operator==(const FoldMeta&) const = default;
};

struct FoldSpec {
    Protocol protocol = Protocol::balanced;
    std::uint64_t seed = 0;
    std::vector<int> labeled;    // sorted
    std::vector<int> unlabeled;  // sorted
    std::vector<int> test;       // sorted
    FoldMeta meta;

    bool operator==(const FoldSpec&) const = default;
};

// Exactly per_class labels per class drawn without replacement; the rest of the
// training split is unlabeled. Depends only on (ds, per_class, fold_seed, test_fraction).
FoldSpec sample_fold_balanced(const Dataset& ds, int per_class, std::uint64_t fold_seed, double test_fraction);
FoldSpec sample_fold_balanced(const Dataset& ds, const Split& split, int per_class, std::uint64_t fold_seed,
                              double test_fraction);

// n_labels drawn uniformly from the training split. The labeled set for n is a
// subset of the labeled set for any larger n under the same seed.
FoldSpec sample_fold_random(const Dataset& ds, int n_labels, std::uint64_t fold_seed, double test_fraction);
FoldSpec sample_fold_random(const Dataset& ds, const Split& split, int n_labels, std::uint64_t fold_seed,
                            double test_fraction);

// Drops ceil((1 - keep_fraction) * count) unlabeled items of one class. With no
// target class given, one class present in U is drawn from `seed`.
FoldSpec apply_imbalance(const FoldSpec& fold, const Dataset& ds, std::uint64_t seed, double keep_fraction,
                         std::optional<int> target_class = std::nullopt);

// Population std of labeled class frequencies around 1/K, divided by 1/K.
double class_freq_deviation(const FoldSpec& fold, const Dataset& ds);
double normalized_freq_deviation(const std::vector<double>& frequencies);

// Throws InputError unless L, U, T are pairwise disjoint and in range.
void check_partition(const FoldSpec& fold, std::size_t dataset_size);

// --- batches ----------------------------------------------------------------

// What the training loop may see: labels for L only.
class TrainingView {
public:
    TrainingView(const Dataset& ds, const FoldSpec& fold);

    const Matrix& labeled_points() const { return labeled_points_; }
    const std::vector<int>& labeled_labels() const { return labeled_labels_; }
    const std::vector<int>& labeled_ids() const { return labeled_ids_; }
    const Matrix& unlabeled_points() const { return unlabeled_points_; }
    const std::vector<int>& unlabeled_ids() const { return unlabeled_ids_; }
    int n_classes() const { return n_classes_; }

private:
    Matrix labeled_points_;
    std::vector<int> labeled_labels_;
    std::vector<int> labeled_ids_;
    Matrix unlabeled_points_;
    std::vector<int> unlabeled_ids_;
    int n_classes_;
};

struct ViewPair {
    Vector weak;
    Vector strong;
    int source = 0;
};

struct Batch {
    Matrix labeled;  // weakly augmented
    std::vector<int> labels;
    std::vector<int> labeled_ids;
    Matrix weak;
    Matrix strong;
    std::vector<int> unlabeled_ids;

    std::size_t unlabeled_size() const { return unlabeled_ids.size(); }
    ViewPair view(std::size_t i) const;
};

// Epoch-shuffled draws: every labeled (and unlabeled) index appears once before
// any repeats. Labeled order, labeled augmentation, unlabeled order and
// unlabeled augmentation come from four independent streams seeded by train_seed,
// so turning the unlabeled side off leaves the labeled stream untouched.
class BatchIterator {
public:
    BatchIterator(const TrainingView& view, int batch_labeled, int ratio, std::uint64_t train_seed,
                  AugmentParams augment, bool draw_unlabeled = true);

    Batch next();
    std::size_t unlabeled_batch_size() const;

private:
    std::vector<std::size_t> take(std::vector<std::size_t>& order, std::size_t& cursor, std::size_t count,
                                  std::mt19937_64& rng);

    const TrainingView* view_;
    std::size_t batch_labeled_;
    std::size_t batch_unlabeled_;
    AugmentParams augment_;
    bool draw_unlabeled_;
    std::mt19937_64 labeled_order_rng_;
    std::mt19937_64 labeled_aug_rng_;
    std::mt19937_64 unlabeled_order_rng_;
    std::mt19937_64 unlabeled_aug_rng_;
    std::vector<std::size_t> labeled_order_;
    std::vector<std::size_t> unlabeled_order_;
    std::size_t labeled_cursor_ = 0;
    std::size_t unlabeled_cursor_ = 0;
};

// Deterministic generator for (seed, stream) pairs.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace spl
