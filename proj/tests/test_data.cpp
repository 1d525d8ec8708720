#include "spl/data.hpp"
#include "spl/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

using namespace spl;

namespace {

bool includes(const std::vector<int>& big, const std::vector<int>& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

std::vector<int> labeled_class_counts(const FoldSpec& f, const Dataset& ds) {
    std::vector<int> c(static_cast<std::size_t>(ds.n_classes), 0);
    for (int i : f.labeled) ++c[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
    return c;
}

std::vector<int> unlabeled_class_counts(const FoldSpec& f, const Dataset& ds) {
    std::vector<int> c(static_cast<std::size_t>(ds.n_classes), 0);
    for (int i : f.unlabeled) ++c[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
    return c;
}

}  // namespace

TEST_CASE("two moons") {
    const Dataset clean = gen_two_moons(4, 0.0, 1);
    for (Eigen::Index r = 0; r < 2; ++r) {
        const double x = clean.points(r, 0);
        const double y = clean.points(r, 1);
        CHECK(x * x + y * y == doctest::Approx(1.0));
        CHECK(y >= -1e-12);
    }
    for (Eigen::Index r = 2; r < 4; ++r) {
        const double x = 1.0 - clean.points(r, 0);
        const double y = 0.5 - clean.points(r, 1);
        CHECK(x * x + y * y == doctest::Approx(1.0));
    }
    const Dataset a = gen_two_moons(2000, 0.1, 5);
    const Dataset b = gen_two_moons(2000, 0.1, 5);
    CHECK(a.points == b.points);
    CHECK(a.class_counts() == std::vector<int>{1000, 1000});
    CHECK_THROWS_AS(gen_two_moons(3, 0.1, 0), InputError);
}

TEST_CASE("blobs") {
    const Dataset flat = gen_blobs(100, 10, 0.0, 3);
    CHECK(flat.class_counts() == std::vector<int>(10, 10));
    const Matrix centers = blob_centers(10);
    for (Eigen::Index r = 0; r < flat.points.rows(); ++r)
        CHECK((flat.points.row(r) - centers.row(flat.labels[static_cast<std::size_t>(r)])).norm() == 0.0);

    const Dataset ds = gen_blobs(2000, 10, 0.05, 4, 5);
    CHECK(ds.dim() == 5);
    const Matrix c5 = blob_centers(10, 5);
    int correct = 0;
    for (Eigen::Index r = 0; r < ds.points.rows(); ++r) {
        Eigen::Index best = 0;
        (c5.rowwise() - ds.points.row(r)).rowwise().squaredNorm().minCoeff(&best);
        if (best == ds.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    CHECK(correct == 2000);
    CHECK(gen_blobs(50, 3, 0.2, 9).points == gen_blobs(50, 3, 0.2, 9).points);
    CHECK_THROWS_AS(gen_blobs(10, 1, 0.1, 0), InputError);
}

TEST_CASE("augmentation") {
    const Dataset ds = gen_blobs(200, 4, 0.2, 1);
    AugmentSettings s;
    s.weak_fraction = 0.0;
    const AugmentParams p = AugmentParams::for_dataset(ds, s);
    std::mt19937_64 rng(1);
    const Vector x = ds.points.row(7).transpose();
    CHECK(augment(x, Strength::weak, p, rng) == x);

    const AugmentParams q = AugmentParams::for_dataset(ds, AugmentSettings{});
    std::mt19937_64 r1(42), r2(42);
    CHECK(augment(x, Strength::strong, q, r1) == augment(x, Strength::strong, q, r2));

    // Rotation and scaling alone keep the angle to the centroid within A.
    AugmentSettings rot;
    rot.strong_fraction = 0.0;
    rot.max_angle_deg = 10.0;
    rot.scale_jitter = 0.2;
    const AugmentParams pr = AugmentParams::for_dataset(ds, rot);
    const Vector d0 = x - pr.centroid;
    for (int i = 0; i < 100; ++i) {
        const Vector d = augment(x, Strength::strong, pr, rng) - pr.centroid;
        const double cosang = d.dot(d0) / (d.norm() * d0.norm());
        CHECK(std::acos(std::min(1.0, cosang)) <= 10.0 * std::numbers::pi / 180.0 + 1e-9);
        CHECK(d.norm() / d0.norm() >= 0.8 - 1e-12);
        CHECK(d.norm() / d0.norm() <= 1.2 + 1e-12);
    }
}

TEST_CASE("test split is fixed") {
    const Split a = split_train_test(1000, 0.2);
    const Split b = split_train_test(1000, 0.2);
    CHECK(a.test == b.test);
    CHECK(a.test.size() == 200);
    CHECK(a.train.size() == 800);
    CHECK(std::is_sorted(a.test.begin(), a.test.end()));
    CHECK_THROWS_AS(split_train_test(10, 1.0), InputError);
}

TEST_CASE("balanced folds") {
    const Dataset ds = gen_blobs(1000, 10, 0.2, 0);
    const FoldSpec f = sample_fold_balanced(ds, 4, 0, 0.2);
    CHECK(f.labeled.size() == 40);
    CHECK(labeled_class_counts(f, ds) == std::vector<int>(10, 4));
    CHECK_NOTHROW(check_partition(f, ds.size()));
    CHECK(f.labeled.size() + f.unlabeled.size() + f.test.size() == ds.size());

    std::set<std::vector<int>> distinct;
    for (std::uint64_t s = 0; s < 10; ++s) distinct.insert(sample_fold_balanced(ds, 4, s, 0.2).labeled);
    CHECK(distinct.size() == 10);

    const Split split = split_train_test(ds.size(), 0.2);
    std::vector<int> per_class(10, 0);
    for (int i : split.train) ++per_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
    const int full = *std::min_element(per_class.begin(), per_class.end());
    if (std::all_of(per_class.begin(), per_class.end(), [&](int c) { return c == full; })) {
        const FoldSpec all = sample_fold_balanced(ds, full, 0, 0.2);
        CHECK(all.unlabeled.empty());
    }
    CHECK_THROWS_AS(sample_fold_balanced(ds, full + 1000, 0, 0.2), InputError);
    CHECK(sample_fold_balanced(ds, 4, 3, 0.2) == sample_fold_balanced(ds, 4, 3, 0.2));
}

TEST_CASE("per-class budget equal to the class size leaves U empty") {
    const Dataset ds = gen_blobs(40, 4, 0.2, 0);
    const FoldSpec f = sample_fold_balanced(ds, 10, 0, 0.0);
    CHECK(f.unlabeled.empty());
    CHECK(f.labeled.size() == 40);
}

TEST_CASE("random folds are nested") {
    const Dataset ds = gen_blobs(2000, 10, 0.2, 0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const FoldSpec small = sample_fold_random(ds, 40, s, 0.2);
        const FoldSpec big = sample_fold_random(ds, 50, s, 0.2);
        CHECK(includes(big.labeled, small.labeled));
        CHECK_NOTHROW(check_partition(big, ds.size()));
    }
    const FoldSpec full = sample_fold_random(ds, 1600, 1, 0.2);
    CHECK(full.unlabeled.empty());
    CHECK_THROWS_AS(sample_fold_random(ds, 1601, 1, 0.2), InputError);

    // Tiny label budgets can miss classes entirely; that is allowed.
    bool missed = false;
    for (std::uint64_t s = 0; s < 20 && !missed; ++s) {
        const auto c = labeled_class_counts(sample_fold_random(ds, 10, s, 0.2), ds);
        missed = std::count(c.begin(), c.end(), 0) > 0;
    }
    CHECK(missed);
}

TEST_CASE("imbalance") {
    Dataset ds = gen_blobs(1250, 10, 0.2, 0);
    const FoldSpec f = sample_fold_balanced(ds, 4, 0, 0.2);
    CHECK(apply_imbalance(f, ds, 0, 1.0, 3).unlabeled == f.unlabeled);

    const auto before = unlabeled_class_counts(f, ds);
    const FoldSpec g = apply_imbalance(f, ds, 0, 0.6, 3);
    const auto after = unlabeled_class_counts(g, ds);
    const int drop = static_cast<int>(std::ceil((1.0 - 0.6) * before[3] - 1e-9));
    CHECK(after[3] == before[3] - drop);
    for (int k = 0; k < 10; ++k)
        if (k != 3) CHECK(after[static_cast<std::size_t>(k)] == before[static_cast<std::size_t>(k)]);
    CHECK(g.labeled == f.labeled);
    CHECK(g.meta.imbalance_class == 3);
    CHECK_THROWS_AS(apply_imbalance(f, ds, 0, 0.0, 3), InputError);

    // 100 unlabeled items of one class, keep 60%.
    Dataset two = gen_blobs(208, 2, 0.1, 0);
    const FoldSpec h = sample_fold_balanced(two, 4, 0, 0.0);
    CHECK(unlabeled_class_counts(h, two)[0] == 100);
    CHECK(unlabeled_class_counts(apply_imbalance(h, two, 1, 0.6, 0), two)[0] == 60);

    const FoldSpec r = apply_imbalance(f, ds, 7, 0.6);
    CHECK(r.meta.imbalance_class.has_value());
    CHECK(apply_imbalance(f, ds, 7, 0.6) == r);

    FoldSpec no_u = f;
    no_u.unlabeled.clear();
    CHECK_THROWS_AS(apply_imbalance(no_u, ds, 0, 0.6, 2), InputError);
}

TEST_CASE("class frequency deviation") {
    const Dataset ds = gen_blobs(1000, 10, 0.2, 0);
    CHECK(class_freq_deviation(sample_fold_balanced(ds, 4, 0, 0.2), ds) == doctest::Approx(0.0));
    const std::vector<double> paper{0.025, 0.05, 0.05, 0.05, 0.10, 0.10, 0.125, 0.125, 0.125, 0.25};
    CHECK(normalized_freq_deviation(paper) == doctest::Approx(0.6123724356957945).epsilon(1e-12));
    FoldSpec empty;
    CHECK_THROWS_AS(class_freq_deviation(empty, ds), InputError);
}

TEST_CASE("partition checks") {
    FoldSpec f;
    f.labeled = {0, 1};
    f.unlabeled = {1, 2};
    CHECK_THROWS_AS(check_partition(f, 5), InputError);
    f.unlabeled = {2, 7};
    CHECK_THROWS_AS(check_partition(f, 5), InputError);
}

TEST_CASE("batch iterator") {
    const Dataset ds = gen_blobs(400, 4, 0.2, 0);
    const FoldSpec f = sample_fold_balanced(ds, 5, 0, 0.2);
    const TrainingView view(ds, f);
    const AugmentParams aug = AugmentParams::for_dataset(ds, AugmentSettings{});

    BatchIterator it(view, 8, 7, 11, aug);
    CHECK(it.unlabeled_batch_size() == 56);

    // Labeled epoch of 20 items, batches of 8: the first 20 draws cover everything once.
    std::vector<int> seen;
    for (int i = 0; i < 3; ++i) {
        const Batch b = it.next();
        CHECK(b.labeled.rows() == 8);
        CHECK(b.weak.rows() == 56);
        CHECK(b.strong.rows() == 56);
        seen.insert(seen.end(), b.labeled_ids.begin(), b.labeled_ids.end());
    }
    std::vector<int> first(seen.begin(), seen.begin() + 20);
    std::sort(first.begin(), first.end());
    CHECK(first == f.labeled);

    BatchIterator a(view, 8, 7, 99, aug);
    BatchIterator b(view, 8, 7, 99, aug);
    for (int i = 0; i < 5; ++i) {
        const Batch x = a.next();
        const Batch y = b.next();
        CHECK(x.labeled == y.labeled);
        CHECK(x.weak == y.weak);
        CHECK(x.strong == y.strong);
        CHECK(x.unlabeled_ids == y.unlabeled_ids);
    }

    // Switching the unlabeled side off leaves the labeled stream as it was.
    BatchIterator with_u(view, 8, 7, 5, aug, true);
    BatchIterator without_u(view, 8, 7, 5, aug, false);
    for (int i = 0; i < 5; ++i) {
        const Batch x = with_u.next();
        const Batch y = without_u.next();
        CHECK(x.labeled == y.labeled);
        CHECK(y.unlabeled_size() == 0);
    }

    const std::set<int> unlabeled(f.unlabeled.begin(), f.unlabeled.end());
    const Batch one = BatchIterator(view, 4, 2, 3, aug).next();
    for (int id : one.unlabeled_ids) CHECK(unlabeled.count(id) == 1);
    CHECK(one.view(0).source == one.unlabeled_ids[0]);

    FoldSpec none = f;
    none.unlabeled.insert(none.unlabeled.end(), none.labeled.begin(), none.labeled.end());
    std::sort(none.unlabeled.begin(), none.unlabeled.end());
    none.labeled.clear();
    const TrainingView empty_view(ds, none);
    CHECK_THROWS_AS(BatchIterator(empty_view, 8, 7, 1, aug), InputError);
    CHECK_THROWS_AS(BatchIterator(view, 0, 7, 1, aug), InputError);
}

TEST_CASE("protocol names") {
    for (auto p : {Protocol::balanced, Protocol::random, Protocol::imbalanced}) CHECK(parse_protocol(to_string(p)) == p);
    CHECK_THROWS_AS(parse_protocol("stratified"), InputError);
}
