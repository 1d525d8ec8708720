#pragma once

// Pseudo-labeling loss family: hard-threshold pseudo-labels (PL), the smooth
// variant (SPL) where the acceptance indicator becomes a continuous ramp, the
// two-view consistency losses (FM, SFM), the factor-as-loss term, and the
// weight calibration rules.
//
// Two entry points exist for every loss. The value-level functions take
// probability vectors and are what tests and tables reason about. The batch
// functions record the same quantities on a Tape for training.

#include "spl/diffcore.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spl {

enum class Variant { pl, spl, fm, sfm };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);  // "pl", "spl", "fm", "sfm"; InputError otherwise

struct LossConfig {
    double tau = 0.95;
    double lambda_u = 1.0;
    double lambda_phi = 0.0;
    double mu = 1.0;
    Variant variant = Variant::sfm;
    // Average the unlabeled term over accepted items only instead of the whole batch.
    bool mean_over_accepted = false;

    // tau in (0.5, 1], mu > 0, lambda_u >= 0, lambda_phi >= 0.
    // Smooth variants additionally need tau < 1.
    void validate() const;

    bool smooth() const { return variant == Variant::spl || variant == Variant::sfm; }
    bool two_view() const { return variant == Variant::fm || variant == Variant::sfm; }

    bool operator==(const LossConfig&) const = default;
};

namespace shape {
inline constexpr double linear = 1.0;
inline constexpr double quadratic = 2.0;
inline constexpr double square_root = 0.5;
}  // namespace shape

struct PseudoLabel {
    int cls = 0;
    double confidence = 0.0;
    // Indicator for PL/FM, ramp for SPL/SFM. Always treated as a constant.
    double weight = 0.0;
};

// (max(0, (sigma - tau) / (1 - tau)))^mu. Requires tau in (0.5, 1) and mu > 0.
double shape_factor(double sigma, double tau, double mu);

// Argmax with ties going to the lowest index. Throws InputError unless the
// vector is non-negative and sums to 1 within 1e-6.
PseudoLabel pseudo_label(std::span<const double> probs_weak, const LossConfig& cfg);

struct LabeledProbs {
    std::vector<double> probs;
    std::vector<double> target;  // one-hot
};

struct ViewProbs {
    std::vector<double> weak;
    std::vector<double> strong;
};

// Mean of -log probs[hot] over the labeled items.
double supervised_term(std::span<const LabeledProbs> labeled);
// Mean over unlabeled items of -weight * log(p[pseudo class]); single-view (PL/SPL).
double unsupervised_term(std::span<const std::vector<double>> unlabeled, const LossConfig& cfg);
// Two-view form (FM/SFM): the weak view decides, the strong view is scored.
double unsupervised_term(std::span<const ViewProbs> unlabeled, const LossConfig& cfg);

// supervised + lambda_u * unsupervised. Each requires the matching cfg.variant
// and a non-empty labeled list.
double loss_pl(std::span<const LabeledProbs> labeled, std::span<const std::vector<double>> unlabeled,
               const LossConfig& cfg);
double loss_spl(std::span<const LabeledProbs> labeled, std::span<const std::vector<double>> unlabeled,
                const LossConfig& cfg);
double loss_fm(std::span<const LabeledProbs> labeled, std::span<const ViewProbs> unlabeled,
               const LossConfig& cfg);
double loss_sfm(std::span<const LabeledProbs> labeled, std::span<const ViewProbs> unlabeled,
                const LossConfig& cfg);

// -lambda_phi * mean Phi(sg(sigma_w)) * Phi(sigma_w). Zero when lambda_phi == 0.
double loss_phi(std::span<const std::vector<double>> weak, const LossConfig& cfg);

// Antiderivative of Phi(sigma)/sigma (linear shape), constant on [0, tau] and
// continuous at tau. Requires tau in (0.5, 1).
double spl_integrated(double sigma, double tau);

struct EquilibriumEstimate {
    double loss_fm = 0.0;   // FM unsupervised term
    double loss_sfm = 0.0;  // SFM cross-entropy per unit factor
    double factor = 0.0;    // mean Phi over all unlabeled items
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;

    bool operator==(const EquilibriumEstimate&) const = default;
};

// lambda_u for SFM so that its unsupervised term matches FM's at equilibrium:
// lambda_fm * l_fm / (l_phi * l_sfm). Throws CalibrationError on zero denominators.
double calibrate_lambda_u(const EquilibriumEstimate& est, double lambda_u_fm);

// (1 - tau) * lambda_u_sfm / l_sfm: past this weight the factor loss pulls
// harder on the weak view than the SFM term does on the strong one.
double lambda_phi_bound(double tau, double lambda_u_sfm, double loss_sfm);

// --- batch (tape) form ------------------------------------------------------

struct BatchLoss {
    Var total;
    double supervised = 0.0;
    double unsupervised = 0.0;     // before lambda_u
    double factor_loss = 0.0;      // loss_phi contribution, already weighted
    double mean_weight = 0.0;      // mean pseudo-label weight over the unlabeled batch
    double weighted_ce = 0.0;      // sum of weight * CE over the unlabeled batch
    std::vector<PseudoLabel> pseudo;
};

// Builds supervised + lambda_u * unsupervised + loss_phi on the tape.
// `weak_logits` may be absent (supervised-only); `strong_logits` is required
// for FM/SFM and ignored for PL/SPL. Pseudo-labels come from a stop-gradient
// copy of the weak logits.
BatchLoss batch_loss(Tape& tape, Var labeled_logits, std::span<const int> labels,
                     std::optional<Var> weak_logits, std::optional<Var> strong_logits,
                     const LossConfig& cfg);

// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace spl
