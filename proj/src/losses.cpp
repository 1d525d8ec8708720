#include "spl/losses.hpp"

#include "spl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spl {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::pl: return "pl";
        case Variant::spl: return "spl";
        case Variant::fm: return "fm";
        case Variant::sfm: return "sfm";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "pl") return Variant::pl;
    if (name == "spl") return Variant::spl;
    if (name == "fm") return Variant::fm;
    if (name == "sfm") return Variant::sfm;
    throw InputError("unknown loss variant '" + std::string(name) + "' (expected pl, spl, fm or sfm)");
}

void LossConfig::validate() const {
    if (!(tau > 0.5 && tau <= 1.0)) throw InputError("tau must lie in (0.5, 1]");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InputError("mu must be a positive finite number");
    if (!(lambda_u >= 0.0)) throw InputError("lambda_u must be >= 0");
    if (!(lambda_phi >= 0.0)) throw InputError("lambda_phi must be >= 0");
    if ((smooth() || lambda_phi > 0.0) && tau >= 1.0)
        throw InputError("the smooth factor needs tau < 1");
}

double shape_factor(double sigma, double tau, double mu) {
    if (!(tau < 1.0)) throw InputError("shape_factor: tau must be < 1");
    if (!(tau > 0.5)) throw InputError("shape_factor: tau must be > 0.5");
    if (!(mu > 0.0)) throw InputError("shape_factor: mu must be > 0");
    const double lin = std::max(0.0, (sigma - tau) / (1.0 - tau));
    return mu == 1.0 ? lin : std::pow(lin, mu);
}

namespace {

double weight_for(double sigma, const LossConfig& cfg) {
    if (cfg.smooth()) return shape_factor(sigma, cfg.tau, cfg.mu);
    return sigma > cfg.tau ? 1.0 : 0.0;
}

// No validation: callers hand in softmax rows.
template <typename Row>
PseudoLabel label_row(const Row& probs, Eigen::Index n, const LossConfig& cfg) {
    PseudoLabel pl;
    pl.cls = 0;
    pl.confidence = probs(0);
    for (Eigen::Index i = 1; i < n; ++i) {
        if (probs(i) > pl.confidence) {
            pl.confidence = probs(i);
            pl.cls = static_cast<int>(i);
        }
    }
    pl.weight = weight_for(pl.confidence, cfg);
    return pl;
}

void check_distribution(std::span<const double> p) {
    if (p.empty()) throw InputError("empty probability vector");
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("probabilities must be finite and non-negative");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw InputError("probabilities must sum to 1");
}

int hot_index(std::span<const double> target) {
    int hot = -1;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 1.0) {
            if (hot >= 0) throw InputError("target is not one-hot");
            hot = static_cast<int>(i);
        } else if (target[i] != 0.0) {
            throw InputError("target is not one-hot");
        }
    }
    if (hot < 0) throw InputError("target is not one-hot");
    return hot;
}

double neg_log(double p) { return p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity(); }

double unlabeled_mean(double weighted_sum, double accepted, std::size_t count, const LossConfig& cfg) {
    if (count == 0) return 0.0;
    if (cfg.mean_over_accepted) return accepted > 0.0 ? weighted_sum / accepted : 0.0;
    return weighted_sum / static_cast<double>(count);
}

void require_variant(const LossConfig& cfg, Variant v) {
    cfg.validate();
    if (cfg.variant != v) throw InputError("loss_" + to_string(v) + " called with variant " + to_string(cfg.variant));
}

}  // namespace

PseudoLabel pseudo_label(std::span<const double> probs_weak, const LossConfig& cfg) {
    check_distribution(probs_weak);
    Eigen::Map<const Vector> p(probs_weak.data(), static_cast<Eigen::Index>(probs_weak.size()));
    return label_row(p, p.size(), cfg);
}

double supervised_term(std::span<const LabeledProbs> labeled) {
    if (labeled.empty()) throw InputError("supervised term needs at least one labeled item");
    double s = 0.0;
    for (const auto& item : labeled) {
        check_distribution(item.probs);
        if (item.target.size() != item.probs.size()) throw InputError("target length differs from probs");
        s += neg_log(item.probs[static_cast<std::size_t>(hot_index(item.target))]);
    }
    return s / static_cast<double>(labeled.size());
}

double unsupervised_term(std::span<const std::vector<double>> unlabeled, const LossConfig& cfg) {
    double s = 0.0;
    double accepted = 0.0;
    for (const auto& probs : unlabeled) {
        const auto pl = pseudo_label(probs, cfg);
        if (pl.weight > 0.0) {
            s += pl.weight * neg_log(probs[static_cast<std::size_t>(pl.cls)]);
            accepted += 1.0;
        }
    }
    return unlabeled_mean(s, accepted, unlabeled.size(), cfg);
}

double unsupervised_term(std::span<const ViewProbs> unlabeled, const LossConfig& cfg) {
    double s = 0.0;
    double accepted = 0.0;
    for (const auto& views : unlabeled) {
        check_distribution(views.strong);
        if (views.strong.size() != views.weak.size()) throw InputError("weak and strong views differ in length");
        const auto pl = pseudo_label(views.weak, cfg);
        if (pl.weight > 0.0) {
            s += pl.weight * neg_log(views.strong[static_cast<std::size_t>(pl.cls)]);
            accepted += 1.0;
        }
    }
    return unlabeled_mean(s, accepted, unlabeled.size(), cfg);
}

double loss_pl(std::span<const LabeledProbs> labeled, std::span<const std::vector<double>> unlabeled,
               const LossConfig& cfg) {
    require_variant(cfg, Variant::pl);
    return supervised_term(labeled) + cfg.lambda_u * unsupervised_term(unlabeled, cfg);
}

double loss_spl(std::span<const LabeledProbs> labeled, std::span<const std::vector<double>> unlabeled,
                const LossConfig& cfg) {
    require_variant(cfg, Variant::spl);
    return supervised_term(labeled) + cfg.lambda_u * unsupervised_term(unlabeled, cfg);
}

double loss_fm(std::span<const LabeledProbs> labeled, std::span<const ViewProbs> unlabeled,
               const LossConfig& cfg) {
    require_variant(cfg, Variant::fm);
    return supervised_term(labeled) + cfg.lambda_u * unsupervised_term(unlabeled, cfg);
}

double loss_sfm(std::span<const LabeledProbs> labeled, std::span<const ViewProbs> unlabeled,
                const LossConfig& cfg) {
    require_variant(cfg, Variant::sfm);
    return supervised_term(labeled) + cfg.lambda_u * unsupervised_term(unlabeled, cfg);
}

double loss_phi(std::span<const std::vector<double>> weak, const LossConfig& cfg) {
    if (!(cfg.lambda_phi >= 0.0)) throw InputError("lambda_phi must be >= 0");
    if (cfg.lambda_phi == 0.0 || weak.empty()) return 0.0;
    double s = 0.0;
    for (const auto& probs : weak) {
        check_distribution(probs);
        const double sigma = *std::max_element(probs.begin(), probs.end());
        const double phi = shape_factor(sigma, cfg.tau, cfg.mu);
        s += phi * phi;
    }
    return -cfg.lambda_phi * s / static_cast<double>(weak.size());
}

double spl_integrated(double sigma, double tau) {
    if (!(tau < 1.0) || !(tau > 0.5)) throw InputError("spl_integrated: tau must lie in (0.5, 1)");
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw InputError("spl_integrated: sigma must lie in [0, 1]");
    const double s = std::max(sigma, tau);
    return (1.0 - s + tau * std::log(s)) / (tau - 1.0);
}

double calibrate_lambda_u(const EquilibriumEstimate& est, double lambda_u_fm) {
    if (!(est.factor > 0.0)) throw CalibrationError("equilibrium factor estimate must be positive");
    if (!(est.loss_sfm > 0.0)) throw CalibrationError("equilibrium SFM loss estimate must be positive");
    if (!(est.loss_fm >= 0.0)) throw CalibrationError("equilibrium FM loss estimate must be non-negative");
    return lambda_u_fm * est.loss_fm / (est.factor * est.loss_sfm);
}

double lambda_phi_bound(double tau, double lambda_u_sfm, double loss_sfm) {
    if (!(loss_sfm > 0.0)) throw CalibrationError("lambda_phi_bound: SFM loss estimate must be positive");
    return (1.0 - tau) * lambda_u_sfm / loss_sfm;
}

// --- batch form -------------------------------------------------------------

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

BatchLoss batch_loss(Tape& tape, Var labeled_logits, std::span<const int> labels,
                     std::optional<Var> weak_logits, std::optional<Var> strong_logits,
                     const LossConfig& cfg) {
    cfg.validate();
    BatchLoss out;
    Var sup = softmax_ce(tape, labeled_logits, labels);
    out.supervised = sup.scalar();
    out.total = sup;

    if (!weak_logits || weak_logits->value().rows() == 0) return out;
    if (cfg.two_view() && !strong_logits) throw InputError("two-view variants need strong-view logits");

    Var weak = *weak_logits;
    const auto count = weak.value().rows();
    // Pseudo-labels and their weights are read off a stop-gradient copy.
    const Matrix probs = softmax_rows(tape.stop_gradient(weak).value());
    std::vector<int> cls(static_cast<std::size_t>(count));
    Vector w(count);
    out.pseudo.reserve(static_cast<std::size_t>(count));
    double accepted = 0.0;
    for (Eigen::Index i = 0; i < count; ++i) {
        const auto pl = label_row(probs.row(i), probs.cols(), cfg);
        out.pseudo.push_back(pl);
        cls[static_cast<std::size_t>(i)] = pl.cls;
        w(i) = pl.weight;
        if (pl.weight > 0.0) accepted += 1.0;
    }
    out.mean_weight = w.mean();

    Var scored = cfg.two_view() ? *strong_logits : weak;
    if (scored.value().rows() != count) throw InputError("weak and strong batches differ in size");
    Var logp = tape.pick(tape.log_softmax(scored), cls);
    double denom = static_cast<double>(count);
    if (cfg.mean_over_accepted) denom = accepted;
    Vector coeff = denom > 0.0 ? Vector(-w / denom) : Vector(Vector::Zero(count));
    Var unsup = tape.weighted_sum(logp, coeff);
    out.unsupervised = unsup.scalar();
    out.weighted_ce = -logp.value().col(0).dot(w);
    out.total = tape.add(out.total, tape.scale(unsup, cfg.lambda_u));

    if (cfg.lambda_phi > 0.0) {
        Var sigma = tape.exp(tape.pick(tape.log_softmax(weak), cls));
        Var phi = tape.shape_factor(sigma, cfg.tau, cfg.mu);
        const Vector phi_sg = tape.stop_gradient(phi).value().col(0);
        Var term = tape.weighted_sum(phi, phi_sg * (-cfg.lambda_phi / static_cast<double>(count)));
        out.factor_loss = term.scalar();
        out.total = tape.add(out.total, term);
    }
    return out;
}

}  // namespace spl
