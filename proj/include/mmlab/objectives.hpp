#ifndef MMLAB_OBJECTIVES_HPP_
#define MMLAB_OBJECTIVES_HPP_

// Exact objectives, gradients, and the bound audit for tabular multimodal VAEs.
//
// Every expectation over p(x) and over the latent alphabet is an exact finite sum; cells
// with p(x) = 0 are skipped.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/discrepancy.hpp"
#include "mmlab/info.hpp"
#include "mmlab/mixture.hpp"
#include "mmlab/model.hpp"

namespace mmlab {

enum class Objective {
    ElboSub,   // sum_A w_A { E log q(x|z) - beta KL(p(z|x_A) || q(z)) }, z ~ p(z|x_A)
    ElboFull,  // E log q(x|z) - beta KL(p^S(z|x) || q(z)), z ~ p^S(z|x)
    MvaePlus,  // L(x) + sum_i L(x_i), unimodal terms reconstruct their own modality only
};

inline std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::ElboSub: return "elbo_sub";
        case Objective::ElboFull: return "elbo_full";
        case Objective::MvaePlus: return "mvae_plus";
    }
    return "?";
}

inline Objective parse_objective(std::string_view s) {
    if (s == "elbo_sub") return Objective::ElboSub;
    if (s == "elbo_full") return Objective::ElboFull;
    if (s == "mvae_plus") return Objective::MvaePlus;
    throw ParseError("unknown objective '" + std::string(s) + "'");
}

namespace detail {

inline void check_objective_inputs(const TabularModel& model, const JointDistribution& dist,
                                   const SubsetMixture* mixture, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be a positive finite number");
    if (!(model.alphabet == dist.alphabet())) throw DimensionError("model/distribution alphabet mismatch");
    if (mixture && mixture->num_modalities() != dist.num_modalities()) {
        throw DimensionError("mixture/distribution modality mismatch");
    }
    const std::size_t subsets = mixture ? mixture->size() : static_cast<std::size_t>(dist.num_modalities() + 1);
    check_budget(saturating_mul(saturating_mul(dist.size(), subsets), static_cast<std::size_t>(model.latent_size)),
                 "objective evaluation");
}

// Evaluation scratch shared by all objectives.
class Evaluator {
public:
    Evaluator(const TabularModel& model, double beta, TabularModel* grad)
        : model_(model), t_(model), beta_(beta), grad_(grad), Z_(t_.latent_size()),
          logpost_(Z_), post_(Z_), g_(Z_), ds_(Z_) {}

    const ModelTables& tables() const { return t_; }

    void log_poe(std::span<const int> x, SubsetIndex subset, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (int m : subset.members()) {
            const auto row = t_.enc_logp[m].row(static_cast<std::size_t>(x[m]));
            for (std::size_t z = 0; z < Z_; ++z) out[z] += row[z];
        }
        log_softmax_inplace(out);
    }

    // w * { E_{p(z|x_A)} sum_{m in target} log q(x_m|z) - beta KL(p(z|x_A) || q(z)) }, with its
    // gradient accumulated at scale `w`.
    double subset_term(std::span<const int> x, double w, SubsetIndex subset, SubsetIndex target) {
        log_poe(x, subset, logpost_);
        double f = 0.0;
        for (std::size_t z = 0; z < Z_; ++z) {
            post_[z] = std::exp(logpost_[z]);
            g_[z] = t_.decode_log_likelihood(z, x, target) - beta_ * (logpost_[z] - t_.log_prior[z]);
            f += post_[z] * g_[z];
        }
        if (grad_) {
            for (std::size_t z = 0; z < Z_; ++z) ds_[z] = w * post_[z] * (g_[z] - f);
            for (int m : subset.members()) {
                auto row = grad_->encoder[m].row(static_cast<std::size_t>(x[m]));
                for (std::size_t z = 0; z < Z_; ++z) row[z] += ds_[z];
            }
            accumulate_decoder(x, target, w, post_);
            accumulate_prior(w, post_);
        }
        return w * f;
    }

    // w * { E_{p^S(z|x)} log q(x|z) - beta KL(p^S(z|x) || q(z)) }
    double mixture_term(std::span<const int> x, double w, const SubsetMixture& mixture) {
        const std::size_t n = mixture.size();
        comp_logpost_.resize(n * Z_);
        std::vector<double> logmix(Z_, -std::numeric_limits<double>::infinity());
        for (std::size_t a = 0; a < n; ++a) {
            const auto& e = mixture.entries()[a];
            std::span<double> lp(comp_logpost_.data() + a * Z_, Z_);
            log_poe(x, e.subset, lp);
            if (e.weight <= 0.0) continue;
            const double lw = std::log(e.weight);
            for (std::size_t z = 0; z < Z_; ++z) logmix[z] = log_add(logmix[z], lw + lp[z]);
        }
        const SubsetIndex all = model_.alphabet.all();
        double f = 0.0;
        for (std::size_t z = 0; z < Z_; ++z) {
            post_[z] = std::exp(logmix[z]);
            g_[z] = t_.decode_log_likelihood(z, x, all) - beta_ * (logmix[z] - t_.log_prior[z]);
            f += post_[z] * g_[z];
        }
        if (grad_) {
            for (std::size_t a = 0; a < n; ++a) {
                const auto& e = mixture.entries()[a];
                if (e.weight <= 0.0) continue;
                const double* lp = comp_logpost_.data() + a * Z_;
                double fa = 0.0;
                for (std::size_t z = 0; z < Z_; ++z) fa += std::exp(lp[z]) * g_[z];
                for (std::size_t z = 0; z < Z_; ++z) ds_[z] = w * e.weight * std::exp(lp[z]) * (g_[z] - fa);
                for (int m : e.subset.members()) {
                    auto row = grad_->encoder[m].row(static_cast<std::size_t>(x[m]));
                    for (std::size_t z = 0; z < Z_; ++z) row[z] += ds_[z];
                }
            }
            accumulate_decoder(x, all, w, post_);
            accumulate_prior(w, post_);
        }
        return w * f;
    }

private:
    static double log_add(double a, double b) {
        if (a == -std::numeric_limits<double>::infinity()) return b;
        if (b == -std::numeric_limits<double>::infinity()) return a;
        const double mx = std::max(a, b);
        return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    }

    void accumulate_decoder(std::span<const int> x, SubsetIndex target, double w, std::span<const double> post) {
        for (int m : target.members()) {
            const auto xm = static_cast<std::size_t>(x[m]);
            Matrix& gd = grad_->decoder[m];
            const Matrix& lq = t_.dec_logp[m];
            for (std::size_t z = 0; z < Z_; ++z) {
                const double c = w * post[z];
                for (std::size_t k = 0; k < gd.cols(); ++k) gd(z, k) -= c * std::exp(lq(z, k));
                gd(z, xm) += c;
            }
        }
    }

    void accumulate_prior(double w, std::span<const double> post) {
        if (!grad_->learned_prior) return;
        for (std::size_t z = 0; z < Z_; ++z) {
            grad_->prior[z] += w * beta_ * (post[z] - std::exp(t_.log_prior[z]));
        }
    }

    const TabularModel& model_;
    ModelTables t_;
    double beta_;
    TabularModel* grad_;
    std::size_t Z_;
    std::vector<double> logpost_, post_, g_, ds_, comp_logpost_;
};

inline double evaluate(Objective objective, const TabularModel& model, const JointDistribution& dist,
                       const SubsetMixture* mixture, double beta, TabularModel* grad) {
    check_objective_inputs(model, dist, objective == Objective::MvaePlus ? nullptr : mixture, beta);
    if (objective != Objective::MvaePlus && !mixture) throw ValidationError("objective needs a mixture");
    if (grad) *grad = model.zeros_like();
    Evaluator ev(model, beta, grad);
    const Alphabet& alphabet = dist.alphabet();
    const SubsetIndex all = alphabet.all();
    const int M = alphabet.num_modalities();
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const double px = dist[i];
        if (px == 0.0) continue;
        const auto x = alphabet.tuple(i);
        switch (objective) {
            case Objective::ElboSub:
                for (const auto& e : *mixture) {
                    if (e.weight > 0.0) total += ev.subset_term(x, px * e.weight, e.subset, all);
                }
                break;
            case Objective::ElboFull:
                total += ev.mixture_term(x, px, *mixture);
                break;
            case Objective::MvaePlus:
                total += ev.subset_term(x, px, all, all);
                for (int m = 0; m < M; ++m) {
                    const SubsetIndex only = SubsetIndex::single(m);
                    total += ev.subset_term(x, px, only, only);
                }
                break;
        }
    }
    return total;
}

}  // namespace detail

/// L_S: the sub-sampled objective every mixture-based model optimizes.
inline double elbo_sub(const TabularModel& model, const JointDistribution& dist, const SubsetMixture& mixture,
                       double beta = 1.0) {
    return detail::evaluate(Objective::ElboSub, model, dist, &mixture, beta, nullptr);
}

/// L: the multimodal ELBO with the mixture encoder p^S(z|x).
inline double elbo_full(const TabularModel& model, const JointDistribution& dist, const SubsetMixture& mixture,
                        double beta = 1.0) {
    return detail::evaluate(Objective::ElboFull, model, dist, &mixture, beta, nullptr);
}

/// ELBO plus one unimodal ELBO per modality (ELBO sub-sampling with unimodal subsets).
inline double elbo_mvae_plus(const TabularModel& model, const JointDistribution& dist, double beta = 1.0) {
    return detail::evaluate(Objective::MvaePlus, model, dist, nullptr, beta, nullptr);
}

inline double evaluate_objective(Objective objective, const TabularModel& model, const JointDistribution& dist,
                                 const SubsetMixture& mixture, double beta = 1.0) {
    return detail::evaluate(objective, model, dist, &mixture, beta, nullptr);
}

/// E_{p(x)} log p(x) = -H(X).
inline double data_log_evidence(const JointDistribution& dist) { return -entropy(dist, dist.alphabet().all()); }

/// Exact gradient with respect to every logit; same shape as `model`.
/// For MvaePlus the mixture is ignored.
inline TabularModel gradient(Objective objective, const TabularModel& model, const JointDistribution& dist,
                             const SubsetMixture& mixture, double beta = 1.0, double* value = nullptr) {
    TabularModel grad;
    const double v = detail::evaluate(objective, model, dist, &mixture, beta, &grad);
    if (value) *value = v;
    return grad;
}

inline TabularModel gradient(std::string_view objective_id, const TabularModel& model, const JointDistribution& dist,
                             const SubsetMixture& mixture, double beta = 1.0) {
    return gradient(parse_objective(objective_id), model, dist, mixture, beta);
}

/// E_{p(x)} sum_A w_A KL(p(z|x_A) || p^S(z|x)), the gap between L and L_S.
inline double mixture_kl_term(const TabularModel& model, const JointDistribution& dist, const SubsetMixture& mixture) {
    detail::check_objective_inputs(model, dist, &mixture, 1.0);
    const ModelTables t(model);
    const std::size_t Z = t.latent_size();
    const Alphabet& alphabet = dist.alphabet();
    std::vector<std::vector<double>> posts(mixture.size(), std::vector<double>(Z));
    std::vector<double> mix(Z);
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] == 0.0) continue;
        const auto x = alphabet.tuple(i);
        std::fill(mix.begin(), mix.end(), 0.0);
        for (std::size_t a = 0; a < mixture.size(); ++a) {
            t.poe(x, mixture.entries()[a].subset, posts[a]);
            for (std::size_t z = 0; z < Z; ++z) mix[z] += mixture.entries()[a].weight * posts[a][z];
        }
        for (std::size_t a = 0; a < mixture.size(); ++a) {
            const double w = mixture.entries()[a].weight;
            if (w > 0.0) total += dist[i] * w * kl_divergence(posts[a], mix);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Bound audit
// ---------------------------------------------------------------------------

struct BoundAudit {
    double beta = 1.0;
    double data_log_evidence = 0.0;  // -H(X)
    double elbo_full = 0.0;
    double elbo_sub = 0.0;
    double tightness_gap = 0.0;      // elbo_full - elbo_sub
    double mixture_kl = 0.0;         // E sum_A w_A KL(p(z|x_A) || p^S(z|x))
    double delta = 0.0;
    double slack_theorem = 0.0;      // -H(X) - delta - elbo_sub

    bool sub_below_full = false;       // elbo_sub <= elbo_full
    bool full_below_evidence = false;  // elbo_full <= -H(X)
    bool theorem_holds = false;        // elbo_sub + delta <= -H(X)
    bool gap_matches_kl = false;       // tightness_gap == mixture_kl

    bool passed() const { return sub_below_full && full_below_evidence && theorem_holds && gap_matches_kl; }
};

/// Evaluates every term of L_S <= L <= -H(X) and L_S + delta <= -H(X) at beta = 1.
/// Failures are reported in the flags, never thrown.
inline BoundAudit bound_audit(const TabularModel& model, const JointDistribution& dist, const SubsetMixture& mixture) {
    const double tol = tolerances().bound;
    BoundAudit a;
    a.beta = 1.0;
    a.data_log_evidence = data_log_evidence(dist);
    a.elbo_full = elbo_full(model, dist, mixture, 1.0);
    a.elbo_sub = elbo_sub(model, dist, mixture, 1.0);
    a.tightness_gap = a.elbo_full - a.elbo_sub;
    a.mixture_kl = mixture_kl_term(model, dist, mixture);
    a.delta = delta(dist, mixture).total;
    a.slack_theorem = a.data_log_evidence - a.delta - a.elbo_sub;
    a.sub_below_full = a.elbo_sub <= a.elbo_full + tol;
    a.full_below_evidence = a.elbo_full <= a.data_log_evidence + tol;
    a.theorem_holds = a.elbo_sub + a.delta <= a.data_log_evidence + tol;
    a.gap_matches_kl = std::abs(a.tightness_gap - a.mixture_kl) <= tol;
    return a;
}

/// |E KL(p(z|x_A) || q(z)) - I(X_A; Z_A) - KL(p(z) || q(z))| for subset A of the mixture,
/// with p(z) the aggregate posterior of the A-encoder.
inline double vib_identity_check(const TabularModel& model, const JointDistribution& dist,
                                 const SubsetMixture& mixture, SubsetIndex subset) {
    if (!mixture.contains(subset)) throw ValidationError("subset " + subset.to_string() + " is not in the mixture");
    detail::check_objective_inputs(model, dist, &mixture, 1.0);
    const ModelTables t(model);
    const std::size_t Z = t.latent_size();
    const Alphabet& alphabet = dist.alphabet();
    std::vector<double> prior(Z);
    for (std::size_t z = 0; z < Z; ++z) prior[z] = std::exp(t.log_prior[z]);

    std::vector<int> sizes = alphabet.sizes();
    sizes.push_back(static_cast<int>(Z));
    Alphabet xz(std::move(sizes));
    std::vector<double> joint(xz.cells(), 0.0);
    std::vector<double> post(Z);
    double rate = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto x = alphabet.tuple(i);
        t.poe(x, subset, post);
        for (std::size_t z = 0; z < Z; ++z) joint[i * Z + z] = dist[i] * post[z];
        if (dist[i] > 0.0) rate += dist[i] * kl_divergence(post, prior);
    }
    const JointDistribution pxz = JointDistribution::from_weights(std::move(xz), std::move(joint));
    const SubsetIndex latent = SubsetIndex::single(dist.num_modalities());
    const double info = mutual_information(pxz, subset, latent);
    const auto aggregate = marginal_table(pxz, latent);
    return std::abs(rate - info - kl_divergence(aggregate, prior));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    Objective objective = Objective::ElboSub;
    double beta = 1.0;
    int steps = 1000;
    double step_size = 0.05;
    double momentum = 0.9;
};

struct TrainRecord {
    int step = 0;
    double objective = 0.0;
    double gradient_norm = 0.0;
};

struct TrainTrajectory {
    std::vector<TrainRecord> records;  // one per step, plus the final state at index `steps`
    TabularModel model;
    bool aborted = false;
    std::string diagnostic;

    double final_objective() const { return records.empty() ? 0.0 : records.back().objective; }
};

/// Full-batch gradient ascent with classical momentum:
///   v <- momentum * v + grad;  theta <- theta + step_size * v.
/// `on_step` (optional) sees the model before each update and after the last one.
inline TrainTrajectory train(TabularModel model, const JointDistribution& dist, const SubsetMixture& mixture,
                             const TrainOptions& opt,
                             const std::function<void(int, const TabularModel&)>& on_step = {}) {
    if (opt.steps < 0) throw ValidationError("steps must be >= 0");
    if (!(opt.step_size > 0.0)) throw ValidationError("step size must be > 0");
    if (!(opt.momentum >= 0.0 && opt.momentum < 1.0)) throw ValidationError("momentum must lie in [0,1)");
    TrainTrajectory traj;
    traj.records.reserve(static_cast<std::size_t>(opt.steps) + 1);
    std::vector<double> theta = model.flatten();
    std::vector<double> velocity(theta.size(), 0.0);
    for (int step = 0;; ++step) {
        double value = 0.0;
        const TabularModel grad = gradient(opt.objective, model, dist, mixture, opt.beta, &value);
        const std::vector<double> g = grad.flatten();
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        if (on_step) on_step(step, model);
        if (!std::isfinite(value) || !std::isfinite(norm)) {
            traj.records.push_back({step, value, norm});
            traj.aborted = true;
            traj.diagnostic = "non-finite objective or gradient at step " + std::to_string(step);
            break;
        }
        traj.records.push_back({step, value, norm});
        if (step == opt.steps) break;
        for (std::size_t k = 0; k < theta.size(); ++k) {
            velocity[k] = opt.momentum * velocity[k] + g[k];
            theta[k] += opt.step_size * velocity[k];
        }
        model.assign(theta);
    }
    traj.model = std::move(model);
    return traj;
}

}  // namespace mmlab

#endif  // MMLAB_OBJECTIVES_HPP_
