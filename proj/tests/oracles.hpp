#ifndef MMLAB_TESTS_ORACLES_HPP_
#define MMLAB_TESTS_ORACLES_HPP_

// Slow, independent reference implementations used by the tests. Nothing here calls the
// library's numerical routines; marginals are built with std::map over explicit tuples,
// conditional quantities go through the chain rule, and objectives are computed straight
// from the logits.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "mmlab/datagen.hpp"
#include "mmlab/info.hpp"
#include "mmlab/mixture.hpp"
#include "mmlab/model.hpp"

namespace oracle {

using Tuple = std::vector<int>;

inline Tuple decode(std::size_t idx, const std::vector<int>& sizes) {
    Tuple x(sizes.size());
    for (std::size_t m = sizes.size(); m-- > 0;) {
        x[m] = static_cast<int>(idx % static_cast<std::size_t>(sizes[m]));
        idx /= static_cast<std::size_t>(sizes[m]);
    }
    return x;
}

inline std::map<Tuple, double> marginal(const mmlab::JointDistribution& dist, const std::vector<int>& mods) {
    std::map<Tuple, double> out;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const Tuple x = decode(i, dist.alphabet().sizes());
        Tuple key;
        for (int m : mods) key.push_back(x[m]);
        out[key] += dist[i];
    }
    return out;
}

inline std::vector<int> members(mmlab::SubsetIndex s) {
    std::vector<int> out;
    for (int m = 0; m < 32; ++m) {
        if (s.mask() & (1u << m)) out.push_back(m);
    }
    return out;
}

inline double H(const mmlab::JointDistribution& dist, mmlab::SubsetIndex s) {
    double h = 0.0;
    for (const auto& [k, p] : marginal(dist, members(s))) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

inline double cond_H(const mmlab::JointDistribution& d, mmlab::SubsetIndex t, mmlab::SubsetIndex g) {
    return H(d, t | g) - H(d, g);
}

inline double MI(const mmlab::JointDistribution& d, mmlab::SubsetIndex a, mmlab::SubsetIndex b) {
    return H(d, a) + H(d, b) - H(d, a | b);
}

inline double CMI(const mmlab::JointDistribution& d, mmlab::SubsetIndex a, mmlab::SubsetIndex b,
                  mmlab::SubsetIndex g) {
    return H(d, a | g) + H(d, b | g) - H(d, a | b | g) - H(d, g);
}

/// sum_A w_A H(X \ A | X_A), each term by the chain rule.
inline double delta(const mmlab::JointDistribution& d, const mmlab::SubsetMixture& s) {
    const int M = d.num_modalities();
    double total = 0.0;
    for (const auto& e : s) total += e.weight * (H(d, mmlab::SubsetIndex::full(M)) - H(d, e.subset));
    return total;
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

inline std::vector<int> random_sizes(std::mt19937_64& rng, int M, int max_size) {
    std::uniform_int_distribution<int> u(1, max_size);
    std::vector<int> s(static_cast<std::size_t>(M));
    for (int& v : s) v = u(rng);
    return s;
}

/// Log-normal weights with an occasional exact zero.
inline mmlab::JointDistribution random_joint(std::mt19937_64& rng, const std::vector<int>& sizes,
                                             double zero_prob = 0.15) {
    mmlab::Alphabet a(sizes);
    std::normal_distribution<double> n(0.0, 1.5);
    std::bernoulli_distribution zero(zero_prob);
    std::vector<double> w(a.cells());
    for (double& v : w) v = zero(rng) ? 0.0 : std::exp(n(rng));
    double total = 0.0;
    for (double v : w) total += v;
    if (total == 0.0) w[0] = total = 1.0;
    for (double& v : w) v /= total;
    return mmlab::JointDistribution::from_weights(a, w);
}

inline mmlab::TabularModel random_model(std::mt19937_64& rng, const mmlab::Alphabet& a, int Z, double scale,
                                        bool learned_prior = true) {
    mmlab::TabularModel model(a, Z, learned_prior);
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> flat(model.num_parameters());
    for (double& v : flat) v = n(rng);
    model.assign(flat);
    return model;
}

/// Random non-empty set of subsets with Dirichlet-like weights.
inline mmlab::SubsetMixture random_mixture(std::mt19937_64& rng, int M) {
    const std::uint32_t count = (1u << M) - 1;
    std::bernoulli_distribution keep(0.5);
    std::exponential_distribution<double> ex(1.0);
    std::vector<mmlab::MixtureEntry> entries;
    for (std::uint32_t mask = 1; mask <= count; ++mask) {
        if (keep(rng)) entries.push_back({mmlab::SubsetIndex(mask), ex(rng) + 1e-3});
    }
    if (entries.empty()) entries.push_back({mmlab::SubsetIndex(count), 1.0});
    double total = 0.0;
    for (const auto& e : entries) total += e.weight;
    for (auto& e : entries) e.weight /= total;
    return mmlab::SubsetMixture::custom(M, entries);
}

inline mmlab::Matrix random_channel(std::mt19937_64& rng, std::size_t rows, std::size_t Z) {
    mmlab::Matrix c(rows, Z);
    std::exponential_distribution<double> ex(1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t z = 0; z < Z; ++z) total += c(r, z) = ex(rng);
        for (std::size_t z = 0; z < Z; ++z) c(r, z) /= total;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Objectives from raw logits
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::vector<double> v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double& x : v) s += x = std::exp(x - mx);
    for (double& x : v) x /= s;
    return v;
}

inline std::vector<double> row_of(const mmlab::Matrix& m, std::size_t r) {
    return std::vector<double>(m.row(r).begin(), m.row(r).end());
}

inline std::vector<double> prior(const mmlab::TabularModel& model) {
    if (!model.learned_prior) return std::vector<double>(static_cast<std::size_t>(model.latent_size), 1.0 / model.latent_size);
    return softmax(model.prior);
}

/// p(z | x_A) proportional to prod_{m in A} p(z | x_m).
inline std::vector<double> poe(const mmlab::TabularModel& model, const Tuple& x, mmlab::SubsetIndex a) {
    const std::size_t Z = static_cast<std::size_t>(model.latent_size);
    std::vector<double> p(Z, 1.0);
    for (int m : members(a)) {
        const auto e = softmax(row_of(model.encoder[m], static_cast<std::size_t>(x[m])));
        for (std::size_t z = 0; z < Z; ++z) p[z] *= e[z];
    }
    double s = 0.0;
    for (double v : p) s += v;
    for (double& v : p) v /= s;
    return p;
}

inline double log_q(const mmlab::TabularModel& model, std::size_t z, const Tuple& x, mmlab::SubsetIndex target) {
    double ll = 0.0;
    for (int m : members(target)) ll += std::log(softmax(row_of(model.decoder[m], z))[static_cast<std::size_t>(x[m])]);
    return ll;
}

/// E_{post} log q(x_target | z) - beta KL(post || prior)
inline double elbo_term(const mmlab::TabularModel& model, const Tuple& x, const std::vector<double>& post,
                        mmlab::SubsetIndex target, double beta) {
    const auto pr = prior(model);
    double v = 0.0;
    for (std::size_t z = 0; z < post.size(); ++z) {
        if (post[z] == 0.0) continue;
        v += post[z] * (log_q(model, z, x, target) - beta * std::log(post[z] / pr[z]));
    }
    return v;
}

inline double elbo_sub(const mmlab::TabularModel& model, const mmlab::JointDistribution& d,
                       const mmlab::SubsetMixture& s, double beta) {
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) continue;
        const Tuple x = decode(i, d.alphabet().sizes());
        for (const auto& e : s) total += d[i] * e.weight * elbo_term(model, x, poe(model, x, e.subset), d.alphabet().all(), beta);
    }
    return total;
}

inline double elbo_full(const mmlab::TabularModel& model, const mmlab::JointDistribution& d,
                        const mmlab::SubsetMixture& s, double beta) {
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) continue;
        const Tuple x = decode(i, d.alphabet().sizes());
        std::vector<double> mix(static_cast<std::size_t>(model.latent_size), 0.0);
        for (const auto& e : s) {
            const auto p = poe(model, x, e.subset);
            for (std::size_t z = 0; z < mix.size(); ++z) mix[z] += e.weight * p[z];
        }
        total += d[i] * elbo_term(model, x, mix, d.alphabet().all(), beta);
    }
    return total;
}

inline double mvae_plus(const mmlab::TabularModel& model, const mmlab::JointDistribution& d, double beta) {
    double total = 0.0;
    const auto all = d.alphabet().all();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) continue;
        const Tuple x = decode(i, d.alphabet().sizes());
        total += d[i] * elbo_term(model, x, poe(model, x, all), all, beta);
        for (int m = 0; m < d.num_modalities(); ++m) {
            const auto one = mmlab::SubsetIndex::single(m);
            total += d[i] * elbo_term(model, x, poe(model, x, one), one, beta);
        }
    }
    return total;
}

inline double log_evidence(const mmlab::TabularModel& model, const mmlab::JointDistribution& d) {
    const auto pr = prior(model);
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) continue;
        const Tuple x = decode(i, d.alphabet().sizes());
        double px = 0.0;
        for (std::size_t z = 0; z < pr.size(); ++z) px += pr[z] * std::exp(log_q(model, z, x, d.alphabet().all()));
        total += d[i] * std::log(px);
    }
    return total;
}

/// Central differences over every flattened parameter.
inline std::vector<double> fd_gradient(const std::function<double(const mmlab::TabularModel&)>& f,
                                       const mmlab::TabularModel& model, double h = 1e-5) {
    std::vector<double> theta = model.flatten();
    std::vector<double> g(theta.size());
    mmlab::TabularModel work = model;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double orig = theta[k];
        theta[k] = orig + h;
        work.assign(theta);
        const double up = f(work);
        theta[k] = orig - h;
        work.assign(theta);
        const double down = f(work);
        theta[k] = orig;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Worst per-coordinate |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose
/// true gradient is ~0 from turning rounding noise into a huge ratio.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-4) {
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double den = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
        worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / den);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Monte Carlo coherence
// ---------------------------------------------------------------------------

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Samples (c, x) from the labeled joint, z from p(z | x_{-m}) and x_hat from q(x_m | z),
/// and scores g_m(x_hat) == c. The average over m uses independent draws per modality.
inline Estimate mc_coherence(const mmlab::TabularModel& model, const mmlab::DatasetSpec& spec, std::size_t samples,
                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const mmlab::Matrix lj = mmlab::label_joint(spec);
    const auto classifiers = mmlab::bayes_classifiers(spec);
    const mmlab::Alphabet alphabet = mmlab::alphabet_of(spec);
    const int M = alphabet.num_modalities();
    std::discrete_distribution<std::size_t> pick_cell(lj.data().begin(), lj.data().end());
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t n = 0; n < samples; ++n) {
        double hits = 0.0;
        for (int m = 0; m < M; ++m) {
            const std::size_t cell = pick_cell(rng);
            const std::size_t i = cell / lj.cols();
            const int c = static_cast<int>(cell % lj.cols());
            const Tuple x = decode(i, alphabet.sizes());
            const auto post = poe(model, x, mmlab::SubsetIndex::single(m).complement(M));
            const std::size_t z = std::discrete_distribution<std::size_t>(post.begin(), post.end())(rng);
            const auto q = softmax(row_of(model.decoder[m], z));
            const int xhat = static_cast<int>(std::discrete_distribution<std::size_t>(q.begin(), q.end())(rng));
            if (classifiers[m](xhat) == c) hits += 1.0;
        }
        const double v = hits / M;
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / static_cast<double>(samples);
    const double var = std::max(0.0, sum_sq / static_cast<double>(samples) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace oracle

#endif  // MMLAB_TESTS_ORACLES_HPP_
