#ifndef MMLAB_METRICS_HPP_
#define MMLAB_METRICS_HPP_

#include <cmath>
#include <numeric>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/datagen.hpp"
#include "mmlab/info.hpp"
#include "mmlab/model.hpp"

namespace mmlab {

struct CoherenceReport {
    std::vector<double> per_modality;
    double average = 0.0;
};

namespace detail {

inline void check_labeled(const TabularModel& model, const JointDistribution& dist, const DatasetSpec& spec) {
    if (!(alphabet_of(spec) == dist.alphabet())) throw DimensionError("dataset spec does not match distribution");
    if (!(model.alphabet == dist.alphabet())) throw DimensionError("model/distribution alphabet mismatch");
}

}  // namespace detail

/// Exact leave-one-out conditional coherence: for each m, the probability that
/// x_hat_m ~ q(x_m|z), z ~ p(z|x_{-m}) is classified as the true label of x.
inline CoherenceReport loo_coherence(const TabularModel& model, const JointDistribution& dist,
                                     const std::vector<BayesClassifier>& classifiers, const DatasetSpec& spec) {
    detail::check_labeled(model, dist, spec);
    const int M = dist.num_modalities();
    if (M < 2) throw UnsupportedError("leave-one-out coherence needs at least two modalities");
    if (static_cast<int>(classifiers.size()) != M) throw DimensionError("one classifier per modality required");
    const int K = num_classes(spec);
    const Matrix label = label_posterior(spec);
    const ModelTables t(model);
    const std::size_t Z = t.latent_size();
    const Alphabet& alphabet = dist.alphabet();
    std::vector<double> post(Z);

    CoherenceReport report;
    for (int m = 0; m < M; ++m) {
        // hit(z, c) = q(g_m(x_hat_m) = c | z)
        Matrix hit(Z, static_cast<std::size_t>(K));
        for (std::size_t z = 0; z < Z; ++z) {
            for (int v = 0; v < alphabet.size(m); ++v) {
                hit(z, static_cast<std::size_t>(classifiers[m](v))) += std::exp(t.dec_logp[m](z, static_cast<std::size_t>(v)));
            }
        }
        const SubsetIndex rest = SubsetIndex::single(m).complement(M);
        double total = 0.0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            if (dist[i] == 0.0) continue;
            const auto x = alphabet.tuple(i);
            t.poe(x, rest, post);
            double acc = 0.0;
            for (std::size_t z = 0; z < Z; ++z) {
                double h = 0.0;
                for (int c = 0; c < K; ++c) h += label(i, static_cast<std::size_t>(c)) * hit(z, static_cast<std::size_t>(c));
                acc += post[z] * h;
            }
            total += dist[i] * acc;
        }
        report.per_modality.push_back(total);
    }
    report.average = std::accumulate(report.per_modality.begin(), report.per_modality.end(), 0.0) / M;
    return report;
}

inline CoherenceReport loo_coherence(const TabularModel& model, const JointDistribution& dist, const DatasetSpec& spec) {
    return loo_coherence(model, dist, bayes_classifiers(spec), spec);
}

struct LinearProbeOptions {
    int steps = 500;
    double step_size = 1.0;
};

/// Trains softmax regression from the posterior vector p(z | x_subset) to the label by
/// full-batch gradient descent (zero init, p(x) p(c|x) weights) and returns the exact
/// expected accuracy of its argmax prediction.
inline double latent_linear_classification(const TabularModel& model, const JointDistribution& dist,
                                           const DatasetSpec& spec, SubsetIndex subset,
                                           const LinearProbeOptions& opt = {}) {
    detail::check_labeled(model, dist, spec);
    if (subset.empty()) throw InvalidSubsetError("representation subset must be non-empty");
    dist.alphabet().check_subset(subset);
    if (opt.steps < 0 || !(opt.step_size > 0.0)) throw ValidationError("invalid linear probe options");
    const std::size_t K = static_cast<std::size_t>(num_classes(spec));
    const Matrix label = label_posterior(spec);
    const ModelTables t(model);
    const std::size_t Z = t.latent_size();

    std::vector<std::size_t> rows;
    std::vector<std::vector<double>> rep;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] == 0.0) continue;
        std::vector<double> r(Z);
        t.poe(dist.alphabet().tuple(i), subset, r);
        rows.push_back(i);
        rep.push_back(std::move(r));
    }

    Matrix W(K, Z);
    std::vector<double> b(K, 0.0);
    std::vector<double> logits(K);
    auto predict = [&](const std::vector<double>& r) {
        for (std::size_t c = 0; c < K; ++c) {
            logits[c] = b[c];
            for (std::size_t z = 0; z < Z; ++z) logits[c] += W(c, z) * r[z];
        }
    };
    for (int step = 0; step < opt.steps; ++step) {
        Matrix gW(K, Z);
        std::vector<double> gb(K, 0.0);
        for (std::size_t n = 0; n < rows.size(); ++n) {
            predict(rep[n]);
            detail::log_softmax_inplace(logits);
            const double px = dist[rows[n]];
            for (std::size_t c = 0; c < K; ++c) {
                const double err = px * (std::exp(logits[c]) - label(rows[n], c));
                gb[c] += err;
                for (std::size_t z = 0; z < Z; ++z) gW(c, z) += err * rep[n][z];
            }
        }
        for (std::size_t c = 0; c < K; ++c) {
            b[c] -= opt.step_size * gb[c];
            for (std::size_t z = 0; z < Z; ++z) W(c, z) -= opt.step_size * gW(c, z);
        }
    }

    double accuracy = 0.0;
    for (std::size_t n = 0; n < rows.size(); ++n) {
        predict(rep[n]);
        std::size_t best = 0;
        for (std::size_t c = 1; c < K; ++c) {
            if (logits[c] > logits[best]) best = c;
        }
        accuracy += dist[rows[n]] * label(rows[n], best);
    }
    return accuracy;
}

}  // namespace mmlab

#endif  // MMLAB_METRICS_HPP_
