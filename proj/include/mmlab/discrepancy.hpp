#ifndef MMLAB_DISCREPANCY_HPP_
#define MMLAB_DISCREPANCY_HPP_

// Generative discrepancy of sub-sampling mixtures and the diagnostics built on it.

#include <cmath>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/info.hpp"
#include "mmlab/mixture.hpp"

namespace mmlab {

struct DeltaTerm {
    SubsetIndex subset;
    double weight = 0.0;
    double conditional_entropy = 0.0;  // H(X_{rest} | X_A)
};

struct DeltaReport {
    double total = 0.0;
    std::vector<DeltaTerm> per_subset;
};

/// Weighted average of the entropy left in the unobserved modalities given each subset.
inline DeltaReport delta(const JointDistribution& dist, const SubsetMixture& mixture) {
    const int M = dist.num_modalities();
    if (mixture.num_modalities() != M) {
        throw DimensionError("mixture covers " + std::to_string(mixture.num_modalities()) +
                             " modalities, distribution has " + std::to_string(M));
    }
    DeltaReport report;
    for (const auto& e : mixture) {
        const SubsetIndex rest = e.subset.complement(M);
        const double h = rest.empty() ? 0.0 : conditional_entropy(dist, rest, e.subset);
        report.per_subset.push_back({e.subset, e.weight, h});
        report.total += e.weight * h;
    }
    return report;
}

struct Corollary2Report {
    Family family = Family::MMVAE;
    int num_modalities = 0;       // M; the extended joint has M+1 modalities
    double delta_M = 0.0;
    double delta_M_plus = 0.0;
    /// (1/|S| - 1/|S+|) * sum_A I(X_{rest}; X_{M+1} | X_A); information shared with the new modality.
    double shared_term = 0.0;
    /// [0] = 1/(|S+||S|) * sum_A H(X_A | X_{M+1});  [1] = 1/|S+| * sum_A H(X_{M+1} | X).
    double specific_terms[2] = {0.0, 0.0};
    double difference_direct = 0.0;
    double difference_decomposed = 0.0;
    /// specific terms outweigh the shared term, i.e. the discrepancy grows.
    bool increases = false;
    /// The condition with coefficient (1/|S+| - 1/|S|) on the shared sum, as printed.
    /// That coefficient is negative, so this holds whenever the right side is positive.
    bool displayed_condition = false;

    double specific_sum() const { return specific_terms[0] + specific_terms[1]; }
};

/// Splits the change in discrepancy from adding the last modality of `dist_plus` into its
/// shared and modality-specific parts, and computes the same change directly.
inline Corollary2Report corollary2_audit(const JointDistribution& dist_plus, Family family, int num_modalities) {
    if (family == Family::MVAE) throw UnsupportedError("corollary audit covers MMVAE and MoPoE only");
    const int M = num_modalities;
    if (dist_plus.num_modalities() != M + 1) {
        throw DimensionError("extended distribution must have M+1 = " + std::to_string(M + 1) + " modalities");
    }
    const auto [S, S_plus] = extend(family, M);
    const SubsetIndex X = SubsetIndex::full(M);
    const SubsetIndex added = SubsetIndex::single(M);
    const double n = static_cast<double>(S.size());
    const double n_plus = static_cast<double>(S_plus.size());

    Corollary2Report r;
    r.family = family;
    r.num_modalities = M;
    r.delta_M = delta(marginalize(dist_plus, X), S).total;
    r.delta_M_plus = delta(dist_plus, S_plus).total;

    double shared_sum = 0.0;
    double specific_a = 0.0;
    for (const auto& e : S) {
        shared_sum += conditional_mutual_information(dist_plus, e.subset.complement(M), added, e.subset);
        specific_a += conditional_entropy(dist_plus, e.subset, added);
    }
    const double added_given_all = conditional_entropy(dist_plus, added, X);

    r.shared_term = (1.0 / n - 1.0 / n_plus) * shared_sum;
    r.specific_terms[0] = specific_a / (n_plus * n);
    r.specific_terms[1] = n * added_given_all / n_plus;
    r.difference_direct = r.delta_M_plus - r.delta_M;
    r.difference_decomposed = r.specific_sum() - r.shared_term;
    r.increases = r.specific_sum() > r.shared_term;
    r.displayed_condition = (1.0 / n_plus - 1.0 / n) * shared_sum < r.specific_sum();
    return r;
}

/// Residual of H(X|Z) = H(X_rest|X_A) + H(X_A|Z) for Z drawn from `channel` given X_A.
/// `channel` has one row per cell of the X_A marginal (ascending modality order) and one
/// column per latent symbol.
inline double lemma2_check(const JointDistribution& dist, SubsetIndex subset, const Matrix& channel) {
    const Alphabet& alphabet = dist.alphabet();
    alphabet.check_subset(subset);
    const std::size_t rows = detail::marginal_cells(alphabet, subset);
    if (channel.rows() != rows || channel.cols() == 0) {
        throw DimensionError("channel must be " + std::to_string(rows) + " x |Z|");
    }
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (double v : channel.row(r)) {
            if (!(v >= 0.0)) throw ValidationError("channel entries must be >= 0");
            total += v;
        }
        if (std::abs(total - 1.0) > tolerances().normalization) {
            throw ValidationError("channel row " + std::to_string(r) + " does not sum to 1");
        }
    }
    const int M = dist.num_modalities();
    std::vector<int> sizes = alphabet.sizes();
    sizes.push_back(static_cast<int>(channel.cols()));
    Alphabet xz(std::move(sizes));
    const auto to_row = detail::marginal_index_map(alphabet, subset);
    std::vector<double> probs(xz.cells());
    const std::size_t Z = channel.cols();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        for (std::size_t z = 0; z < Z; ++z) probs[i * Z + z] = dist[i] * channel(to_row[i], z);
    }
    const JointDistribution joint = JointDistribution::from_weights(std::move(xz), std::move(probs));
    const SubsetIndex latent = SubsetIndex::single(M);
    const SubsetIndex X = SubsetIndex::full(M);
    const double lhs = conditional_entropy(joint, X, latent);
    const double rest = conditional_entropy(dist, subset.complement(M), subset);
    const double coding = conditional_entropy(joint, subset, latent);
    return std::abs(lhs - rest - coding);
}

}  // namespace mmlab

#endif  // MMLAB_DISCREPANCY_HPP_
