#ifndef MMLAB_DATAGEN_HPP_
#define MMLAB_DATAGEN_HPP_

// Synthetic discrete multimodal datasets with a shared class label.
//
//   SharedSpecific  x_m = (c, n_m), c ~ U(K), n_m ~ U(N_m); index c * N_m + n_m
//   NoisyShared     x_m = c w.p. 1 - eps_m, otherwise uniform over the other K - 1 labels
//   Repeated        `copies` identical replicas of a one-modality base dataset

#include <cmath>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/info.hpp"
#include "mmlab/mixture.hpp"

namespace mmlab {

struct SharedSpecific {
    int classes = 2;
    std::vector<int> noise_sizes;

    friend bool operator==(const SharedSpecific&, const SharedSpecific&) = default;
};

struct NoisyShared {
    int classes = 2;
    std::vector<double> eps;

    friend bool operator==(const NoisyShared&, const NoisyShared&) = default;
};

using BaseSpec = std::variant<SharedSpecific, NoisyShared>;

struct Repeated {
    BaseSpec base;
    int copies = 1;

    friend bool operator==(const Repeated&, const Repeated&) = default;
};

struct DatasetSpec {
    std::variant<SharedSpecific, NoisyShared, Repeated> variant;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

namespace detail {

inline void validate(const SharedSpecific& s) {
    if (s.classes < 1) throw ValidationError("shared_specific needs classes >= 1");
    if (s.noise_sizes.empty()) throw ValidationError("shared_specific needs at least one modality");
    for (int n : s.noise_sizes) {
        if (n < 1) throw ValidationError("noise sizes must be >= 1");
    }
}

inline void validate(const NoisyShared& s) {
    if (s.classes < 2) throw ValidationError("noisy_shared needs classes >= 2");
    if (s.eps.empty()) throw ValidationError("noisy_shared needs at least one modality");
    for (double e : s.eps) {
        if (!(e >= 0.0 && e < 1.0)) throw ValidationError("noise rates must lie in [0,1)");
    }
}

inline void validate(const Repeated& r) {
    if (r.copies < 1) throw ValidationError("repeated needs copies >= 1");
    std::visit(
        [](const auto& b) {
            validate(b);
            int m = 0;
            if constexpr (std::is_same_v<std::decay_t<decltype(b)>, SharedSpecific>) m = static_cast<int>(b.noise_sizes.size());
            else m = static_cast<int>(b.eps.size());
            if (m != 1) throw ValidationError("repeated base must have exactly one modality");
        },
        r.base);
}

inline std::vector<int> sizes_of(const SharedSpecific& s) {
    std::vector<int> out;
    for (int n : s.noise_sizes) out.push_back(s.classes * n);
    return out;
}

inline std::vector<int> sizes_of(const NoisyShared& s) { return std::vector<int>(s.eps.size(), s.classes); }

inline std::vector<int> sizes_of(const Repeated& r) {
    const auto base = std::visit([](const auto& b) { return sizes_of(b); }, r.base);
    return std::vector<int>(static_cast<std::size_t>(r.copies), base.at(0));
}

// p(x_m = v | c)
inline double emission(const SharedSpecific& s, int m, int c, int v) {
    const int n = s.noise_sizes[m];
    return v / n == c ? 1.0 / n : 0.0;
}

inline double emission(const NoisyShared& s, int m, int c, int v) {
    return v == c ? 1.0 - s.eps[m] : s.eps[m] / (s.classes - 1);
}

inline int classes_of(const SharedSpecific& s) { return s.classes; }
inline int classes_of(const NoisyShared& s) { return s.classes; }

}  // namespace detail

inline void validate(const DatasetSpec& spec) {
    std::visit([](const auto& v) { detail::validate(v); }, spec.variant);
}

inline int num_classes(const DatasetSpec& spec) {
    return std::visit(
        [](const auto& v) -> int {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Repeated>) {
                return std::visit([](const auto& b) { return detail::classes_of(b); }, v.base);
            } else {
                return detail::classes_of(v);
            }
        },
        spec.variant);
}

inline Alphabet alphabet_of(const DatasetSpec& spec) {
    validate(spec);
    return Alphabet(std::visit([](const auto& v) { return detail::sizes_of(v); }, spec.variant));
}

inline int num_modalities(const DatasetSpec& spec) { return alphabet_of(spec).num_modalities(); }

/// p(c, x) as a (cells x K) matrix.
inline Matrix label_joint(const DatasetSpec& spec) {
    const Alphabet alphabet = alphabet_of(spec);
    const int K = num_classes(spec);
    check_budget(saturating_mul(alphabet.cells(), static_cast<std::size_t>(K)), "labeled joint");
    Matrix out(alphabet.cells(), static_cast<std::size_t>(K));
    const int M = alphabet.num_modalities();
    for (std::size_t i = 0; i < alphabet.cells(); ++i) {
        const auto x = alphabet.tuple(i);
        for (int c = 0; c < K; ++c) {
            double p = 1.0 / K;
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, Repeated>) {
                        for (int m = 1; m < M; ++m) {
                            if (x[m] != x[0]) p = 0.0;
                        }
                        p *= std::visit([&](const auto& b) { return detail::emission(b, 0, c, x[0]); }, v.base);
                    } else {
                        for (int m = 0; m < M; ++m) p *= detail::emission(v, m, c, x[m]);
                    }
                },
                spec.variant);
            out(i, static_cast<std::size_t>(c)) = p;
        }
    }
    return out;
}

inline JointDistribution build_joint(const DatasetSpec& spec) {
    const Alphabet alphabet = alphabet_of(spec);
    const Matrix lj = label_joint(spec);
    std::vector<double> probs(alphabet.cells(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        for (double v : lj.row(i)) probs[i] += v;
    }
    return JointDistribution::from_weights(alphabet, std::move(probs));
}

/// p(c | x); rows for impossible x are uniform.
inline Matrix label_posterior(const DatasetSpec& spec) {
    Matrix lj = label_joint(spec);
    for (std::size_t i = 0; i < lj.rows(); ++i) {
        auto row = lj.row(i);
        double total = 0.0;
        for (double v : row) total += v;
        for (double& v : row) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(row.size());
    }
    return lj;
}

/// Discrepancy of a SharedSpecific dataset: sum_A w_A sum_{m not in A} ln N_m.
inline double closed_form_delta(const DatasetSpec& spec, const SubsetMixture& mixture) {
    const auto* s = std::get_if<SharedSpecific>(&spec.variant);
    if (!s) throw UnsupportedError("closed-form discrepancy exists for shared_specific datasets only");
    detail::validate(*s);
    const int M = static_cast<int>(s->noise_sizes.size());
    if (mixture.num_modalities() != M) throw DimensionError("mixture/dataset modality mismatch");
    double total = 0.0;
    for (const auto& e : mixture) {
        double h = 0.0;
        for (int m : e.subset.complement(M).members()) h += std::log(static_cast<double>(s->noise_sizes[m]));
        total += e.weight * h;
    }
    return total;
}

/// g_m: x_m -> argmax_c p(c | x_m), smallest class on ties.
struct BayesClassifier {
    std::vector<int> label;  // indexed by x_m

    int operator()(int xm) const { return label.at(static_cast<std::size_t>(xm)); }
};

namespace detail {

inline BayesClassifier classifier_for(const SharedSpecific& s, int m) {
    BayesClassifier g;
    const int n = s.noise_sizes.at(m);
    for (int v = 0; v < s.classes * n; ++v) g.label.push_back(v / n);
    return g;
}

inline BayesClassifier classifier_for(const NoisyShared& s, int m) {
    BayesClassifier g;
    const double eps = s.eps.at(m);
    for (int v = 0; v < s.classes; ++v) {
        // Uniform labels: the posterior is proportional to the emission probability.
        int best = 0;
        double best_p = -1.0;
        for (int c = 0; c < s.classes; ++c) {
            const double p = c == v ? 1.0 - eps : eps / (s.classes - 1);
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        g.label.push_back(best);
    }
    return g;
}

}  // namespace detail

inline BayesClassifier bayes_classifier(const DatasetSpec& spec, int m) {
    validate(spec);
    if (m < 0 || m >= num_modalities(spec)) throw DimensionError("modality index out of range");
    return std::visit(
        [m](const auto& v) -> BayesClassifier {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Repeated>) {
                return std::visit([](const auto& b) { return detail::classifier_for(b, 0); }, v.base);
            } else {
                return detail::classifier_for(v, m);
            }
        },
        spec.variant);
}

inline std::vector<BayesClassifier> bayes_classifiers(const DatasetSpec& spec) {
    std::vector<BayesClassifier> out;
    for (int m = 0; m < num_modalities(spec); ++m) out.push_back(bayes_classifier(spec, m));
    return out;
}

/// The same dataset family with M modalities: noise lists are truncated or padded with
/// their last entry; Repeated changes its copy count.
inline DatasetSpec with_modalities(const DatasetSpec& spec, int M) {
    if (M < 1) throw ValidationError("M must be >= 1");
    validate(spec);
    DatasetSpec out = spec;
    std::visit(
        [M](auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SharedSpecific>) v.noise_sizes.resize(static_cast<std::size_t>(M), v.noise_sizes.back());
            else if constexpr (std::is_same_v<T, NoisyShared>) v.eps.resize(static_cast<std::size_t>(M), v.eps.back());
            else v.copies = M;
        },
        out.variant);
    return out;
}

inline std::string describe(const DatasetSpec& spec) {
    auto base_str = [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        std::string s;
        if constexpr (std::is_same_v<T, SharedSpecific>) {
            s = "shared_specific(K=" + std::to_string(v.classes) + ",N=";
            for (std::size_t i = 0; i < v.noise_sizes.size(); ++i) s += (i ? "," : "") + std::to_string(v.noise_sizes[i]);
        } else {
            s = "noisy_shared(K=" + std::to_string(v.classes) + ",eps=";
            for (std::size_t i = 0; i < v.eps.size(); ++i) s += (i ? "," : "") + format_double(v.eps[i]);
        }
        return s + ")";
    };
    return std::visit(
        [&](const auto& v) -> std::string {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Repeated>) {
                return "repeated(" + std::visit(base_str, v.base) + ",copies=" + std::to_string(v.copies) + ")";
            } else {
                return base_str(v);
            }
        },
        spec.variant);
}

}  // namespace mmlab

#endif  // MMLAB_DATAGEN_HPP_
