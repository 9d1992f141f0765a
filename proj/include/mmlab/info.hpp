#ifndef MMLAB_INFO_HPP_
#define MMLAB_INFO_HPP_

// Exact information measures on dense discrete joint distributions. All values in nats.

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mmlab/core.hpp"

namespace mmlab {

/// Per-modality alphabet sizes |X_1|,...,|X_M|.
class Alphabet {
public:
    Alphabet() = default;

    explicit Alphabet(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.empty()) throw ValidationError("alphabet needs at least one modality");
        if (static_cast<int>(sizes_.size()) > kMaxModalities) {
            throw ValidationError("too many modalities");
        }
        std::size_t cells = 1;
        for (int s : sizes_) {
            if (s < 1) throw ValidationError("alphabet sizes must be >= 1");
            cells = saturating_mul(cells, static_cast<std::size_t>(s));
        }
        check_budget(cells, "joint table");
        cells_ = cells;
        strides_.assign(sizes_.size(), 1);
        for (int m = static_cast<int>(sizes_.size()) - 2; m >= 0; --m) {
            strides_[m] = strides_[m + 1] * static_cast<std::size_t>(sizes_[m + 1]);
        }
    }

    int num_modalities() const { return static_cast<int>(sizes_.size()); }
    int size(int m) const { return sizes_.at(m); }
    const std::vector<int>& sizes() const { return sizes_; }
    std::size_t cells() const { return cells_; }
    std::size_t stride(int m) const { return strides_[m]; }
    SubsetIndex all() const { return SubsetIndex::full(num_modalities()); }

    /// Row-major flat index; the last modality varies fastest.
    std::size_t index(std::span<const int> tuple) const {
        if (tuple.size() != sizes_.size()) throw DimensionError("tuple length mismatch");
        std::size_t idx = 0;
        for (std::size_t m = 0; m < sizes_.size(); ++m) {
            if (tuple[m] < 0 || tuple[m] >= sizes_[m]) throw DimensionError("tuple entry out of range");
            idx += strides_[m] * static_cast<std::size_t>(tuple[m]);
        }
        return idx;
    }

    std::vector<int> tuple(std::size_t idx) const {
        std::vector<int> t(sizes_.size());
        for (std::size_t m = 0; m < sizes_.size(); ++m) {
            t[m] = static_cast<int>(idx / strides_[m]);
            idx %= strides_[m];
        }
        return t;
    }

    void check_subset(SubsetIndex s) const {
        if (!all().includes(s)) {
            throw InvalidSubsetError("subset " + s.to_string() + " references a modality >= " +
                                     std::to_string(num_modalities()));
        }
    }

    /// Alphabet restricted to the members of a non-empty subset, in ascending order.
    Alphabet restrict(SubsetIndex s) const {
        check_subset(s);
        std::vector<int> sub;
        for (int m : s.members()) sub.push_back(sizes_[m]);
        return Alphabet(std::move(sub));
    }

    friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.sizes_ == b.sizes_; }

private:
    std::vector<int> sizes_;
    std::vector<std::size_t> strides_;
    std::size_t cells_ = 0;
};

/// Probability table p(x_1,...,x_M) over an Alphabet, row-major.
class JointDistribution {
public:
    JointDistribution() = default;

    JointDistribution(Alphabet alphabet, std::vector<double> probs)
        : alphabet_(std::move(alphabet)), probs_(std::move(probs)) {
        if (probs_.size() != alphabet_.cells()) {
            throw DimensionError("probability table has " + std::to_string(probs_.size()) +
                                 " entries, alphabet needs " + std::to_string(alphabet_.cells()));
        }
        double total = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("probabilities must be finite and >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > tolerances().normalization) {
            throw ValidationError("probabilities sum to " + format_double(total) + ", expected 1");
        }
    }

    /// Normalizes non-negative weights into a distribution.
    static JointDistribution from_weights(Alphabet alphabet, std::vector<double> weights) {
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw ValidationError("weights must be >= 0");
            total += w;
        }
        if (!(total > 0.0)) throw ValidationError("weights sum to zero");
        for (double& w : weights) w /= total;
        return JointDistribution(std::move(alphabet), std::move(weights));
    }

    const Alphabet& alphabet() const { return alphabet_; }
    int num_modalities() const { return alphabet_.num_modalities(); }
    std::span<const double> probs() const { return probs_; }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::size_t size() const { return probs_.size(); }

private:
    Alphabet alphabet_;
    std::vector<double> probs_;
};

namespace detail {

// For every cell of the full table, the index of the matching cell in the marginal over `subset`.
inline std::vector<std::size_t> marginal_index_map(const Alphabet& alphabet, SubsetIndex subset) {
    const int M = alphabet.num_modalities();
    std::vector<std::size_t> target_stride(M, 0);
    std::size_t stride = 1;
    for (int m = M - 1; m >= 0; --m) {
        if (subset.contains(m)) {
            target_stride[m] = stride;
            stride *= static_cast<std::size_t>(alphabet.size(m));
        }
    }
    std::vector<std::size_t> map(alphabet.cells());
    std::vector<int> digit(M, 0);
    std::size_t target = 0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        map[i] = target;
        for (int m = M - 1; m >= 0; --m) {
            target += target_stride[m];
            if (++digit[m] < alphabet.size(m)) break;
            target -= target_stride[m] * static_cast<std::size_t>(digit[m]);
            digit[m] = 0;
        }
    }
    return map;
}

inline std::size_t marginal_cells(const Alphabet& alphabet, SubsetIndex subset) {
    std::size_t n = 1;
    for (int m : subset.members()) n *= static_cast<std::size_t>(alphabet.size(m));
    return n;
}

inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace detail

/// Marginal table over `subset` (ascending modality order). The empty subset gives {1}.
inline std::vector<double> marginal_table(const JointDistribution& dist, SubsetIndex subset) {
    dist.alphabet().check_subset(subset);
    std::vector<double> out(detail::marginal_cells(dist.alphabet(), subset), 0.0);
    if (subset.empty()) {
        out[0] = 1.0;
        return out;
    }
    const auto map = detail::marginal_index_map(dist.alphabet(), subset);
    const auto p = dist.probs();
    for (std::size_t i = 0; i < p.size(); ++i) out[map[i]] += p[i];
    return out;
}

inline JointDistribution marginalize(const JointDistribution& dist, SubsetIndex subset) {
    if (subset.empty()) throw InvalidSubsetError("cannot marginalize onto the empty set");
    Alphabet sub = dist.alphabet().restrict(subset);
    auto table = marginal_table(dist, subset);
    // Re-summing can drift by a few ulps; renormalize within tolerance.
    double total = std::accumulate(table.begin(), table.end(), 0.0);
    for (double& v : table) v /= total;
    return JointDistribution(std::move(sub), std::move(table));
}

/// Shannon entropy of a probability table.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= detail::xlogx(v);
    return h;
}

inline double entropy(const JointDistribution& dist, SubsetIndex subset) {
    dist.alphabet().check_subset(subset);
    if (subset.empty()) return 0.0;
    return entropy(marginal_table(dist, subset));
}

/// H(X_target | X_given). Overlap between target and given is allowed.
inline double conditional_entropy(const JointDistribution& dist, SubsetIndex target, SubsetIndex given) {
    const Alphabet& a = dist.alphabet();
    a.check_subset(target);
    a.check_subset(given);
    const SubsetIndex joint = target | given;
    if (target.minus(given).empty()) return 0.0;
    const auto p_joint = marginal_table(dist, joint);
    if (given.empty()) return entropy(p_joint);
    // Marginal of `given` summed from the joint marginal so that p(g) >= p(t,g) holds exactly.
    const Alphabet ja = a.restrict(joint);
    SubsetIndex given_in_joint;
    const auto jm = joint.members();
    for (std::size_t k = 0; k < jm.size(); ++k) {
        if (given.contains(jm[k])) given_in_joint = given_in_joint.with(static_cast<int>(k));
    }
    const auto map = detail::marginal_index_map(ja, given_in_joint);
    std::vector<double> p_given(detail::marginal_cells(ja, given_in_joint), 0.0);
    for (std::size_t i = 0; i < p_joint.size(); ++i) p_given[map[i]] += p_joint[i];
    double h = 0.0;
    for (std::size_t i = 0; i < p_joint.size(); ++i) {
        if (p_joint[i] > 0.0) h -= p_joint[i] * std::log(p_joint[i] / p_given[map[i]]);
    }
    return h;
}

namespace detail {

// Joint marginal over a ∪ b ∪ g plus index maps from that table into each part's marginal.
struct PartTables {
    std::vector<double> joint;
    std::vector<std::size_t> to_a, to_b, to_g, to_ag, to_bg;
    std::vector<double> pa, pb, pg, pag, pbg;
};

inline SubsetIndex relative_subset(SubsetIndex outer, SubsetIndex inner) {
    SubsetIndex rel;
    const auto om = outer.members();
    for (std::size_t k = 0; k < om.size(); ++k) {
        if (inner.contains(om[k])) rel = rel.with(static_cast<int>(k));
    }
    return rel;
}

inline std::vector<double> sum_into(std::span<const double> joint, std::span<const std::size_t> map,
                                    std::size_t cells) {
    std::vector<double> out(cells, 0.0);
    for (std::size_t i = 0; i < joint.size(); ++i) out[map[i]] += joint[i];
    return out;
}

inline PartTables part_tables(const JointDistribution& dist, SubsetIndex a, SubsetIndex b, SubsetIndex g) {
    PartTables t;
    const SubsetIndex u = a | b | g;
    t.joint = marginal_table(dist, u);
    const Alphabet ua = dist.alphabet().restrict(u);
    auto build = [&](SubsetIndex part, std::vector<std::size_t>& map, std::vector<double>& table) {
        const SubsetIndex rel = relative_subset(u, part);
        if (rel.empty()) {
            map.assign(t.joint.size(), 0);
            table.assign(1, 1.0);
            return;
        }
        map = marginal_index_map(ua, rel);
        table = sum_into(t.joint, map, marginal_cells(ua, rel));
    };
    build(a, t.to_a, t.pa);
    build(b, t.to_b, t.pb);
    build(g, t.to_g, t.pg);
    build(a | g, t.to_ag, t.pag);
    build(b | g, t.to_bg, t.pbg);
    return t;
}

}  // namespace detail

/// I(X_a; X_b) for disjoint a and b.
inline double mutual_information(const JointDistribution& dist, SubsetIndex a, SubsetIndex b) {
    dist.alphabet().check_subset(a);
    dist.alphabet().check_subset(b);
    if (!a.disjoint(b)) throw OverlapError("mutual information requires disjoint subsets");
    if (a.empty() || b.empty()) return 0.0;
    const auto t = detail::part_tables(dist, a, b, SubsetIndex{});
    double mi = 0.0;
    for (std::size_t i = 0; i < t.joint.size(); ++i) {
        const double p = t.joint[i];
        if (p > 0.0) mi += p * std::log(p / (t.pa[t.to_a[i]] * t.pb[t.to_b[i]]));
    }
    return mi;
}

/// I(X_a; X_b | X_given), computed as E_g KL(p(a,b|g) || p(a|g) p(b|g)).
inline double conditional_mutual_information(const JointDistribution& dist, SubsetIndex a, SubsetIndex b,
                                             SubsetIndex given) {
    const Alphabet& al = dist.alphabet();
    al.check_subset(a);
    al.check_subset(b);
    al.check_subset(given);
    if (!a.disjoint(b) || !a.disjoint(given) || !b.disjoint(given)) {
        throw OverlapError("conditional mutual information requires pairwise disjoint subsets");
    }
    if (a.empty() || b.empty()) return 0.0;
    const auto t = detail::part_tables(dist, a, b, given);
    double cmi = 0.0;
    for (std::size_t i = 0; i < t.joint.size(); ++i) {
        const double p = t.joint[i];
        if (p > 0.0) {
            cmi += p * std::log(p * t.pg[t.to_g[i]] / (t.pag[t.to_ag[i]] * t.pbg[t.to_bg[i]]));
        }
    }
    return cmi;
}

namespace detail {

inline void check_pair(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw SupportMismatchError("tables have different support sizes");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0 && !(q[i] > 0.0)) {
            throw AbsoluteContinuityError("q is zero where p is positive at index " + std::to_string(i));
        }
    }
}

}  // namespace detail

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    detail::check_pair(p, q);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

inline double cross_entropy(std::span<const double> p, std::span<const double> q) {
    detail::check_pair(p, q);
    double ce = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) ce -= p[i] * std::log(q[i]);
    }
    return ce;
}

// ---------------------------------------------------------------------------
// Text format
//
//   mmlab-distribution 1
//   sizes 2 3 2
//   <one probability per line, row-major, 17 significant digits>
// ---------------------------------------------------------------------------

inline constexpr int kDistributionFormatVersion = 1;

inline void write_distribution(std::ostream& os, const JointDistribution& dist) {
    os << "mmlab-distribution " << kDistributionFormatVersion << "\n";
    os << "sizes";
    for (int s : dist.alphabet().sizes()) os << ' ' << s;
    os << "\n";
    for (double p : dist.probs()) os << format_double(p) << "\n";
}

inline std::string to_text(const JointDistribution& dist) {
    std::ostringstream os;
    write_distribution(os, dist);
    return os.str();
}

inline JointDistribution read_distribution(std::istream& is) {
    std::string tag;
    std::string version;
    if (!(is >> tag >> version) || tag != "mmlab-distribution") throw ParseError("missing mmlab-distribution header");
    if (parse_integer(version) != kDistributionFormatVersion) throw ParseError("unsupported distribution version " + version);
    std::string line;
    std::getline(is, line);
    if (!std::getline(is, line)) throw ParseError("missing sizes line");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != "sizes") throw ParseError("expected 'sizes' line");
    std::vector<int> sizes;
    for (std::string tok; ls >> tok;) sizes.push_back(static_cast<int>(parse_integer(tok)));
    Alphabet alphabet(std::move(sizes));
    std::vector<double> probs;
    probs.reserve(alphabet.cells());
    for (std::string tok; is >> tok;) probs.push_back(parse_double(tok));
    if (probs.size() != alphabet.cells()) {
        throw ParseError("expected " + std::to_string(alphabet.cells()) + " probabilities, found " +
                         std::to_string(probs.size()));
    }
    return JointDistribution(std::move(alphabet), std::move(probs));
}

inline JointDistribution from_text(const std::string& text) {
    std::istringstream is(text);
    return read_distribution(is);
}

}  // namespace mmlab

#endif  // MMLAB_INFO_HPP_
