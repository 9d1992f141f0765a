#ifndef MMLAB_MODEL_HPP_
#define MMLAB_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/info.hpp"
#include "mmlab/mixture.hpp"

namespace mmlab {

/// Default size of the categorical latent alphabet.
inline constexpr int kDefaultLatentSize = 16;

/// Tabular multimodal VAE over finite alphabets.
///
/// Unimodal encoders p(z|x_m) are softmax rows of `encoder[m]` (|X_m| x |Z|), decoders
/// q(x_m|z) are softmax rows of `decoder[m]` (|Z| x |X_m|), and the prior q(z) is either
/// softmax(prior) or uniform. The decoder factorizes over modalities given z.
struct TabularModel {
    Alphabet alphabet;
    int latent_size = 0;
    std::vector<Matrix> encoder;
    std::vector<Matrix> decoder;
    std::vector<double> prior;
    bool learned_prior = true;

    TabularModel() = default;

    TabularModel(Alphabet a, int latent, bool learned = true)
        : alphabet(std::move(a)), latent_size(latent), learned_prior(learned) {
        if (latent_size < 1) throw ValidationError("latent size must be >= 1");
        const std::size_t Z = static_cast<std::size_t>(latent_size);
        for (int m = 0; m < alphabet.num_modalities(); ++m) {
            const std::size_t n = static_cast<std::size_t>(alphabet.size(m));
            encoder.emplace_back(n, Z);
            decoder.emplace_back(Z, n);
        }
        prior.assign(Z, 0.0);
    }

    int num_modalities() const { return alphabet.num_modalities(); }

    /// Number of free parameters; the prior counts only when learned.
    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto& e : encoder) n += e.size();
        for (const auto& d : decoder) n += d.size();
        if (learned_prior) n += prior.size();
        return n;
    }

    /// Parameters in declared order: encoders, decoders, prior (if learned).
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(num_parameters());
        for (const auto& e : encoder) out.insert(out.end(), e.data().begin(), e.data().end());
        for (const auto& d : decoder) out.insert(out.end(), d.data().begin(), d.data().end());
        if (learned_prior) out.insert(out.end(), prior.begin(), prior.end());
        return out;
    }

    void assign(std::span<const double> flat) {
        if (flat.size() != num_parameters()) throw DimensionError("parameter vector has the wrong length");
        std::size_t k = 0;
        auto take = [&](std::vector<double>& dst) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(k),
                      flat.begin() + static_cast<std::ptrdiff_t>(k + dst.size()), dst.begin());
            k += dst.size();
        };
        for (auto& e : encoder) take(e.data());
        for (auto& d : decoder) take(d.data());
        if (learned_prior) take(prior);
    }

    /// A model of the same shape with every logit zero.
    TabularModel zeros_like() const {
        TabularModel z(alphabet, latent_size, learned_prior);
        return z;
    }

    friend bool operator==(const TabularModel&, const TabularModel&) = default;
};

namespace detail {

inline void log_softmax_inplace(std::span<double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    for (double& x : v) x -= lse;
}

}  // namespace detail

/// Normalized log-probability tables derived from a model's logits.
struct ModelTables {
    std::vector<Matrix> enc_logp;   // log p(z | x_m), rows indexed by x_m
    std::vector<Matrix> dec_logp;   // log q(x_m | z), rows indexed by z
    std::vector<double> log_prior;  // log q(z)

    explicit ModelTables(const TabularModel& model) {
        for (const auto& e : model.encoder) {
            Matrix t = e;
            for (std::size_t r = 0; r < t.rows(); ++r) detail::log_softmax_inplace(t.row(r));
            enc_logp.push_back(std::move(t));
        }
        for (const auto& d : model.decoder) {
            Matrix t = d;
            for (std::size_t r = 0; r < t.rows(); ++r) detail::log_softmax_inplace(t.row(r));
            dec_logp.push_back(std::move(t));
        }
        if (model.learned_prior) {
            log_prior = model.prior;
            detail::log_softmax_inplace(log_prior);
        } else {
            log_prior.assign(static_cast<std::size_t>(model.latent_size),
                             -std::log(static_cast<double>(model.latent_size)));
        }
    }

    std::size_t latent_size() const { return log_prior.size(); }

    /// Product of the unimodal experts in `subset`, normalized; written into `out`.
    void poe(std::span<const int> x, SubsetIndex subset, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (int m : subset.members()) {
            const auto row = enc_logp[m].row(static_cast<std::size_t>(x[m]));
            for (std::size_t z = 0; z < out.size(); ++z) out[z] += row[z];
        }
        detail::log_softmax_inplace(out);
        for (double& v : out) v = std::exp(v);
    }

    /// sum_{m in target} log q(x_m | z)
    double decode_log_likelihood(std::size_t z, std::span<const int> x, SubsetIndex target) const {
        double ll = 0.0;
        for (int m : target.members()) ll += dec_logp[m](z, static_cast<std::size_t>(x[m]));
        return ll;
    }
};

namespace detail {

inline void check_tuple(const TabularModel& model, std::span<const int> x) {
    if (static_cast<int>(x.size()) != model.num_modalities()) throw DimensionError("tuple length mismatch");
    for (int m = 0; m < model.num_modalities(); ++m) {
        if (x[m] < 0 || x[m] >= model.alphabet.size(m)) throw DimensionError("tuple entry out of range");
    }
}

}  // namespace detail

/// p(z | x_A) as the normalized product of the unimodal posteriors in A.
inline std::vector<double> encode_subset(const TabularModel& model, std::span<const int> x, SubsetIndex subset) {
    if (subset.empty()) throw InvalidSubsetError("encoder subset must be non-empty");
    model.alphabet.check_subset(subset);
    detail::check_tuple(model, x);
    const ModelTables tables(model);
    std::vector<double> out(tables.latent_size());
    tables.poe(x, subset, out);
    return out;
}

/// p^S(z | x) = sum_A w_A p(z | x_A).
inline std::vector<double> encode_mixture(const TabularModel& model, std::span<const int> x,
                                          const SubsetMixture& mixture) {
    if (mixture.num_modalities() != model.num_modalities()) throw DimensionError("mixture/model modality mismatch");
    detail::check_tuple(model, x);
    const ModelTables tables(model);
    std::vector<double> out(tables.latent_size(), 0.0);
    std::vector<double> part(tables.latent_size());
    for (const auto& e : mixture) {
        tables.poe(x, e.subset, part);
        for (std::size_t z = 0; z < out.size(); ++z) out[z] += e.weight * part[z];
    }
    return out;
}

inline double decode_log_likelihood(const TabularModel& model, int z, std::span<const int> x, SubsetIndex target) {
    if (z < 0 || z >= model.latent_size) throw DimensionError("latent index out of range");
    model.alphabet.check_subset(target);
    detail::check_tuple(model, x);
    return ModelTables(model).decode_log_likelihood(static_cast<std::size_t>(z), x, target);
}

inline double decode_log_likelihood(const TabularModel& model, int z, std::span<const int> x) {
    return decode_log_likelihood(model, z, x, model.alphabet.all());
}

/// E_{p(x)} log sum_z q(z) prod_m q(x_m | z).
inline double model_log_evidence(const TabularModel& model, const JointDistribution& dist) {
    if (!(model.alphabet == dist.alphabet())) throw DimensionError("model/distribution alphabet mismatch");
    check_budget(saturating_mul(dist.size(), static_cast<std::size_t>(model.latent_size)), "log-evidence");
    const ModelTables t(model);
    const SubsetIndex all = dist.alphabet().all();
    std::vector<double> terms(t.latent_size());
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] == 0.0) continue;
        const auto x = dist.alphabet().tuple(i);
        for (std::size_t z = 0; z < terms.size(); ++z) terms[z] = t.log_prior[z] + t.decode_log_likelihood(z, x, all);
        const double mx = *std::max_element(terms.begin(), terms.end());
        double s = 0.0;
        for (double v : terms) s += std::exp(v - mx);
        total += dist[i] * (mx + std::log(s));
    }
    return total;
}

/// Standard normal draws from mt19937_64 via Box-Muller, so a seed gives the same stream
/// on every standard library.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline constexpr double kDefaultInitScale = 0.1;

/// Logits i.i.d. N(0, scale^2), drawn in flatten() order.
inline TabularModel init_random(const Alphabet& alphabet, int latent_size, std::uint64_t seed,
                                double scale = kDefaultInitScale, bool learned_prior = true) {
    TabularModel model(alphabet, latent_size, learned_prior);
    NormalStream normal(seed);
    std::vector<double> flat(model.num_parameters());
    for (double& v : flat) v = scale * normal();
    model.assign(flat);
    return model;
}

// ---------------------------------------------------------------------------
// Text format
//
//   mmlab-model 1
//   sizes 2 3
//   latent 16
//   prior learned|uniform
//   encoder 1            (|X_1| rows of |Z| values)
//   ...
//   decoder 1            (|Z| rows of |X_1| values)
//   ...
//   prior                (one row of |Z| values, only when learned)
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void write_matrix(std::ostream& os, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? " " : "") << format_double(m(r, c));
        os << "\n";
    }
}

inline void expect_token(std::istream& is, const std::string& want) {
    std::string tok;
    if (!(is >> tok) || tok != want) throw ParseError("expected '" + want + "', got '" + tok + "'");
}

inline double read_number(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw ParseError("unexpected end of model text");
    return parse_double(tok);
}

}  // namespace detail

inline void write_model(std::ostream& os, const TabularModel& model) {
    os << "mmlab-model " << kModelFormatVersion << "\n";
    os << "sizes";
    for (int s : model.alphabet.sizes()) os << ' ' << s;
    os << "\nlatent " << model.latent_size << "\n";
    os << "prior " << (model.learned_prior ? "learned" : "uniform") << "\n";
    for (int m = 0; m < model.num_modalities(); ++m) {
        os << "encoder " << (m + 1) << "\n";
        detail::write_matrix(os, model.encoder[m]);
    }
    for (int m = 0; m < model.num_modalities(); ++m) {
        os << "decoder " << (m + 1) << "\n";
        detail::write_matrix(os, model.decoder[m]);
    }
    if (model.learned_prior) {
        os << "prior\n";
        for (std::size_t z = 0; z < model.prior.size(); ++z) os << (z ? " " : "") << format_double(model.prior[z]);
        os << "\n";
    }
}

inline std::string to_text(const TabularModel& model) {
    std::ostringstream os;
    write_model(os, model);
    return os.str();
}

inline TabularModel read_model(std::istream& is) {
    detail::expect_token(is, "mmlab-model");
    std::string version;
    is >> version;
    if (parse_integer(version) != kModelFormatVersion) throw ParseError("unsupported model version " + version);
    std::string line;
    std::getline(is, line);
    if (!std::getline(is, line)) throw ParseError("missing sizes line");
    std::istringstream ls(line);
    detail::expect_token(ls, "sizes");
    std::vector<int> sizes;
    for (std::string tok; ls >> tok;) sizes.push_back(static_cast<int>(parse_integer(tok)));
    detail::expect_token(is, "latent");
    std::string tok;
    is >> tok;
    const int latent = static_cast<int>(parse_integer(tok));
    detail::expect_token(is, "prior");
    is >> tok;
    if (tok != "learned" && tok != "uniform") throw ParseError("prior must be 'learned' or 'uniform'");
    TabularModel model(Alphabet(std::move(sizes)), latent, tok == "learned");
    for (int m = 0; m < model.num_modalities(); ++m) {
        detail::expect_token(is, "encoder");
        detail::expect_token(is, std::to_string(m + 1));
        for (double& v : model.encoder[m].data()) v = detail::read_number(is);
    }
    for (int m = 0; m < model.num_modalities(); ++m) {
        detail::expect_token(is, "decoder");
        detail::expect_token(is, std::to_string(m + 1));
        for (double& v : model.decoder[m].data()) v = detail::read_number(is);
    }
    if (model.learned_prior) {
        detail::expect_token(is, "prior");
        for (double& v : model.prior) v = detail::read_number(is);
    }
    return model;
}

inline TabularModel model_from_text(const std::string& text) {
    std::istringstream is(text);
    return read_model(is);
}

}  // namespace mmlab

#endif  // MMLAB_MODEL_HPP_
