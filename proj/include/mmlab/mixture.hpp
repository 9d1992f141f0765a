#ifndef MMLAB_MIXTURE_HPP_
#define MMLAB_MIXTURE_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmlab/core.hpp"

namespace mmlab {

enum class Family { MVAE, MMVAE, MoPoE };

inline std::string_view to_string(Family f) {
    switch (f) {
        case Family::MVAE: return "mvae";
        case Family::MMVAE: return "mmvae";
        case Family::MoPoE: return "mopoe";
    }
    return "?";
}

inline Family parse_family(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "mvae") return Family::MVAE;
    if (lower == "mmvae") return Family::MMVAE;
    if (lower == "mopoe") return Family::MoPoE;
    throw ParseError("unknown mixture family '" + std::string(s) + "'");
}

struct MixtureEntry {
    SubsetIndex subset;
    double weight = 0.0;

    friend bool operator==(const MixtureEntry&, const MixtureEntry&) = default;
};

/// Default cap on the number of subsets a preset may enumerate.
inline constexpr std::size_t kDefaultMaxSubsets = 4095;

/// Weighted set of non-empty modality subsets, kept in ascending mask order.
class SubsetMixture {
public:
    SubsetMixture() = default;

    /// Validates and canonicalizes. Weight sums off by at most the renormalization
    /// tolerance are rescaled and flagged; anything larger is rejected.
    static SubsetMixture custom(int num_modalities, std::vector<MixtureEntry> entries) {
        if (num_modalities < 1 || num_modalities > kMaxModalities) {
            throw ValidationError("mixture needs 1.." + std::to_string(kMaxModalities) + " modalities");
        }
        if (entries.empty()) throw ValidationError("mixture has no subsets");
        const SubsetIndex all = SubsetIndex::full(num_modalities);
        double total = 0.0;
        for (const auto& e : entries) {
            if (e.subset.empty()) throw ValidationError("mixture subsets must be non-empty");
            if (!all.includes(e.subset)) {
                throw InvalidSubsetError("subset " + e.subset.to_string() + " exceeds " +
                                         std::to_string(num_modalities) + " modalities");
            }
            if (!(e.weight >= 0.0 && e.weight <= 1.0)) throw ValidationError("mixture weights must lie in [0,1]");
            total += e.weight;
        }
        std::sort(entries.begin(), entries.end(),
                  [](const MixtureEntry& a, const MixtureEntry& b) { return a.subset < b.subset; });
        for (std::size_t i = 1; i < entries.size(); ++i) {
            if (entries[i].subset == entries[i - 1].subset) {
                throw ValidationError("duplicate subset " + entries[i].subset.to_string());
            }
        }
        SubsetMixture s;
        s.num_modalities_ = num_modalities;
        const double off = std::abs(total - 1.0);
        if (off > tolerances().renormalize) {
            throw ValidationError("mixture weights sum to " + format_double(total) + ", expected 1");
        }
        if (off > tolerances().normalization) {
            for (auto& e : entries) e.weight /= total;
            s.renormalized_ = true;
        }
        s.entries_ = std::move(entries);
        return s;
    }

    static SubsetMixture preset(Family family, int num_modalities, std::size_t max_subsets = kDefaultMaxSubsets) {
        if (num_modalities < 1) throw ValidationError("preset needs M >= 1");
        if (num_modalities > kMaxModalities - 1) throw CapacityError("too many modalities for a preset");
        std::vector<SubsetIndex> subsets;
        switch (family) {
            case Family::MVAE:
                subsets.push_back(SubsetIndex::full(num_modalities));
                break;
            case Family::MMVAE:
                for (int m = 0; m < num_modalities; ++m) subsets.push_back(SubsetIndex::single(m));
                break;
            case Family::MoPoE: {
                const std::size_t count = (std::size_t{1} << num_modalities) - 1;
                if (count > max_subsets) {
                    throw CapacityError("MoPoE with M=" + std::to_string(num_modalities) + " needs " +
                                        std::to_string(count) + " subsets, cap is " +
                                        std::to_string(max_subsets));
                }
                for (std::uint32_t mask = 1; mask <= count; ++mask) subsets.emplace_back(mask);
                break;
            }
        }
        SubsetMixture s;
        s.num_modalities_ = num_modalities;
        s.family_ = family;
        const double w = 1.0 / static_cast<double>(subsets.size());
        for (SubsetIndex a : subsets) s.entries_.push_back({a, w});
        std::sort(s.entries_.begin(), s.entries_.end(),
                  [](const MixtureEntry& a, const MixtureEntry& b) { return a.subset < b.subset; });
        return s;
    }

    int num_modalities() const { return num_modalities_; }
    const std::vector<MixtureEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    /// Set when construction rescaled near-miss weights.
    bool renormalized() const { return renormalized_; }
    /// Family the mixture was built from, if it is a preset.
    std::optional<Family> family() const { return family_; }

    bool contains(SubsetIndex a) const { return weight_of(a).has_value(); }

    std::optional<double> weight_of(SubsetIndex a) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), a,
                                   [](const MixtureEntry& e, SubsetIndex s) { return e.subset < s; });
        if (it != entries_.end() && it->subset == a) return it->weight;
        return std::nullopt;
    }

    std::string to_string() const {
        std::string out;
        for (const auto& e : entries_) {
            if (!out.empty()) out += "; ";
            out += e.subset.to_string() + ":" + format_double(e.weight);
        }
        return out;
    }

    friend bool operator==(const SubsetMixture& a, const SubsetMixture& b) {
        return a.num_modalities_ == b.num_modalities_ && a.entries_ == b.entries_;
    }

private:
    int num_modalities_ = 0;
    std::vector<MixtureEntry> entries_;
    bool renormalized_ = false;
    std::optional<Family> family_;
};

/// The mixture at M modalities and its counterpart after adding modality M+1.
inline std::pair<SubsetMixture, SubsetMixture> extend(Family family, int num_modalities,
                                                      std::size_t max_subsets = kDefaultMaxSubsets) {
    if (family == Family::MVAE) throw UnsupportedError("extension is defined for MMVAE and MoPoE only");
    return {SubsetMixture::preset(family, num_modalities, max_subsets),
            SubsetMixture::preset(family, num_modalities + 1, max_subsets)};
}

/// Parses "{1}:0.3; {1,2}:0.7" with 1-based modality indices.
inline SubsetMixture parse_mixture(int num_modalities, std::string_view text) {
    std::vector<MixtureEntry> entries;
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == ';')) ++pos;
    };
    skip_ws();
    while (pos < text.size()) {
        if (text[pos] != '{') throw ParseError("expected '{' in mixture at offset " + std::to_string(pos));
        const auto close = text.find('}', pos);
        if (close == std::string_view::npos) throw ParseError("unterminated subset in mixture");
        SubsetIndex subset;
        std::string_view body = text.substr(pos + 1, close - pos - 1);
        while (!body.empty()) {
            const auto comma = body.find(',');
            const auto tok = body.substr(0, comma);
            const long long m = parse_integer(tok);
            if (m < 1 || m > num_modalities) {
                throw InvalidSubsetError("modality " + std::to_string(m) + " outside 1.." +
                                         std::to_string(num_modalities));
            }
            subset = subset.with(static_cast<int>(m - 1));
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        pos = close + 1;
        while (pos < text.size() && text[pos] == ' ') ++pos;
        if (pos >= text.size() || text[pos] != ':') throw ParseError("expected ':weight' after subset");
        ++pos;
        auto end = text.find(';', pos);
        if (end == std::string_view::npos) end = text.size();
        entries.push_back({subset, parse_double(text.substr(pos, end - pos))});
        pos = end;
        skip_ws();
    }
    return SubsetMixture::custom(num_modalities, std::move(entries));
}

}  // namespace mmlab

#endif  // MMLAB_MIXTURE_HPP_
