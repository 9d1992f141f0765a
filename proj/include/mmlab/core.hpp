#ifndef MMLAB_CORE_HPP_
#define MMLAB_CORE_HPP_

#include <atomic>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mmlab {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSubsetError : public Error { public: using Error::Error; };
class OverlapError : public Error { public: using Error::Error; };
class SupportMismatchError : public Error { public: using Error::Error; };
class AbsoluteContinuityError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class DimensionError : public Error { public: using Error::Error; };
class UnsupportedError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };

/// Raised when an instance would need more dense cells than the enumeration cap.
class BudgetError : public Error { public: using Error::Error; };

// ---------------------------------------------------------------------------
// Tolerances and limits
// ---------------------------------------------------------------------------

struct Tolerances {
    double normalization = 1e-12;
    double identity = 1e-10;
    double bound = 1e-9;
    double renormalize = 1e-9;  // mixture weights within this are renormalized with a warning
};

inline Tolerances& tolerances() {
    static Tolerances tol;
    return tol;
}

namespace detail {

inline std::atomic<std::size_t>& cap_storage(std::size_t fallback) {
    static std::atomic<std::size_t> cap{[fallback] {
        if (const char* env = std::getenv("MMLAB_MAX_CELLS")) {
            std::size_t v = 0;
            std::string_view s{env};
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec == std::errc{} && p == s.data() + s.size() && v > 0) return v;
        }
        return fallback;
    }()};
    return cap;
}

}  // namespace detail

inline constexpr std::size_t kDefaultMaxCells = 10'000'000;

/// Largest dense table the library will enumerate. MMLAB_MAX_CELLS overrides the default.
inline std::size_t enumeration_cap() { return detail::cap_storage(kDefaultMaxCells).load(); }
inline void set_enumeration_cap(std::size_t cap) { detail::cap_storage(kDefaultMaxCells).store(cap); }

inline void check_budget(std::size_t cells, std::string_view what) {
    if (cells > enumeration_cap()) {
        throw BudgetError(std::string(what) + " needs " + std::to_string(cells) +
                          " cells, cap is " + std::to_string(enumeration_cap()));
    }
}

/// Multiply two sizes, returning SIZE_MAX on overflow.
inline std::size_t saturating_mul(std::size_t a, std::size_t b) {
    if (a != 0 && b > SIZE_MAX / a) return SIZE_MAX;
    return a * b;
}

// ---------------------------------------------------------------------------
// Subsets of modalities
// ---------------------------------------------------------------------------

inline constexpr int kMaxModalities = 32;

/// A set of modality indices stored as a bitmask; modality m is bit m (0-based).
class SubsetIndex {
public:
    constexpr SubsetIndex() = default;
    constexpr explicit SubsetIndex(std::uint32_t mask) : mask_(mask) {}

    static SubsetIndex of(std::initializer_list<int> modalities) {
        SubsetIndex s;
        for (int m : modalities) s = s.with(m);
        return s;
    }
    static constexpr SubsetIndex full(int num_modalities) {
        return SubsetIndex(num_modalities >= kMaxModalities
                               ? ~std::uint32_t{0}
                               : ((std::uint32_t{1} << num_modalities) - 1));
    }
    static constexpr SubsetIndex single(int m) { return SubsetIndex(std::uint32_t{1} << m); }

    constexpr std::uint32_t mask() const { return mask_; }
    constexpr bool empty() const { return mask_ == 0; }
    constexpr int size() const { return std::popcount(mask_); }
    constexpr bool contains(int m) const { return (mask_ >> m) & 1u; }
    constexpr bool includes(SubsetIndex o) const { return (o.mask_ & ~mask_) == 0; }
    constexpr bool disjoint(SubsetIndex o) const { return (mask_ & o.mask_) == 0; }

    SubsetIndex with(int m) const {
        if (m < 0 || m >= kMaxModalities) throw InvalidSubsetError("modality index out of range");
        return SubsetIndex(mask_ | (std::uint32_t{1} << m));
    }
    constexpr SubsetIndex operator|(SubsetIndex o) const { return SubsetIndex(mask_ | o.mask_); }
    constexpr SubsetIndex operator&(SubsetIndex o) const { return SubsetIndex(mask_ & o.mask_); }
    constexpr SubsetIndex minus(SubsetIndex o) const { return SubsetIndex(mask_ & ~o.mask_); }
    constexpr SubsetIndex complement(int num_modalities) const { return full(num_modalities).minus(*this); }

    /// Ascending list of member indices.
    std::vector<int> members() const {
        std::vector<int> out;
        for (std::uint32_t m = mask_; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
        return out;
    }

    /// Human form with 1-based indices, e.g. "{1,3}".
    std::string to_string() const {
        std::string s = "{";
        bool first = true;
        for (int m : members()) {
            if (!first) s += ',';
            s += std::to_string(m + 1);
            first = false;
        }
        return s + "}";
    }

    friend constexpr bool operator==(SubsetIndex, SubsetIndex) = default;
    friend constexpr auto operator<=>(SubsetIndex a, SubsetIndex b) { return a.mask_ <=> b.mask_; }

private:
    std::uint32_t mask_ = 0;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles
// ---------------------------------------------------------------------------

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw DimensionError("matrix data has the wrong length");
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Number formatting (locale-free, round-trippable)
// ---------------------------------------------------------------------------

/// 17 significant digits, '.' decimal point, independent of the C locale.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (ec != std::errc{}) throw Error("failed to format number");
    return std::string(buf, p);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        throw ParseError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline long long parse_integer(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        throw ParseError("not an integer: '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace mmlab

#endif  // MMLAB_CORE_HPP_
