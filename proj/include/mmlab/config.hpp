#ifndef MMLAB_CONFIG_HPP_
#define MMLAB_CONFIG_HPP_

// Experiment configuration: INI-style "key = value" lines grouped under [section]
// headers. Key names are unique across sections, so every key can also be overridden
// on the command line by a flag of the same name. See docs/config.md.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmlab/core.hpp"
#include "mmlab/datagen.hpp"
#include "mmlab/mixture.hpp"
#include "mmlab/model.hpp"
#include "mmlab/objectives.hpp"

namespace mmlab {

/// Raised for malformed or inconsistent configuration; carries the offending key/line.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class ModalityMode { Distinct, Repeated };

struct ExperimentConfig {
    DatasetSpec dataset{SharedSpecific{2, {2, 2}}};

    std::vector<Family> families{Family::MVAE, Family::MMVAE, Family::MoPoE};
    std::optional<std::string> custom_mixture;  // "{1}:0.5; {2}:0.5"
    int latent_size = kDefaultLatentSize;
    double init_scale = kDefaultInitScale;
    bool learned_prior = true;
    Objective objective = Objective::ElboSub;

    std::vector<double> betas{1.0};
    int steps = 5000;
    double step_size = 0.05;
    double momentum = 0.9;
    std::vector<std::uint64_t> seeds{1};

    int probe_steps = 500;
    double probe_step_size = 1.0;
    std::optional<std::vector<int>> probe_subset;  // 1-based; empty optional = all modalities

    std::vector<int> modalities{2, 3, 4, 5};
    ModalityMode modality_mode = ModalityMode::Distinct;
    int max_modalities = 6;

    std::string experiment = "experiment";
    std::string out;  // empty = stdout
    std::string format = "csv";
    int jobs = 1;
    bool wall_time = false;
};

/// Section of every recognised key.
inline const std::map<std::string, std::string, std::less<>>& config_keys() {
    static const std::map<std::string, std::string, std::less<>> keys = {
        {"variant", "dataset"},      {"classes", "dataset"},       {"noise_sizes", "dataset"},
        {"eps", "dataset"},          {"base", "dataset"},          {"copies", "dataset"},
        {"families", "model"},       {"mixture", "model"},         {"latent_size", "model"},
        {"init_scale", "model"},     {"prior", "model"},           {"objective", "model"},
        {"betas", "train"},          {"steps", "train"},           {"step_size", "train"},
        {"momentum", "train"},       {"seeds", "train"},           {"probe_steps", "probe"},
        {"probe_step_size", "probe"}, {"probe_subset", "probe"},   {"modalities", "sweep"},
        {"modality_mode", "sweep"},  {"max_modalities", "sweep"},  {"experiment", "output"},
        {"out", "output"},           {"format", "output"},         {"jobs", "output"},
        {"wall_time", "output"},
    };
    return keys;
}

/// Raw key/value pairs with the source location used in diagnostics.
struct ConfigEntry {
    std::string value;
    std::string origin;  // "file:line" or "--flag"
};

using RawConfig = std::map<std::string, ConfigEntry, std::less<>>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

}  // namespace detail

inline RawConfig parse_config_text(std::string_view text, const std::string& source = "config") {
    RawConfig raw;
    std::string section;
    std::istringstream is{std::string(text)};
    std::string line;
    for (int lineno = 1; std::getline(is, line); ++lineno) {
        const std::string where = source + ":" + std::to_string(lineno);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header");
            section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
            static const std::set<std::string> sections = {"dataset", "model", "train", "probe", "sweep", "output"};
            if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        const auto it = config_keys().find(key);
        if (it == config_keys().end()) throw ConfigError(where + ": unknown key '" + key + "'");
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
        if (it->second != section) {
            throw ConfigError(where + ": key '" + key + "' belongs in [" + it->second + "], not [" + section + "]");
        }
        if (raw.count(key)) throw ConfigError(where + ": key '" + key + "' set twice");
        raw[key] = {value, where};
    }
    return raw;
}

inline RawConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

/// Applies `--key value` overrides on top of file values.
inline void apply_overrides(RawConfig& raw, const std::map<std::string, std::string>& overrides) {
    for (const auto& [key, value] : overrides) {
        if (!config_keys().count(key)) throw ConfigError("--" + key + ": unknown key");
        raw[key] = {value, "--" + key};
    }
}

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(const RawConfig& raw) : raw_(raw) {}

    bool has(std::string_view key) const { return raw_.find(key) != raw_.end(); }

    template <class F>
    auto get(std::string_view key, F&& convert) const {
        const auto& e = raw_.find(key)->second;
        try {
            return convert(e.value);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& err) {
            throw ConfigError(e.origin + ": " + std::string(key) + ": " + err.what());
        }
    }

    [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
        const auto it = raw_.find(key);
        const std::string where = it == raw_.end() ? std::string("config") : it->second.origin;
        throw ConfigError(where + ": " + std::string(key) + ": " + msg);
    }

private:
    const RawConfig& raw_;
};

inline int to_int(const std::string& s) { return static_cast<int>(parse_integer(s)); }

inline std::vector<int> to_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& tok : split_list(s)) out.push_back(to_int(tok));
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

inline std::vector<double> to_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split_list(s)) out.push_back(parse_double(tok));
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

inline bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ValidationError("expected true/false, got '" + s + "'");
}

template <class T>
bool has_duplicates(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace detail

/// Validates raw values into an ExperimentConfig. Every error names its key and origin.
inline ExperimentConfig build_config(const RawConfig& raw) {
    detail::ConfigReader r(raw);
    ExperimentConfig cfg;

    // dataset
    const std::string variant = r.has("variant") ? r.get("variant", [](const std::string& s) { return s; })
                                                 : std::string("shared_specific");
    const int classes = r.has("classes") ? r.get("classes", detail::to_int) : 2;
    auto read_noise = [&] {
        return r.has("noise_sizes") ? r.get("noise_sizes", detail::to_int_list) : std::vector<int>{2, 2};
    };
    auto read_eps = [&] {
        if (!r.has("eps")) r.fail("eps", "required for noisy_shared datasets");
        return r.get("eps", detail::to_double_list);
    };
    auto reject = [&](std::string_view key, const std::string& why) {
        if (r.has(key)) r.fail(key, why);
    };
    if (variant == "shared_specific") {
        reject("eps", "only valid for noisy_shared");
        reject("base", "only valid for repeated");
        reject("copies", "only valid for repeated");
        cfg.dataset.variant = SharedSpecific{classes, read_noise()};
    } else if (variant == "noisy_shared") {
        reject("noise_sizes", "only valid for shared_specific");
        reject("base", "only valid for repeated");
        reject("copies", "only valid for repeated");
        cfg.dataset.variant = NoisyShared{classes, read_eps()};
    } else if (variant == "repeated") {
        const std::string base = r.has("base") ? r.get("base", [](const std::string& s) { return s; })
                                               : std::string("shared_specific");
        const int copies = r.has("copies") ? r.get("copies", detail::to_int) : 2;
        Repeated rep;
        rep.copies = copies;
        if (base == "shared_specific") {
            reject("eps", "only valid for a noisy_shared base");
            rep.base = SharedSpecific{classes, r.has("noise_sizes") ? read_noise() : std::vector<int>{1}};
        } else if (base == "noisy_shared") {
            reject("noise_sizes", "only valid for a shared_specific base");
            rep.base = NoisyShared{classes, read_eps()};
        } else {
            r.fail("base", "expected shared_specific or noisy_shared");
        }
        cfg.dataset.variant = rep;
    } else {
        r.fail("variant", "expected shared_specific, noisy_shared or repeated");
    }
    try {
        validate(cfg.dataset);
    } catch (const Error& e) {
        r.fail("variant", e.what());
    }

    // model
    if (r.has("families") && r.has("mixture")) r.fail("mixture", "set either families or mixture, not both");
    if (r.has("families")) {
        cfg.families.clear();
        for (const auto& tok : detail::split_list(raw.find("families")->second.value)) {
            cfg.families.push_back(r.get("families", [&](const std::string&) { return parse_family(tok); }));
        }
        if (cfg.families.empty()) r.fail("families", "empty list");
        if (detail::has_duplicates(cfg.families)) r.fail("families", "duplicate family");
        std::sort(cfg.families.begin(), cfg.families.end());
    }
    if (r.has("mixture")) {
        cfg.custom_mixture = raw.find("mixture")->second.value;
        cfg.families.clear();
        const int M = num_modalities(cfg.dataset);
        r.get("mixture", [&](const std::string& s) { return parse_mixture(M, s); });
    }
    if (r.has("latent_size")) cfg.latent_size = r.get("latent_size", detail::to_int);
    if (cfg.latent_size < 1) r.fail("latent_size", "must be >= 1");
    if (r.has("init_scale")) cfg.init_scale = r.get("init_scale", parse_double);
    if (!(cfg.init_scale >= 0.0)) r.fail("init_scale", "must be >= 0");
    if (r.has("prior")) {
        const std::string p = raw.find("prior")->second.value;
        if (p == "learned") cfg.learned_prior = true;
        else if (p == "uniform") cfg.learned_prior = false;
        else r.fail("prior", "expected learned or uniform");
    }
    if (r.has("objective")) cfg.objective = r.get("objective", [](const std::string& s) { return parse_objective(s); });

    // train
    if (r.has("betas")) cfg.betas = r.get("betas", detail::to_double_list);
    for (double b : cfg.betas) {
        if (!(b > 0.0) || !std::isfinite(b)) r.fail("betas", "every beta must be > 0");
    }
    if (detail::has_duplicates(cfg.betas)) r.fail("betas", "duplicate beta value");
    if (r.has("steps")) cfg.steps = r.get("steps", detail::to_int);
    if (cfg.steps < 0) r.fail("steps", "must be >= 0");
    if (r.has("step_size")) cfg.step_size = r.get("step_size", parse_double);
    if (!(cfg.step_size > 0.0)) r.fail("step_size", "must be > 0");
    if (r.has("momentum")) cfg.momentum = r.get("momentum", parse_double);
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) r.fail("momentum", "must lie in [0,1)");
    if (r.has("seeds")) {
        cfg.seeds.clear();
        for (int s : r.get("seeds", detail::to_int_list)) {
            if (s < 0) r.fail("seeds", "seeds must be >= 0");
            cfg.seeds.push_back(static_cast<std::uint64_t>(s));
        }
    }
    if (detail::has_duplicates(cfg.seeds)) r.fail("seeds", "duplicate seed");

    // probe
    if (r.has("probe_steps")) cfg.probe_steps = r.get("probe_steps", detail::to_int);
    if (cfg.probe_steps < 0) r.fail("probe_steps", "must be >= 0");
    if (r.has("probe_step_size")) cfg.probe_step_size = r.get("probe_step_size", parse_double);
    if (!(cfg.probe_step_size > 0.0)) r.fail("probe_step_size", "must be > 0");
    if (r.has("probe_subset")) {
        const std::string v = raw.find("probe_subset")->second.value;
        if (v != "all") {
            cfg.probe_subset = r.get("probe_subset", detail::to_int_list);
            if (detail::has_duplicates(*cfg.probe_subset)) r.fail("probe_subset", "duplicate modality");
            for (int m : *cfg.probe_subset) {
                if (m < 1) r.fail("probe_subset", "modalities are 1-based");
            }
        }
    }

    // sweep
    if (r.has("max_modalities")) cfg.max_modalities = r.get("max_modalities", detail::to_int);
    if (cfg.max_modalities < 1) r.fail("max_modalities", "must be >= 1");
    if (r.has("modalities")) cfg.modalities = r.get("modalities", detail::to_int_list);
    for (int m : cfg.modalities) {
        if (m < 1) r.fail("modalities", "every M must be >= 1");
    }
    if (detail::has_duplicates(cfg.modalities)) r.fail("modalities", "duplicate M");
    std::sort(cfg.modalities.begin(), cfg.modalities.end());
    if (r.has("modality_mode")) {
        const std::string v = raw.find("modality_mode")->second.value;
        if (v == "distinct") cfg.modality_mode = ModalityMode::Distinct;
        else if (v == "repeated") cfg.modality_mode = ModalityMode::Repeated;
        else r.fail("modality_mode", "expected distinct or repeated");
    }

    // output
    if (r.has("experiment")) cfg.experiment = raw.find("experiment")->second.value;
    if (cfg.experiment.empty() || cfg.experiment.find_first_of(",\"\n") != std::string::npos) {
        r.fail("experiment", "must be non-empty without commas or quotes");
    }
    if (r.has("out")) cfg.out = raw.find("out")->second.value;
    if (r.has("format")) cfg.format = raw.find("format")->second.value;
    if (cfg.format != "csv" && cfg.format != "json") r.fail("format", "expected csv or json");
    if (r.has("jobs")) cfg.jobs = r.get("jobs", detail::to_int);
    if (cfg.jobs < 1) r.fail("jobs", "must be >= 1");
    if (r.has("wall_time")) cfg.wall_time = r.get("wall_time", detail::to_bool);
    return cfg;
}

inline ExperimentConfig parse_config(std::string_view text) { return build_config(parse_config_text(text)); }

}  // namespace mmlab

#endif  // MMLAB_CONFIG_HPP_
