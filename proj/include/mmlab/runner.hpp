#ifndef MMLAB_RUNNER_HPP_
#define MMLAB_RUNNER_HPP_

// Experiment runner behind the command-line tool: dataset summaries, bound audits,
// beta sweeps and number-of-modalities sweeps, with CSV/JSON serialization.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mmlab/config.hpp"
#include "mmlab/datagen.hpp"
#include "mmlab/discrepancy.hpp"
#include "mmlab/info.hpp"
#include "mmlab/metrics.hpp"
#include "mmlab/mixture.hpp"
#include "mmlab/model.hpp"
#include "mmlab/objectives.hpp"

namespace mmlab {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int {
    kExitOk = 0,
    kExitError = 1,
    kExitConfig = 2,
    kExitBudget = 3,
    kExitAuditFailure = 4,
};

/// Runs `count` independent jobs on up to `jobs` threads. Results land at their own index,
/// so output order never depends on scheduling. The first exception is rethrown.
template <class Result>
std::vector<Result> run_jobs(std::size_t count, int jobs, const std::function<Result(std::size_t)>& fn) {
    std::vector<std::optional<Result>> slots(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                slots[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<Result> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// A mixture to evaluate, with the label used in reports.
struct NamedMixture {
    std::string label;  // mvae / mmvae / mopoe / custom
    int order = 0;      // canonical sort position
    SubsetMixture mixture;
};

inline std::vector<NamedMixture> mixtures_for(const ExperimentConfig& cfg, int num_modalities) {
    std::vector<NamedMixture> out;
    if (cfg.custom_mixture) {
        out.push_back({"custom", 3, parse_mixture(num_modalities, *cfg.custom_mixture)});
        return out;
    }
    for (Family f : cfg.families) {
        out.push_back({std::string(to_string(f)), static_cast<int>(f), SubsetMixture::preset(f, num_modalities)});
    }
    return out;
}

inline SubsetIndex probe_subset_for(const ExperimentConfig& cfg, int num_modalities) {
    if (!cfg.probe_subset) return SubsetIndex::full(num_modalities);
    SubsetIndex s;
    for (int m : *cfg.probe_subset) {
        if (m > num_modalities) {
            throw ConfigError("probe_subset: modality " + std::to_string(m) + " exceeds M = " +
                              std::to_string(num_modalities));
        }
        s = s.with(m - 1);
    }
    return s;
}

// ---------------------------------------------------------------------------
// info
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json info_json(const ExperimentConfig& cfg) {
    const JointDistribution dist = build_joint(cfg.dataset);
    const int M = dist.num_modalities();
    const SubsetIndex all = dist.alphabet().all();
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "info";
    j["experiment"] = cfg.experiment;
    j["dataset"] = describe(cfg.dataset);
    j["sizes"] = dist.alphabet().sizes();
    j["classes"] = num_classes(cfg.dataset);
    j["entropy"] = entropy(dist, all);
    j["neg_entropy"] = data_log_evidence(dist);
    auto mi = nlohmann::ordered_json::array();
    for (int a = 0; a < M; ++a) {
        for (int b = a + 1; b < M; ++b) {
            mi.push_back({{"a", a + 1},
                          {"b", b + 1},
                          {"value", mutual_information(dist, SubsetIndex::single(a), SubsetIndex::single(b))}});
        }
    }
    j["pairwise_mi"] = mi;
    nlohmann::ordered_json deltas;
    nlohmann::ordered_json closed;
    const bool has_closed = std::holds_alternative<SharedSpecific>(cfg.dataset.variant);
    for (Family f : {Family::MVAE, Family::MMVAE, Family::MoPoE}) {
        const std::string key(to_string(f));
        try {
            const auto S = SubsetMixture::preset(f, M);
            deltas[key] = delta(dist, S).total;
            if (has_closed) closed[key] = closed_form_delta(cfg.dataset, S);
        } catch (const CapacityError&) {
            deltas[key] = nullptr;
            if (has_closed) closed[key] = nullptr;
        }
    }
    if (cfg.custom_mixture) {
        const auto S = parse_mixture(M, *cfg.custom_mixture);
        deltas["custom"] = delta(dist, S).total;
        if (has_closed) closed["custom"] = closed_form_delta(cfg.dataset, S);
    }
    j["delta"] = deltas;
    if (has_closed) j["closed_form_delta"] = closed;
    return j;
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const BoundAudit& a) {
    nlohmann::ordered_json j;
    j["beta"] = a.beta;
    j["data_log_evidence"] = a.data_log_evidence;
    j["elbo_full"] = a.elbo_full;
    j["elbo_sub"] = a.elbo_sub;
    j["tightness_gap"] = a.tightness_gap;
    j["mixture_kl"] = a.mixture_kl;
    j["delta"] = a.delta;
    j["slack_theorem"] = a.slack_theorem;
    j["checks"] = {{"sub_below_full", a.sub_below_full},
                   {"full_below_evidence", a.full_below_evidence},
                   {"theorem_holds", a.theorem_holds},
                   {"gap_matches_kl", a.gap_matches_kl}};
    j["passed"] = a.passed();
    return j;
}

inline nlohmann::ordered_json to_json(const DeltaReport& d) {
    nlohmann::ordered_json j;
    j["total"] = d.total;
    auto terms = nlohmann::ordered_json::array();
    for (const auto& t : d.per_subset) {
        terms.push_back({{"subset", t.subset.to_string()}, {"weight", t.weight}, {"conditional_entropy", t.conditional_entropy}});
    }
    j["per_subset"] = terms;
    return j;
}

inline nlohmann::ordered_json to_json(const Corollary2Report& r) {
    nlohmann::ordered_json j;
    j["family"] = std::string(to_string(r.family));
    j["M"] = r.num_modalities;
    j["delta_M"] = r.delta_M;
    j["delta_M_plus"] = r.delta_M_plus;
    j["shared_term"] = r.shared_term;
    j["specific_terms"] = {r.specific_terms[0], r.specific_terms[1]};
    j["difference_direct"] = r.difference_direct;
    j["difference_decomposed"] = r.difference_decomposed;
    j["increases"] = r.increases;
    j["displayed_condition"] = r.displayed_condition;
    return j;
}

struct AuditOutcome {
    nlohmann::ordered_json report;
    int failures = 0;
};

/// Audits every (seed, mixture) at random init and after training at beta = 1.
inline AuditOutcome run_audit(const ExperimentConfig& cfg) {
    const JointDistribution dist = build_joint(cfg.dataset);
    const int M = dist.num_modalities();
    const auto mixtures = mixtures_for(cfg, M);
    struct Point {
        std::size_t mixture;
        std::uint64_t seed;
    };
    std::vector<Point> points;
    for (std::size_t k = 0; k < mixtures.size(); ++k) {
        for (auto seed : cfg.seeds) points.push_back({k, seed});
    }
    std::sort(points.begin(), points.end(), [&](const Point& a, const Point& b) {
        return std::tie(mixtures[a.mixture].order, a.seed) < std::tie(mixtures[b.mixture].order, b.seed);
    });
    using Pair = std::pair<BoundAudit, BoundAudit>;
    const auto audits = run_jobs<Pair>(points.size(), cfg.jobs, [&](std::size_t i) {
        const auto& nm = mixtures[points[i].mixture];
        const TabularModel init = init_random(dist.alphabet(), cfg.latent_size, points[i].seed, cfg.init_scale,
                                              cfg.learned_prior);
        TrainOptions opt{cfg.objective, 1.0, cfg.steps, cfg.step_size, cfg.momentum};
        const auto traj = train(init, dist, nm.mixture, opt);
        if (traj.aborted) throw Error("training aborted: " + traj.diagnostic);
        return Pair{bound_audit(init, dist, nm.mixture), bound_audit(traj.model, dist, nm.mixture)};
    });

    AuditOutcome out;
    auto& j = out.report;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "audit";
    j["experiment"] = cfg.experiment;
    j["dataset"] = describe(cfg.dataset);
    j["tolerance"] = tolerances().bound;
    auto list = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& nm = mixtures[points[i].mixture];
        for (int stage = 0; stage < 2; ++stage) {
            const BoundAudit& a = stage == 0 ? audits[i].first : audits[i].second;
            nlohmann::ordered_json e;
            e["seed"] = points[i].seed;
            e["family"] = nm.label;
            e["mixture"] = nm.mixture.to_string();
            e["stage"] = stage == 0 ? "init" : "trained";
            e["audit"] = to_json(a);
            if (!a.passed()) ++out.failures;
            list.push_back(std::move(e));
        }
    }
    j["audits"] = list;
    j["failures"] = out.failures;
    return out;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string experiment;
    std::uint64_t seed = 0;
    double beta = 1.0;
    int num_modalities = 0;
    std::string family;
    int family_order = 0;
    std::string objective;
    double objective_value = 0.0;  // trained objective at its beta
    double elbo_sub = 0.0;         // at beta = 1
    double elbo_full = 0.0;        // at beta = 1
    double delta = 0.0;
    double neg_entropy = 0.0;
    double slack_theorem = 0.0;
    double tightness_gap = 0.0;
    std::optional<double> coherence;  // absent when M = 1
    double linear_accuracy = 0.0;
    double log_evidence = 0.0;
    std::optional<double> wall_time;
};

inline SweepRow evaluate_point(const ExperimentConfig& cfg, const DatasetSpec& spec, const NamedMixture& nm,
                               double beta, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const JointDistribution dist = build_joint(spec);
    const int M = dist.num_modalities();
    const TabularModel init = init_random(dist.alphabet(), cfg.latent_size, seed, cfg.init_scale, cfg.learned_prior);
    TrainOptions opt{cfg.objective, beta, cfg.steps, cfg.step_size, cfg.momentum};
    const auto traj = train(init, dist, nm.mixture, opt);
    if (traj.aborted) throw Error("training aborted: " + traj.diagnostic);
    const TabularModel& model = traj.model;

    SweepRow row;
    row.experiment = cfg.experiment;
    row.seed = seed;
    row.beta = beta;
    row.num_modalities = M;
    row.family = nm.label;
    row.family_order = nm.order;
    row.objective = std::string(to_string(cfg.objective));
    row.objective_value = evaluate_objective(cfg.objective, model, dist, nm.mixture, beta);
    const BoundAudit a = bound_audit(model, dist, nm.mixture);
    row.elbo_sub = a.elbo_sub;
    row.elbo_full = a.elbo_full;
    row.delta = a.delta;
    row.neg_entropy = a.data_log_evidence;
    row.slack_theorem = a.slack_theorem;
    row.tightness_gap = a.tightness_gap;
    if (M >= 2) row.coherence = loo_coherence(model, dist, spec).average;
    row.linear_accuracy = latent_linear_classification(model, dist, spec, probe_subset_for(cfg, M),
                                                       {cfg.probe_steps, cfg.probe_step_size});
    row.log_evidence = model_log_evidence(model, dist);
    if (cfg.wall_time) {
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return row;
}

/// One row per (family, beta, seed), sorted in that order.
inline std::vector<SweepRow> sweep_beta(const ExperimentConfig& cfg) {
    const int M = num_modalities(cfg.dataset);
    const auto mixtures = mixtures_for(cfg, M);
    std::vector<double> betas = cfg.betas;
    std::sort(betas.begin(), betas.end());
    std::vector<std::uint64_t> seeds = cfg.seeds;
    std::sort(seeds.begin(), seeds.end());
    struct Point {
        std::size_t mixture;
        double beta;
        std::uint64_t seed;
    };
    std::vector<Point> points;
    for (std::size_t k = 0; k < mixtures.size(); ++k) {
        for (double b : betas) {
            for (auto s : seeds) points.push_back({k, b, s});
        }
    }
    return run_jobs<SweepRow>(points.size(), cfg.jobs, [&](std::size_t i) {
        return evaluate_point(cfg, cfg.dataset, mixtures[points[i].mixture], points[i].beta, points[i].seed);
    });
}

/// The configured dataset at M modalities, in distinct-noise or repeated-modality mode.
inline DatasetSpec dataset_at(const ExperimentConfig& cfg, int M) {
    if (cfg.modality_mode == ModalityMode::Distinct || std::holds_alternative<Repeated>(cfg.dataset.variant)) {
        return with_modalities(cfg.dataset, M);
    }
    const DatasetSpec one = with_modalities(cfg.dataset, 1);
    Repeated rep;
    if (const auto* s = std::get_if<SharedSpecific>(&one.variant)) rep.base = *s;
    else rep.base = std::get<NoisyShared>(one.variant);
    rep.copies = M;
    return DatasetSpec{rep};
}

/// One row per (family, M, beta, seed), sorted in that order.
inline std::vector<SweepRow> sweep_modalities(const ExperimentConfig& cfg) {
    for (int M : cfg.modalities) {
        if (M > cfg.max_modalities) {
            throw BudgetError("M = " + std::to_string(M) + " exceeds max_modalities = " +
                              std::to_string(cfg.max_modalities));
        }
    }
    struct Point {
        int order;
        int M;
        double beta;
        std::uint64_t seed;
        NamedMixture mixture;
        DatasetSpec spec;
    };
    std::vector<Point> points;
    for (int M : cfg.modalities) {
        const DatasetSpec spec = dataset_at(cfg, M);
        check_budget(alphabet_of(spec).cells(), "dataset");
        for (auto& nm : mixtures_for(cfg, M)) {
            for (double b : cfg.betas) {
                for (auto s : cfg.seeds) points.push_back({nm.order, M, b, s, nm, spec});
            }
        }
    }
    std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
        return std::tie(a.order, a.M, a.beta, a.seed) < std::tie(b.order, b.M, b.beta, b.seed);
    });
    return run_jobs<SweepRow>(points.size(), cfg.jobs, [&](std::size_t i) {
        const auto& p = points[i];
        return evaluate_point(cfg, p.spec, p.mixture, p.beta, p.seed);
    });
}

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols = {
        "schema_version", "experiment",   "seed",          "beta",          "M",
        "family",         "objective",    "objective_value", "elbo_sub",    "elbo_full",
        "delta",          "neg_entropy",  "slack_theorem", "tightness_gap", "coherence_avg",
        "linear_accuracy", "log_evidence", "wall_time_s"};
    return cols;
}

inline std::string rows_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    const auto& cols = sweep_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
    for (const auto& r : rows) {
        os << kSchemaVersion << ',' << r.experiment << ',' << r.seed << ',' << format_double(r.beta) << ','
           << r.num_modalities << ',' << r.family << ',' << r.objective << ',' << format_double(r.objective_value)
           << ',' << format_double(r.elbo_sub) << ',' << format_double(r.elbo_full) << ','
           << format_double(r.delta) << ',' << format_double(r.neg_entropy) << ','
           << format_double(r.slack_theorem) << ',' << format_double(r.tightness_gap) << ',' << opt(r.coherence)
           << ',' << format_double(r.linear_accuracy) << ',' << format_double(r.log_evidence) << ','
           << opt(r.wall_time) << "\n";
    }
    return os.str();
}

inline nlohmann::ordered_json rows_to_json(const std::vector<SweepRow>& rows, std::string_view command) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = std::string(command);
    auto list = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json e;
        e["experiment"] = r.experiment;
        e["seed"] = r.seed;
        e["beta"] = r.beta;
        e["M"] = r.num_modalities;
        e["family"] = r.family;
        e["objective"] = r.objective;
        e["objective_value"] = r.objective_value;
        e["elbo_sub"] = r.elbo_sub;
        e["elbo_full"] = r.elbo_full;
        e["delta"] = r.delta;
        e["neg_entropy"] = r.neg_entropy;
        e["slack_theorem"] = r.slack_theorem;
        e["tightness_gap"] = r.tightness_gap;
        e["coherence_avg"] = r.coherence ? nlohmann::ordered_json(*r.coherence) : nlohmann::ordered_json(nullptr);
        e["linear_accuracy"] = r.linear_accuracy;
        e["log_evidence"] = r.log_evidence;
        e["wall_time_s"] = r.wall_time ? nlohmann::ordered_json(*r.wall_time) : nlohmann::ordered_json(nullptr);
        list.push_back(std::move(e));
    }
    j["rows"] = list;
    return j;
}

}  // namespace mmlab

#endif  // MMLAB_RUNNER_HPP_
