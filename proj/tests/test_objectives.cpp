#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mmlab/datagen.hpp"
#include "mmlab/objectives.hpp"
#include "oracles.hpp"

using namespace mmlab;

namespace {

const double kLn2 = std::numbers::ln2;

JointDistribution uniform(std::vector<int> sizes) {
    Alphabet a(std::move(sizes));
    return JointDistribution(a, std::vector<double>(a.cells(), 1.0 / static_cast<double>(a.cells())));
}

struct Instance {
    JointDistribution dist;
    TabularModel model;
    SubsetMixture mixture;
};

Instance random_instance(std::mt19937_64& rng, int max_M = 3, int max_size = 3, int max_Z = 4) {
    std::uniform_int_distribution<int> pick_M(1, max_M), pick_Z(1, max_Z);
    const int M = pick_M(rng);
    auto dist = oracle::random_joint(rng, oracle::random_sizes(rng, M, max_size));
    std::bernoulli_distribution learned(0.7);
    auto model = oracle::random_model(rng, dist.alphabet(), pick_Z(rng), 1.5, learned(rng));
    auto mixture = oracle::random_mixture(rng, M);
    return {std::move(dist), std::move(model), std::move(mixture)};
}

}  // namespace

TEST(ObjectiveTest, UniformEverything) {
    const auto d = uniform({2, 2});
    const TabularModel model(d.alphabet(), 4);
    const auto mmvae = SubsetMixture::preset(Family::MMVAE, 2);
    EXPECT_NEAR(elbo_sub(model, d, mmvae), -2.0 * kLn2, 1e-14);
    EXPECT_NEAR(elbo_full(model, d, mmvae), -2.0 * kLn2, 1e-14);
    EXPECT_NEAR(elbo_mvae_plus(model, d), -4.0 * kLn2, 1e-14);
}

TEST(ObjectiveTest, MatchOraclesOnRandomInstances) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 60; ++trial) {
        const auto inst = random_instance(rng);
        for (double beta : {0.3, 1.0, 4.0}) {
            EXPECT_NEAR(elbo_sub(inst.model, inst.dist, inst.mixture, beta),
                        oracle::elbo_sub(inst.model, inst.dist, inst.mixture, beta), 1e-11);
            EXPECT_NEAR(elbo_full(inst.model, inst.dist, inst.mixture, beta),
                        oracle::elbo_full(inst.model, inst.dist, inst.mixture, beta), 1e-11);
            EXPECT_NEAR(elbo_mvae_plus(inst.model, inst.dist, beta), oracle::mvae_plus(inst.model, inst.dist, beta),
                        1e-11);
        }
    }
}

TEST(ObjectiveTest, SmallBetaApproachesReconstruction) {
    std::mt19937_64 rng(2);
    const auto inst = random_instance(rng);
    EXPECT_NEAR(elbo_sub(inst.model, inst.dist, inst.mixture, 1e-12),
                oracle::elbo_sub(inst.model, inst.dist, inst.mixture, 0.0), 1e-10);
}

TEST(ObjectiveTest, MvaePresetMakesFullEqualSub) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = random_instance(rng);
        const auto S = SubsetMixture::preset(Family::MVAE, inst.dist.num_modalities());
        EXPECT_EQ(elbo_full(inst.model, inst.dist, S), elbo_sub(inst.model, inst.dist, S));
    }
}

TEST(ObjectiveTest, MvaePlusWithOneModalityIsTwiceTheElbo) {
    std::mt19937_64 rng(4);
    const auto d = oracle::random_joint(rng, {5});
    const auto model = oracle::random_model(rng, d.alphabet(), 3, 1.0);
    EXPECT_NEAR(elbo_mvae_plus(model, d), 2.0 * elbo_sub(model, d, SubsetMixture::preset(Family::MVAE, 1)), 1e-14);
}

TEST(ObjectiveTest, DataLogEvidence) {
    const JointDistribution point(Alphabet({2, 2}), {0, 1, 0, 0});
    EXPECT_EQ(data_log_evidence(point), 0.0);
    EXPECT_NEAR(data_log_evidence(uniform({4})), -std::log(4.0), 1e-15);
    std::mt19937_64 rng(5);
    const auto d = oracle::random_joint(rng, {2, 3, 2});
    EXPECT_NEAR(data_log_evidence(d), -oracle::H(d, SubsetIndex::full(3)), 1e-12);
}

TEST(ObjectiveTest, InputValidation) {
    const auto d = uniform({2, 2});
    const TabularModel model(d.alphabet(), 2);
    const auto S = SubsetMixture::preset(Family::MMVAE, 2);
    EXPECT_THROW(elbo_sub(model, d, S, 0.0), ValidationError);
    EXPECT_THROW(elbo_sub(model, d, S, -1.0), ValidationError);
    EXPECT_THROW(elbo_sub(TabularModel(Alphabet({2, 3}), 2), d, S), DimensionError);
    EXPECT_THROW(elbo_sub(model, d, SubsetMixture::preset(Family::MMVAE, 3)), DimensionError);
    EXPECT_EQ(parse_objective("elbo_full"), Objective::ElboFull);
    EXPECT_THROW(parse_objective("elbo"), ParseError);
}

TEST(GradientTest, MatchesCentralDifferences) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 15; ++trial) {
        const auto inst = random_instance(rng);
        const double beta = trial % 3 == 0 ? 1.0 : 0.5 + trial * 0.2;
        for (Objective o : {Objective::ElboSub, Objective::ElboFull, Objective::MvaePlus}) {
            const auto analytic = gradient(o, inst.model, inst.dist, inst.mixture, beta).flatten();
            const auto numeric = oracle::fd_gradient(
                [&](const TabularModel& m) { return evaluate_objective(o, m, inst.dist, inst.mixture, beta); },
                inst.model);
            EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-5) << to_string(o) << " trial " << trial;
        }
    }
}

TEST(GradientTest, RowsSumToZeroAlongSoftmaxAxes) {
    std::mt19937_64 rng(7);
    const auto inst = random_instance(rng);
    for (Objective o : {Objective::ElboSub, Objective::ElboFull, Objective::MvaePlus}) {
        const auto g = gradient(o, inst.model, inst.dist, inst.mixture, 1.3);
        for (const auto& tables : {g.encoder, g.decoder}) {
            for (const auto& t : tables) {
                for (std::size_t r = 0; r < t.rows(); ++r) {
                    double s = 0.0;
                    for (double v : t.row(r)) s += v;
                    EXPECT_NEAR(s, 0.0, 1e-13);
                }
            }
        }
        double s = 0.0;
        for (double v : g.prior) s += v;
        EXPECT_NEAR(s, 0.0, 1e-13);
    }
}

TEST(GradientTest, VanishesAtSymmetricCriticalPoint) {
    const auto d = uniform({2, 2});
    const TabularModel model(d.alphabet(), 4);
    for (Family f : {Family::MVAE, Family::MMVAE, Family::MoPoE}) {
        const auto S = SubsetMixture::preset(f, 2);
        for (Objective o : {Objective::ElboSub, Objective::ElboFull, Objective::MvaePlus}) {
            double norm = 0.0;
            for (double v : gradient(o, model, d, S).flatten()) norm += v * v;
            EXPECT_LT(std::sqrt(norm), 1e-8);
        }
    }
}

TEST(GradientTest, StringIdAndReturnedValue) {
    std::mt19937_64 rng(8);
    const auto inst = random_instance(rng);
    double value = 0.0;
    const auto g = gradient(Objective::ElboFull, inst.model, inst.dist, inst.mixture, 1.0, &value);
    EXPECT_EQ(value, elbo_full(inst.model, inst.dist, inst.mixture));
    EXPECT_EQ(gradient("elbo_full", inst.model, inst.dist, inst.mixture), g);
}

TEST(BoundAuditTest, PropositionsHoldOnRandomInstances) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng);
        const auto a = bound_audit(inst.model, inst.dist, inst.mixture);
        EXPECT_TRUE(a.sub_below_full);
        EXPECT_TRUE(a.full_below_evidence);
        EXPECT_TRUE(a.gap_matches_kl);
        EXPECT_EQ(a.beta, 1.0);
        EXPECT_EQ(a.tightness_gap, a.elbo_full - a.elbo_sub);
        EXPECT_EQ(a.slack_theorem, a.data_log_evidence - a.delta - a.elbo_sub);
    }
}

TEST(BoundAuditTest, MvaePresetReducesToEvidenceBound) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = random_instance(rng);
        const auto a = bound_audit(inst.model, inst.dist, SubsetMixture::preset(Family::MVAE, inst.dist.num_modalities()));
        EXPECT_EQ(a.delta, 0.0);
        EXPECT_GE(a.slack_theorem, -1e-9);
        EXPECT_TRUE(a.passed());
    }
}

TEST(BoundAuditTest, TightnessGapEqualsMixtureKlOracle) {
    std::mt19937_64 rng(11);
    const auto d = oracle::random_joint(rng, {2, 3});
    const auto model = oracle::random_model(rng, d.alphabet(), 4, 1.5);
    const auto S = SubsetMixture::preset(Family::MoPoE, 2);
    double kl = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0.0) continue;
        const auto x = oracle::decode(i, d.alphabet().sizes());
        std::vector<std::vector<double>> posts;
        std::vector<double> mix(4, 0.0);
        for (const auto& e : S) {
            posts.push_back(oracle::poe(model, x, e.subset));
            for (std::size_t z = 0; z < 4; ++z) mix[z] += e.weight * posts.back()[z];
        }
        for (std::size_t a = 0; a < posts.size(); ++a) {
            for (std::size_t z = 0; z < 4; ++z) {
                kl += d[i] * S.entries()[a].weight * posts[a][z] * std::log(posts[a][z] / mix[z]);
            }
        }
    }
    EXPECT_NEAR(elbo_full(model, d, S) - elbo_sub(model, d, S), kl, 1e-12);
    EXPECT_NEAR(mixture_kl_term(model, d, S), kl, 1e-12);
}

// The inequality L_S + delta <= -H(X) does not hold in general. With a uniform model on two
// independent uniform bits, L_S = -2 ln 2 = -H(X) while delta(MMVAE) = ln 2.
TEST(BoundAuditTest, SubsampledBoundPlusDiscrepancyCanExceedEvidence) {
    const auto d = uniform({2, 2});
    const TabularModel model(d.alphabet(), 4);
    const auto a = bound_audit(model, d, SubsetMixture::preset(Family::MMVAE, 2));
    EXPECT_NEAR(a.elbo_sub, -2.0 * kLn2, 1e-14);
    EXPECT_NEAR(a.delta, kLn2, 1e-14);
    EXPECT_NEAR(a.slack_theorem, -kLn2, 1e-14);
    EXPECT_FALSE(a.theorem_holds);
    EXPECT_TRUE(a.sub_below_full);
    EXPECT_TRUE(a.full_below_evidence);
    EXPECT_TRUE(a.gap_matches_kl);
    EXPECT_FALSE(a.passed());
}

TEST(VibIdentityTest, RandomInstances) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = random_instance(rng);
        for (const auto& e : inst.mixture) {
            EXPECT_LT(vib_identity_check(inst.model, inst.dist, inst.mixture, e.subset), 1e-9);
        }
    }
}

TEST(VibIdentityTest, PriorAtAggregateAndUninformativeEncoder) {
    std::mt19937_64 rng(13);
    const auto d = oracle::random_joint(rng, {3, 2});
    auto model = oracle::random_model(rng, d.alphabet(), 4, 1.5);
    const auto S = SubsetMixture::preset(Family::MMVAE, 2);
    const auto A = SubsetIndex::single(0);
    std::vector<double> aggregate(4, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto p = oracle::poe(model, oracle::decode(i, d.alphabet().sizes()), A);
        for (std::size_t z = 0; z < 4; ++z) aggregate[z] += d[i] * p[z];
    }
    for (std::size_t z = 0; z < 4; ++z) model.prior[z] = std::log(aggregate[z]);
    EXPECT_LT(vib_identity_check(model, d, S, A), 1e-12);

    for (double& v : model.encoder[0].data()) v = 0.0;
    EXPECT_LT(vib_identity_check(model, d, S, A), 1e-12);
    EXPECT_THROW(vib_identity_check(model, d, S, SubsetIndex::full(2)), ValidationError);
}

TEST(TrainTest, ZeroStepsReturnsInitialModel) {
    std::mt19937_64 rng(14);
    const auto inst = random_instance(rng);
    TrainOptions opt;
    opt.steps = 0;
    const auto traj = train(inst.model, inst.dist, inst.mixture, opt);
    EXPECT_EQ(traj.model, inst.model);
    ASSERT_EQ(traj.records.size(), 1u);
    EXPECT_EQ(traj.final_objective(), elbo_sub(inst.model, inst.dist, inst.mixture));
}

TEST(TrainTest, TinyStepSizeBarelyMoves) {
    std::mt19937_64 rng(15);
    const auto inst = random_instance(rng);
    TrainOptions opt;
    opt.steps = 20;
    opt.step_size = 1e-15;
    const auto traj = train(inst.model, inst.dist, inst.mixture, opt);
    EXPECT_NEAR(traj.final_objective(), traj.records.front().objective, 1e-12);
}

TEST(TrainTest, DeterministicAndImproving) {
    const auto spec = DatasetSpec{SharedSpecific{2, {2, 2}}};
    const auto d = build_joint(spec);
    const auto init = init_random(d.alphabet(), 8, 3);
    const auto S = SubsetMixture::preset(Family::MoPoE, 2);
    TrainOptions opt;
    opt.steps = 1200;
    std::vector<int> seen;
    const auto a = train(init, d, S, opt, [&](int step, const TabularModel&) { seen.push_back(step); });
    const auto b = train(init, d, S, opt);
    EXPECT_EQ(a.model, b.model);
    ASSERT_EQ(a.records.size(), 1201u);
    EXPECT_EQ(seen.size(), 1201u);
    // Training starts next to the uniform saddle point and escapes it slowly.
    EXPECT_GT(a.final_objective(), a.records.front().objective + 0.3);
    EXPECT_FALSE(a.aborted);
    EXPECT_EQ(a.final_objective(), elbo_sub(a.model, d, S));
}

TEST(TrainTest, RejectsBadOptions) {
    std::mt19937_64 rng(16);
    const auto inst = random_instance(rng);
    TrainOptions opt;
    opt.momentum = 1.0;
    EXPECT_THROW(train(inst.model, inst.dist, inst.mixture, opt), ValidationError);
    opt = TrainOptions{};
    opt.step_size = 0.0;
    EXPECT_THROW(train(inst.model, inst.dist, inst.mixture, opt), ValidationError);
    opt = TrainOptions{};
    opt.steps = -1;
    EXPECT_THROW(train(inst.model, inst.dist, inst.mixture, opt), ValidationError);
}

TEST(TrainTest, NonFiniteObjectiveAbortsWithDiagnostic) {
    const auto d = uniform({2});
    TabularModel model(d.alphabet(), 2);
    model.decoder[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    const auto traj = train(model, d, SubsetMixture::preset(Family::MVAE, 1), TrainOptions{});
    EXPECT_TRUE(traj.aborted);
    EXPECT_FALSE(traj.diagnostic.empty());
    EXPECT_EQ(traj.records.size(), 1u);
}

// Trained MMVAE on the shared/specific dataset: the model learns to encode only the label and
// reaches L_S close to -H(X), far above -H(X) - delta.
TEST(TrainTest, TrainedMmvaeOnSharedSpecific) {
    const auto spec = DatasetSpec{SharedSpecific{2, {2, 2}}};
    const auto d = build_joint(spec);
    const auto S = SubsetMixture::preset(Family::MMVAE, 2);
    TrainOptions opt;
    opt.steps = 5000;
    const auto traj = train(init_random(d.alphabet(), 16, 1), d, S, opt);
    const auto a = bound_audit(traj.model, d, S);
    EXPECT_TRUE(a.sub_below_full);
    EXPECT_TRUE(a.full_below_evidence);
    EXPECT_TRUE(a.gap_matches_kl);
    EXPECT_NEAR(a.elbo_sub, data_log_evidence(d), 0.05);
    EXPECT_LT(a.slack_theorem, -0.5);
}
