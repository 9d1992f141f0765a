#include <gtest/gtest.h>

#include <random>

#include "mmlab/mixture.hpp"
#include "oracles.hpp"

using namespace mmlab;

TEST(PresetTest, TableSizesAndWeights) {
    const auto mopoe = SubsetMixture::preset(Family::MoPoE, 3);
    ASSERT_EQ(mopoe.size(), 7u);
    for (const auto& e : mopoe) EXPECT_DOUBLE_EQ(e.weight, 1.0 / 7.0);

    const auto mmvae = SubsetMixture::preset(Family::MMVAE, 5);
    ASSERT_EQ(mmvae.size(), 5u);
    for (int m = 0; m < 5; ++m) {
        EXPECT_EQ(mmvae.entries()[static_cast<std::size_t>(m)].subset, SubsetIndex::single(m));
        EXPECT_DOUBLE_EQ(mmvae.entries()[static_cast<std::size_t>(m)].weight, 0.2);
    }

    const auto mvae = SubsetMixture::preset(Family::MVAE, 4);
    ASSERT_EQ(mvae.size(), 1u);
    EXPECT_EQ(mvae.entries()[0].subset, SubsetIndex::full(4));
    EXPECT_EQ(mvae.entries()[0].weight, 1.0);
    EXPECT_EQ(mvae.family(), Family::MVAE);
}

TEST(PresetTest, MoPoECapacityIsEnforced) {
    EXPECT_THROW(SubsetMixture::preset(Family::MoPoE, 13), CapacityError);
    EXPECT_NO_THROW(SubsetMixture::preset(Family::MoPoE, 12));
    EXPECT_THROW(SubsetMixture::preset(Family::MoPoE, 4, 10), CapacityError);
    EXPECT_THROW(SubsetMixture::preset(Family::MMVAE, 0), ValidationError);
}

TEST(CustomMixtureTest, Validation) {
    EXPECT_NO_THROW(SubsetMixture::custom(2, {{SubsetIndex::of({0}), 0.3}, {SubsetIndex::of({0, 1}), 0.7}}));
    EXPECT_THROW(SubsetMixture::custom(2, {{SubsetIndex(), 1.0}}), ValidationError);
    EXPECT_THROW(SubsetMixture::custom(2, {{SubsetIndex::single(0), 0.5}, {SubsetIndex::single(1), 0.4}}),
                 ValidationError);
    EXPECT_THROW(SubsetMixture::custom(2, {{SubsetIndex::single(0), 0.5}, {SubsetIndex::single(0), 0.5}}),
                 ValidationError);
    EXPECT_THROW(SubsetMixture::custom(2, {{SubsetIndex::single(2), 1.0}}), InvalidSubsetError);
    EXPECT_THROW(SubsetMixture::custom(2, {}), ValidationError);
}

TEST(CustomMixtureTest, NearMissSumIsRenormalizedAndFlagged) {
    const auto exact = SubsetMixture::custom(2, {{SubsetIndex::single(0), 0.5}, {SubsetIndex::single(1), 0.5}});
    EXPECT_FALSE(exact.renormalized());
    const auto near = SubsetMixture::custom(2, {{SubsetIndex::single(0), 0.5}, {SubsetIndex::single(1), 0.5 + 5e-10}});
    EXPECT_TRUE(near.renormalized());
    double total = 0.0;
    for (const auto& e : near) total += e.weight;
    EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(CustomMixtureTest, EntriesAreSortedAndQueryable) {
    const auto s = SubsetMixture::custom(3, {{SubsetIndex::of({1, 2}), 0.25}, {SubsetIndex::single(0), 0.75}});
    EXPECT_EQ(s.entries()[0].subset, SubsetIndex::single(0));
    EXPECT_TRUE(s.contains(SubsetIndex::of({1, 2})));
    EXPECT_FALSE(s.contains(SubsetIndex::single(1)));
    EXPECT_EQ(s.weight_of(SubsetIndex::of({1, 2})), 0.25);
    EXPECT_FALSE(s.family().has_value());
}

TEST(ExtendTest, SizesAndNewSubsets) {
    auto [s, sp] = extend(Family::MMVAE, 2);
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(sp.size(), 3u);
    std::tie(s, sp) = extend(Family::MoPoE, 2);
    EXPECT_EQ(s.size(), 3u);
    EXPECT_EQ(sp.size(), 7u);

    std::tie(s, sp) = extend(Family::MoPoE, 3);
    int added = 0;
    for (const auto& e : sp) {
        if (!s.contains(e.subset)) {
            ++added;
            EXPECT_TRUE(e.subset.contains(3));
        }
    }
    EXPECT_EQ(added, 8);
    EXPECT_THROW(extend(Family::MVAE, 2), UnsupportedError);
}

TEST(ParseMixtureTest, ParsesOneBasedSubsets) {
    const auto s = parse_mixture(3, "{1}:0.3; {1,3}:0.7");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.weight_of(SubsetIndex::of({0, 2})), 0.7);
    EXPECT_THROW(parse_mixture(3, "{1}:0.3; {4}:0.7"), InvalidSubsetError);
    EXPECT_THROW(parse_mixture(3, "{1}0.3"), ParseError);
    EXPECT_THROW(parse_mixture(3, "{0}:1"), InvalidSubsetError);
}

TEST(FamilyTest, NamesRoundTrip) {
    for (Family f : {Family::MVAE, Family::MMVAE, Family::MoPoE}) EXPECT_EQ(parse_family(to_string(f)), f);
    EXPECT_THROW(parse_family("poe"), ParseError);
}

TEST(RandomMixtureTest, AlwaysCanonical) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = oracle::random_mixture(rng, 1 + trial % 4);
        double total = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            total += s.entries()[i].weight;
            if (i > 0) {
                EXPECT_LT(s.entries()[i - 1].subset, s.entries()[i].subset);
            }
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}
