#include <gtest/gtest.h>

#include "mcisac/scenario.hpp"
#include "test_util.hpp"

using namespace mcisac;

namespace {

const char* kPaperConfig = R"(
[system]
cells = 2
users_per_cell = 3
n_tx = 6
n_rx = 4
frame_len = 30
mode = cbf

[targets]
theta_deg = [[-50, 60], [-60, 50]]

[gains]
alpha = [[1+0i, 0.5+0i], [0.5+0i, 1+0i]]

[channels]
model = rayleigh
seed = 7

[power]
p_t_dbm = 40
noise_radar_dbm = 0
noise_comm_dbm = 0

[optimizer]
weight_u = 0.5
)";

TEST(Units, DefinitionalConversions) {
    EXPECT_DOUBLE_EQ(dbm_to_watts(40.0), 10.0);
    EXPECT_DOUBLE_EQ(dbm_to_watts(0.0), 0.001);
    EXPECT_DOUBLE_EQ(db_to_linear(30.0), 1000.0);
    EXPECT_NEAR(watts_to_dbm(10.0), 40.0, 1e-12);
}

TEST(FromConfig, PaperDefaults) {
    Scenario s = from_config(ConfigDoc::parse(kPaperConfig));
    EXPECT_EQ(s.j_cells, 2);
    EXPECT_EQ(s.k_users, 3);
    EXPECT_EQ(s.geometry.n_tx, 6);
    EXPECT_EQ(s.geometry.n_rx, 4);
    EXPECT_DOUBLE_EQ(s.power_budget_w, 10.0);
    EXPECT_DOUBLE_EQ(s.noise_radar_w, 0.001);
    EXPECT_DOUBLE_EQ(s.noise_comm_w, 0.001);
    EXPECT_NEAR(s.target_angles(0, 0), deg2rad(-50), 1e-15);
    EXPECT_NEAR(s.target_angles(0, 1), deg2rad(60), 1e-15);
    EXPECT_NEAR(s.target_angles(1, 0), deg2rad(-60), 1e-15);
    EXPECT_NEAR(s.target_angles(1, 1), deg2rad(50), 1e-15);
    EXPECT_EQ(s.path_gains(0, 1), cxd(0.5, 0));
}

TEST(FromConfig, FrameLenMustExceedAntennas) {
    ConfigDoc doc = ConfigDoc::parse(kPaperConfig);
    doc.set("system", "frame_len", "6");
    try {
        from_config(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "system.frame_len");
    }
}

TEST(FromConfig, MissingKeyNamesField) {
    ConfigDoc doc;
    doc.set("system", "cells", "2");
    try {
        from_config(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_FALSE(e.field().empty());
    }
}

TEST(FromConfig, UnknownChannelModelRejected) {
    ConfigDoc doc = ConfigDoc::parse(kPaperConfig);
    doc.set("channels", "model", "quantum");
    EXPECT_THROW(from_config(doc), ConfigError);
}

TEST(FromConfig, LosChannelFollowsSteering) {
    ConfigDoc doc = ConfigDoc::parse(kPaperConfig);
    doc.set("system", "n_tx", "16");
    doc.set("channels", "model", "los");
    doc.set("channels", "user_angles_deg", "[[-30, -10, 10], [20, 35, 70]]");
    Scenario s = from_config(doc);
    VecC expect = steering_tx(deg2rad(-30.0), 16);
    EXPECT_NEAR((s.channel(0, 0, 0) - expect).cwiseAbs().maxCoeff(), 0.0, 1e-14);
    EXPECT_NEAR(s.channel(1, 1, 2).squaredNorm(), 16.0, 1e-12);  // gain 0 dB
}

TEST(FromConfig, LosWithoutAnglesFails) {
    ConfigDoc doc = ConfigDoc::parse(kPaperConfig);
    doc.set("channels", "model", "los");
    EXPECT_THROW(from_config(doc), ConfigError);
}

TEST(GenerateChannels, DeterministicGivenSeed) {
    ChannelGenParams p;
    p.j_cells = 2;
    p.k_users = 3;
    p.geometry = {6, 4};
    p.gain_db = MatR::Zero(2, 2);
    ChannelMap a = generate_channels(ChannelModel::Rayleigh, 7, p);
    ChannelMap b = generate_channels(ChannelModel::Rayleigh, 7, p);
    EXPECT_TRUE(a == b);
    ChannelMap c = generate_channels(ChannelModel::Rayleigh, 8, p);
    EXPECT_FALSE(a == c);
}

TEST(GenerateChannels, RayleighMeanNormMatchesGain) {
    // 1e5 draws: sample mean of ||h||^2 should sit within 0.1 of n_tx
    ChannelGenParams p;
    p.j_cells = 1;
    p.k_users = 100000;
    p.geometry = {6, 1};
    p.gain_db = MatR::Zero(1, 1);
    ChannelMap m = generate_channels(ChannelModel::Rayleigh, 3, p);
    double acc = 0.0;
    for (int k = 0; k < p.k_users; ++k) acc += m.at(0, 0, k).squaredNorm();
    EXPECT_NEAR(acc / p.k_users, 6.0, 0.1);
}

TEST(Scenario, SerializeRoundTripsBitForBit) {
    Scenario s = testutil::random_scenario(42);
    ConfigDoc doc = serialize(s);
    Scenario back = from_config(doc);
    EXPECT_TRUE(s == back);
    // and through a text round trip as well
    Scenario back2 = from_config(ConfigDoc::parse(doc.serialize()));
    EXPECT_TRUE(s == back2);
}

TEST(Scenario, SameConfigSameScenario) {
    Scenario a = from_config(ConfigDoc::parse(kPaperConfig));
    Scenario b = from_config(ConfigDoc::parse(kPaperConfig));
    EXPECT_TRUE(a == b);
}

TEST(ConfigDoc, OverridesApply) {
    ConfigDoc doc = ConfigDoc::parse(kPaperConfig);
    doc.apply_override("system.n_tx=16");
    doc.apply_override("optimizer.weight_u=1");
    Scenario s = from_config(doc);
    EXPECT_EQ(s.geometry.n_tx, 16);
    EXPECT_DOUBLE_EQ(s.weight_u, 1.0);
    EXPECT_THROW(doc.apply_override("nodots"), ConfigError);
}

TEST(Scenario, StackedChannelConcatenatesPerBs) {
    Scenario s = testutil::random_scenario(5);
    VecC h = s.stacked_channel(1, 2);
    ASSERT_EQ(h.size(), s.n_comp());
    EXPECT_EQ(h.segment(0, 6), s.channel(0, 1, 2));
    EXPECT_EQ(h.segment(6, 6), s.channel(1, 1, 2));
}

} // namespace
