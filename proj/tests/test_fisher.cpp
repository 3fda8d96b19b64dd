#include <gtest/gtest.h>

#include "mcisac/fisher.hpp"
#include "test_util.hpp"

using namespace mcisac;
using testutil::random_scenario;
using testutil::random_precoders;

namespace {

Scenario zero_cross_gains(Scenario s) {
    for (int n = 0; n < s.j_cells; ++n)
        for (int m = 0; m < s.j_cells; ++m)
            if (n != m) s.path_gains(n, m) = cxd(0, 0);
    return s;
}

TEST(CbfCovariance, NoCrossGainsGivesScaledIdentity) {
    Scenario s = zero_cross_gains(random_scenario(1));
    PrecoderSet p = random_precoders(s, Mode::Cbf, 2);
    MatC c = cbf_covariance(s, p, 0);
    MatC expect = s.noise_radar_w * MatC::Identity(4, 4);
    EXPECT_NEAR((c - expect).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(CbfCovariance, SingleCellIsNoiseOnly) {
    Scenario s = random_scenario(3, /*j=*/1, /*k=*/2);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 4);
    MatC c = cbf_covariance(s, p, 0);
    EXPECT_NEAR((c - s.noise_radar_w * MatC::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(CbfCovariance, MatchesHandExpandedRankOneCongruence) {
    Scenario s = random_scenario(7, 2, 2, /*n_tx=*/2, /*n_rx=*/2);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 8);
    const int m = 0, n = 1;
    // L |alpha|^2 (v^T R_n v*) a a^H + sigma^2 I, by direct scalar arithmetic
    VecC a = steering_rx(s.target_angles(m, m), s.geometry);
    VecC v = steering_tx(s.target_angles(n, m), s.geometry.n_tx);
    MatC rn = p.cell_covariance(n);
    cxd quad = (v.transpose() * rn * v.conjugate())(0, 0);
    MatC expect = s.frame_len * std::norm(s.path_gains(n, m)) * quad.real() * (a * a.adjoint()) +
                  s.noise_radar_w * MatC::Identity(2, 2);
    EXPECT_LT((cbf_covariance(s, p, m) - expect).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CbfCovariance, PaperLiteralSwitchUsesOwnCovariance) {
    Scenario s = random_scenario(9);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 10);
    MatC c_fixed = cbf_covariance(s, p, 0);
    s.paper_literal_covariance = true;
    MatC c_literal = cbf_covariance(s, p, 0);
    EXPECT_GT((c_fixed - c_literal).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(MeanDerivative, ZeroGainsGiveZeroMatrix) {
    Scenario s = random_scenario(11);
    s.path_gains.setZero();
    EXPECT_EQ(mean_derivative(s, 0, Mode::Cbf).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(mean_derivative(s, 0, Mode::Comp).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MeanDerivative, CbfMatchesFiniteDifference) {
    for (std::uint64_t seed : {21, 22, 23}) {
        Scenario s = random_scenario(seed);
        for (int m = 0; m < 2; ++m) {
            MatC md = mean_derivative(s, m, Mode::Cbf);
            auto g = [&](double theta) {
                return MatC(s.path_gains(m, m) *
                            (steering_rx(theta, s.geometry) *
                             steering_tx(theta, s.geometry.n_tx).transpose()));
            };
            const double h = 1e-6, t = s.target_angles(m, m);
            MatC fd = (g(t + h) - g(t - h)) / (2 * h);
            EXPECT_LT((md - fd).norm() / md.norm(), 1e-6);
        }
    }
}

TEST(MeanDerivative, CompMatchesFiniteDifference) {
    Scenario s = random_scenario(31);
    for (int m = 0; m < 2; ++m) {
        MatC md = mean_derivative(s, m, Mode::Comp);
        auto mu_factor = [&](double theta) {
            MatC f = MatC::Zero(s.geometry.n_rx, s.n_comp());
            VecC a = steering_rx(theta, s.geometry);
            f.middleCols(m * 6, 6) =
                s.path_gains(m, m) * (a * steering_tx(theta, 6).transpose());
            int n = 1 - m;
            f.middleCols(n * 6, 6) +=
                s.path_gains(n, m) * (a * steering_tx(s.target_angles(n, m), 6).transpose());
            return f;
        };
        const double h = 1e-6, t = s.target_angles(m, m);
        MatC fd = (mu_factor(t + h) - mu_factor(t - h)) / (2 * h);
        EXPECT_LT((md - fd).norm() / md.norm(), 1e-6);
    }
}

TEST(MeanDerivative, CompReducesToEmbeddedCbfWithoutCrossGains) {
    Scenario s = zero_cross_gains(random_scenario(41));
    MatC comp = mean_derivative(s, 1, Mode::Comp);
    MatC cbf = mean_derivative(s, 1, Mode::Cbf);
    EXPECT_EQ((comp.middleCols(0, 6)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_NEAR((comp.middleCols(6, 6) - cbf).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Fim, ZeroPrecodersGiveZeroInformation) {
    Scenario s = random_scenario(51);
    PrecoderSet p = PrecoderSet::zero(s, Mode::Comp);
    FimResult f = fim(s, p, 0, Mode::Comp);
    EXPECT_NEAR(f.value, 0.0, 1e-12);
    EXPECT_TRUE(std::isinf(f.rcrb));
}

TEST(Fim, GenericAgreesWithExpandedClosedForm) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Scenario s = random_scenario(100 + seed);
        for (Mode mode : {Mode::Cbf, Mode::Comp}) {
            PrecoderSet p = random_precoders(s, mode, 200 + seed);
            for (int m = 0; m < 2; ++m) {
                double f1 = fim(s, p, m, mode, FimPath::Generic).value;
                double f2 = fim(s, p, m, mode, FimPath::Expanded).value;
                ASSERT_GT(f1, 0.0);
                EXPECT_LT(std::abs(f1 - f2) / f1, 1e-10)
                    << "seed " << seed << " mode " << (mode == Mode::Cbf ? "cbf" : "comp");
            }
        }
    }
}

TEST(Fim, CompWithoutCrossGainsEqualsCbf) {
    Scenario s = zero_cross_gains(random_scenario(61));
    PrecoderSet pc = random_precoders(s, Mode::Cbf, 62);
    // embed the CBF blocks into the CoMP layout
    PrecoderSet pj = PrecoderSet::zero(s, Mode::Comp);
    for (int m = 0; m < 2; ++m)
        for (int k = 0; k < s.k_users; ++k)
            pj.block(m * s.k_users + k).block(m * 6, m * 6, 6, 6) = pc.block(m, k);
    for (int m = 0; m < 2; ++m) {
        double f_cbf = fim(s, pc, m, Mode::Cbf).value;
        double f_comp = fim(s, pj, m, Mode::Comp).value;
        EXPECT_LT(std::abs(f_cbf - f_comp) / f_cbf, 1e-12);
    }
}

TEST(Fim, LinearInFrameLengthWhenCovarianceFixed) {
    Scenario s = random_scenario(71);
    PrecoderSet p = random_precoders(s, Mode::Comp, 72);
    double f30 = fim(s, p, 0, Mode::Comp).value;
    s.frame_len = 60;
    double f60 = fim(s, p, 0, Mode::Comp).value;
    EXPECT_LT(std::abs(f60 - 2.0 * f30) / f60, 1e-12);

    // CBF covariance is noise-only once cross gains vanish, so the same
    // linearity holds there
    Scenario sz = zero_cross_gains(random_scenario(73));
    PrecoderSet pz = random_precoders(sz, Mode::Cbf, 74);
    double g30 = fim(sz, pz, 0, Mode::Cbf).value;
    sz.frame_len = 60;
    double g60 = fim(sz, pz, 0, Mode::Cbf).value;
    EXPECT_LT(std::abs(g60 - 2.0 * g30) / g60, 1e-12);
}

TEST(Fim, RcrbIsInverseSquareRoot) {
    Scenario s = random_scenario(81);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 82);
    FimResult f = fim(s, p, 1, Mode::Cbf);
    EXPECT_NEAR(f.rcrb, 1.0 / std::sqrt(f.value), 1e-15);
}

TEST(FimAffine, ZeroPrecoderGivesZero) {
    Scenario s = random_scenario(91);
    MatC c = s.noise_radar_w * MatC::Identity(4, 4);
    FimAffine a = fim_affine_coefficients(s, 0, Mode::Comp, c);
    EXPECT_EQ(a.constant, 0.0);
    EXPECT_NEAR(a.evaluate(MatC::Zero(12, 12)), 0.0, 1e-15);
}

TEST(FimAffine, MatchesFimWithFrozenCovariance) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Scenario s = random_scenario(300 + seed);
        PrecoderSet p = random_precoders(s, Mode::Cbf, 400 + seed);
        for (int m = 0; m < 2; ++m) {
            // freeze C at this precoder set: the affine functional evaluated
            // on the same set must reproduce fim() exactly
            MatC c = cbf_covariance(s, p, m);
            FimAffine a = fim_affine_coefficients(s, m, Mode::Cbf, c);
            double direct = fim(s, p, m, Mode::Cbf).value;
            double affine = a.evaluate(p.cell_covariance(m));
            EXPECT_LT(std::abs(direct - affine) / direct, 1e-10);
        }
        PrecoderSet pj = random_precoders(s, Mode::Comp, 500 + seed);
        MatC cj = s.noise_radar_w * MatC::Identity(4, 4);
        FimAffine aj = fim_affine_coefficients(s, 0, Mode::Comp, cj);
        double direct = fim(s, pj, 0, Mode::Comp).value;
        EXPECT_LT(std::abs(direct - aj.evaluate(pj.total_covariance())) / direct, 1e-10);
    }
}

TEST(FimAffine, DependsOnlyOnCellCovarianceSum) {
    // moving power between users of the cell leaves the functional fixed
    Scenario s = random_scenario(95);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 96);
    MatC c = cbf_covariance(s, p, 0);
    FimAffine a = fim_affine_coefficients(s, 0, Mode::Cbf, c);
    double before = a.evaluate(p.cell_covariance(0));
    MatC shift = 0.5 * p.block(0, 1);
    p.block(0, 0) += shift;
    p.block(0, 1) -= shift;
    EXPECT_NEAR(a.evaluate(p.cell_covariance(0)), before, 1e-9 * std::abs(before));
}

TEST(FimAffine, RejectsNonPositiveDefiniteCovariance) {
    Scenario s = random_scenario(97);
    MatC c = MatC::Zero(4, 4);
    EXPECT_THROW(fim_affine_coefficients(s, 0, Mode::Cbf, c), InvariantError);
}

TEST(FimAffine, CoefficientIsPsdSoScalingIncreasesFim) {
    Scenario s = random_scenario(98);
    PrecoderSet p = random_precoders(s, Mode::Comp, 99);
    MatC c = s.noise_radar_w * MatC::Identity(4, 4);
    FimAffine a = fim_affine_coefficients(s, 0, Mode::Comp, c);
    EXPECT_GE(min_eigenvalue(a.coeff), -1e-13 * a.coeff.cwiseAbs().maxCoeff());
    double f1 = a.evaluate(p.total_covariance());
    double f2 = a.evaluate(2.0 * p.total_covariance());
    EXPECT_GT(f2, f1);
}

TEST(PrecoderSet, PowerValidation) {
    Scenario s = random_scenario(120);
    PrecoderSet p = random_precoders(s, Mode::Cbf, 121);
    EXPECT_TRUE(p.valid(s));
    p.block(0, 0) *= 100.0;
    std::string why;
    EXPECT_FALSE(p.valid(s, &why));
    EXPECT_NE(why.find("power"), std::string::npos);
}

} // namespace
