#include <gtest/gtest.h>

#include "mcisac/array_model.hpp"

using namespace mcisac;

namespace {

// Central finite difference of a vector-valued steering function.
VecC central_diff(const std::function<VecC(double)>& f, double theta, double h) {
    return (f(theta + h) - f(theta - h)) / (2.0 * h);
}

TEST(SteeringTx, BoresightIsAllOnes) {
    VecC v = steering_tx(0.0, 4);
    ASSERT_EQ(v.size(), 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(std::abs(v(n) - cxd(1, 0)), 0.0, 1e-15);
}

TEST(SteeringTx, ThirtyDegreesTwoElements) {
    VecC v = steering_tx(deg2rad(30.0), 2);
    EXPECT_NEAR(std::abs(v(0) - cxd(1, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(v(1) - cxd(0, 1)), 0.0, 1e-12);  // exp(j pi/2) = j
}

TEST(SteeringTx, DirectEvaluationAtMinusFifty) {
    const double theta = deg2rad(-50.0);
    VecC v = steering_tx(theta, 6);
    for (int n = 0; n < 6; ++n) {
        cxd expect = std::polar(1.0, kPi * n * std::sin(theta));
        EXPECT_NEAR(std::abs(v(n) - expect), 0.0, 1e-14);
        EXPECT_NEAR(std::abs(v(n)), 1.0, 1e-14);
    }
    // conjugate symmetry
    VecC vneg = steering_tx(-theta, 6);
    EXPECT_NEAR((vneg - v.conjugate()).cwiseAbs().maxCoeff(), 0.0, 1e-14);
}

TEST(SteeringTx, NormSquaredEqualsElementCount) {
    for (double deg = -89.0; deg <= 89.0; deg += 1.0) {
        VecC v = steering_tx(deg2rad(deg), 7);
        EXPECT_NEAR(v.squaredNorm(), 7.0, 1e-12);
    }
}

TEST(SteeringTx, RejectsEndfire) {
    EXPECT_THROW(steering_tx(deg2rad(90.0), 4), std::domain_error);
    EXPECT_THROW(steering_tx(deg2rad(-90.0), 4), std::domain_error);
    EXPECT_THROW(steering_tx(2.0, 4), std::domain_error);
}

TEST(SteeringRx, BoresightAndSparsePhases) {
    VecC v0 = steering_rx(0.0, 6, 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(std::abs(v0(n) - cxd(1, 0)), 0.0, 1e-15);

    // N_t sin(30 deg) = 1, so the second element is exp(j pi) = -1
    VecC v = steering_rx(deg2rad(30.0), 2, 2);
    EXPECT_NEAR(std::abs(v(1) - cxd(-1, 0)), 0.0, 1e-12);

    const double theta = deg2rad(50.0);
    VecC v50 = steering_rx(theta, 6, 4);
    for (int n = 0; n < 4; ++n) {
        cxd expect = std::polar(1.0, kPi * 6.0 * n * std::sin(theta));
        EXPECT_NEAR(std::abs(v50(n) - expect), 0.0, 1e-13);
    }
}

TEST(SteeringDerivative, BoresightClosedForm) {
    ArrayGeometry g{3, 4};
    VecC d = steering_derivative(0.0, ArraySide::Tx, g);
    ASSERT_EQ(d.size(), 3);
    EXPECT_NEAR(std::abs(d(0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(d(1) - cxd(0, kPi)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(d(2) - cxd(0, 2 * kPi)), 0.0, 1e-12);
}

TEST(SteeringDerivative, FirstEntryAlwaysZero) {
    ArrayGeometry g{5, 3};
    for (double deg = -80.0; deg <= 80.0; deg += 7.0) {
        EXPECT_EQ(std::abs(steering_derivative(deg2rad(deg), ArraySide::Tx, g)(0)), 0.0);
        EXPECT_EQ(std::abs(steering_derivative(deg2rad(deg), ArraySide::Rx, g)(0)), 0.0);
    }
}

TEST(SteeringDerivative, MatchesFiniteDifferencesOnGrid) {
    // 181-point grid strictly inside the angle domain, h = 1e-6
    ArrayGeometry g{6, 4};
    const double h = 1e-6;
    for (int i = 0; i < 181; ++i) {
        double theta = deg2rad(-89.5 + i * (179.0 / 180.0));
        for (ArraySide side : {ArraySide::Tx, ArraySide::Rx}) {
            VecC d = steering_derivative(theta, side, g);
            auto f = [&](double t) {
                return side == ArraySide::Tx ? steering_tx(t, g.n_tx) : steering_rx(t, g);
            };
            VecC fd = central_diff(f, theta, h);
            double rel = (d - fd).norm() / fd.norm();
            EXPECT_LT(rel, 1e-6) << "theta=" << rad2deg(theta);
        }
    }
}

TEST(SteeringDerivative, SixtyDegreeSpotCheck) {
    ArrayGeometry g{4, 4};
    const double theta = deg2rad(60.0);
    VecC d = steering_derivative(theta, ArraySide::Tx, g);
    auto f = [&](double t) { return steering_tx(t, 4); };
    VecC fd = central_diff(f, theta, 1e-6);
    EXPECT_LT((d - fd).norm() / fd.norm(), 1e-6);
}

TEST(TargetResponse, ZeroAmplitudeGivesZeroMatrix) {
    ArrayGeometry g{6, 4};
    auto r = target_response(cxd(0, 0), deg2rad(10), deg2rad(-30), g);
    EXPECT_EQ(r.matrix.cwiseAbs().maxCoeff(), 0.0);
}

TEST(TargetResponse, BoresightAllOnes) {
    ArrayGeometry g{6, 4};
    auto r = target_response(cxd(1, 0), 0.0, 0.0, g);
    ASSERT_EQ(r.matrix.rows(), 4);
    ASSERT_EQ(r.matrix.cols(), 6);
    EXPECT_NEAR((r.matrix - MatC::Ones(4, 6)).cwiseAbs().maxCoeff(), 0.0, 1e-14);
}

TEST(TargetResponse, RankOneWithExpectedSingularValue) {
    ArrayGeometry g{6, 4};
    cxd alpha = 0.5 * std::polar(1.0, 1.1);
    auto r = target_response(alpha, deg2rad(-50), deg2rad(-50), g);
    Eigen::JacobiSVD<MatC> svd(r.matrix);
    EXPECT_NEAR(svd.singularValues()(0), 0.5 * std::sqrt(24.0), 1e-12);
    EXPECT_LT(svd.singularValues()(1) / svd.singularValues()(0), 1e-12);
    EXPECT_NEAR(r.matrix.norm(), std::abs(alpha) * std::sqrt(24.0), 1e-12);
}

} // namespace
