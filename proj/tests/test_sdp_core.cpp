#include <gtest/gtest.h>

#include <filesystem>

#include "mcisac/sdp_core.hpp"
#include "test_util.hpp"

using namespace mcisac;
using namespace mcisac::sdp;

namespace {

TEST(EmbedReal, IdentityMapsToIdentity) {
    EXPECT_NEAR((embed_real(MatC::Identity(2, 2)) - MatR::Identity(4, 4)).cwiseAbs().maxCoeff(),
                0.0, 0.0);
}

TEST(EmbedReal, PauliYDuplicatesSpectrum) {
    MatC h(2, 2);
    h << cxd(0, 0), cxd(0, -1), cxd(0, 1), cxd(0, 0);
    MatR e = embed_real(h);
    Eigen::SelfAdjointEigenSolver<MatR> es(e, Eigen::EigenvaluesOnly);
    VecR ev = es.eigenvalues();
    EXPECT_NEAR(ev(0), -1.0, 1e-12);
    EXPECT_NEAR(ev(1), -1.0, 1e-12);
    EXPECT_NEAR(ev(2), 1.0, 1e-12);
    EXPECT_NEAR(ev(3), 1.0, 1e-12);
}

TEST(EmbedReal, RandomHermitianSpectrumDoubled) {
    Rng rng(5);
    MatC h = testutil::random_hermitian(rng, 5);
    Eigen::SelfAdjointEigenSolver<MatC> esc(h, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<MatR> esr(embed_real(h), Eigen::EigenvaluesOnly);
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(esr.eigenvalues()(2 * i), esc.eigenvalues()(i), 1e-10);
        EXPECT_NEAR(esr.eigenvalues()(2 * i + 1), esc.eigenvalues()(i), 1e-10);
    }
}

TEST(EmbedReal, TraceIdentityAndRecovery) {
    Rng rng(6);
    MatC a = testutil::random_hermitian(rng, 4);
    MatC h = testutil::random_psd(rng, 4);
    double lhs = (a * h).trace().real();
    double rhs = 0.5 * (embed_real(a).cwiseProduct(embed_real(h))).sum();
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
    EXPECT_NEAR((recover_hermitian(embed_real(h)) - h).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(EmbedReal, RejectsNonHermitian) {
    MatC bad = MatC::Zero(2, 2);
    bad(0, 1) = cxd(1, 0);
    EXPECT_THROW(embed_real(bad), InvariantError);
}

TEST(Solve, MaxTraceUnderTraceBudget) {
    Problem p;
    int w = p.add_block("W", 2);
    p.objective_block(w, MatC::Identity(2, 2));
    int c = p.add_constraint(Rel::Le, 10.0, "power");
    p.constraint_block(c, w, MatC::Identity(2, 2));
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    EXPECT_NEAR(sol.objective_value, 10.0, 1e-6);
    KktReport rep = kkt_check(p, sol);
    EXPECT_LT(rep.worst(), 1e-7) << "primal " << rep.primal_residual << " dual "
                                 << rep.dual_residual << " comp " << rep.complementarity;
}

TEST(Solve, MatchedFilterRankOneMaximizer) {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        int n = 3 + trial % 3;
        VecC h = rng.complex_normal_vector(n);
        double pt = 4.0;
        Problem p;
        int w = p.add_block("W", n);
        p.objective_block(w, MatC(h * h.adjoint()));
        int c = p.add_constraint(Rel::Le, pt, "power");
        p.constraint_block(c, w, MatC::Identity(n, n));
        Solution sol = solve(p);
        ASSERT_EQ(sol.status, Status::Optimal);
        EXPECT_NEAR(sol.objective_value, pt * h.squaredNorm(), 1e-6 * pt * h.squaredNorm());
        Eigen::SelfAdjointEigenSolver<MatC> es(sol.block_values[0]);
        VecC top = es.eigenvectors().col(n - 1);
        double align = std::abs(top.adjoint().dot(h.conjugate()) / h.norm());
        // top is the maximizing direction h* up to phase
        EXPECT_GT(align, 1.0 - 1e-6);
        EXPECT_LT(es.eigenvalues()(n - 2) / es.eigenvalues()(n - 1), 1e-6);
    }
}

// Two 2x2 blocks with trace-coupled constraints. With only trace
// constraints the block optimum is t * (top eigenvector outer product),
// so the SDP reduces to a 2-variable LP over (t1, t2); the oracle scans
// that plane on a 0.01 grid with closed-form 2x2 top eigenvalues.
TEST(Solve, TwoBlockToyAgreesWithBruteForceGrid) {
    Rng rng(23);
    MatC f1 = testutil::random_hermitian(rng, 2);
    MatC f2 = testutil::random_hermitian(rng, 2);
    auto lmax = [](const MatC& f) {
        double a = f(0, 0).real(), d = f(1, 1).real();
        double off = std::abs(f(0, 1));
        return 0.5 * (a + d) + std::sqrt(0.25 * (a - d) * (a - d) + off * off);
    };
    double l1 = lmax(f1), l2 = lmax(f2);

    double best = -1e300;
    for (int i = 0; i <= 120; ++i)
        for (int j = 0; j <= 120; ++j) {
            double t1 = 0.01 * i, t2 = 0.01 * j;
            if (t1 <= 1.0 && t2 <= 1.0 && t1 + 2.0 * t2 <= 2.0)
                best = std::max(best, t1 * std::max(l1, 0.0) + t2 * std::max(l2, 0.0));
        }

    Problem p;
    int b1 = p.add_block("X1", 2);
    int b2 = p.add_block("X2", 2);
    p.objective_block(b1, f1);
    p.objective_block(b2, f2);
    int c1 = p.add_constraint(Rel::Le, 1.0);
    p.constraint_block(c1, b1, MatC::Identity(2, 2));
    int c2 = p.add_constraint(Rel::Le, 1.0);
    p.constraint_block(c2, b2, MatC::Identity(2, 2));
    int c3 = p.add_constraint(Rel::Le, 2.0);
    p.constraint_block(c3, b1, MatC::Identity(2, 2));
    p.constraint_block(c3, b2, MatC(2.0 * MatC::Identity(2, 2)));
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    EXPECT_NEAR(sol.objective_value, best, 0.02);
}

TEST(Solve, ScalarsAndEqualities) {
    Problem p;
    int g = p.add_scalar("gamma", Sign::NonNeg);
    p.objective_scalar(g, 1.0);
    int c = p.add_constraint(Rel::Le, 5.0);
    p.constraint_scalar(c, g, 1.0);
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    EXPECT_NEAR(sol.scalar_values[0], 5.0, 1e-6);

    Problem q;
    Rng rng(3);
    int w = q.add_block("W", 3);
    q.objective_block(w, testutil::random_hermitian(rng, 3));
    int ce = q.add_constraint(Rel::Eq, 7.0, "trace_pin");
    q.constraint_block(ce, w, MatC::Identity(3, 3));
    Solution sq = solve(q);
    ASSERT_EQ(sq.status, Status::Optimal);
    EXPECT_NEAR(sq.block_values[0].trace().real(), 7.0, 1e-6);
}

TEST(Solve, FreeScalarSplitsCorrectly) {
    // maximize -s with s >= -4 free: optimum at s = -4
    Problem p;
    int s = p.add_scalar("s", Sign::Free);
    p.objective_scalar(s, -1.0);
    int c = p.add_constraint(Rel::Ge, -4.0);
    p.constraint_scalar(c, s, 1.0);
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    EXPECT_NEAR(sol.scalar_values[0], -4.0, 1e-6);
    EXPECT_NEAR(sol.objective_value, 4.0, 1e-6);
}

TEST(Solve, DetectsPrimalInfeasible) {
    Problem p;
    int w = p.add_block("W", 2);
    p.objective_block(w, MatC::Identity(2, 2));
    int c1 = p.add_constraint(Rel::Le, 1.0);
    p.constraint_block(c1, w, MatC::Identity(2, 2));
    int c2 = p.add_constraint(Rel::Ge, 2.0);
    p.constraint_block(c2, w, MatC::Identity(2, 2));
    Solution sol = solve(p);
    EXPECT_EQ(sol.status, Status::PrimalInfeasible);
}

TEST(Solve, DetectsUnbounded) {
    Problem p;
    int s = p.add_scalar("s", Sign::NonNeg);
    p.objective_scalar(s, 1.0);
    int c = p.add_constraint(Rel::Ge, 3.0);
    p.constraint_scalar(c, s, 1.0);
    Solution sol = solve(p);
    EXPECT_EQ(sol.status, Status::DualInfeasible);
}

TEST(Solve, DeterministicAcrossRuns) {
    auto build = [] {
        Rng rng(31);
        Problem p;
        int w1 = p.add_block("W1", 4);
        int w2 = p.add_block("W2", 3);
        int g = p.add_scalar("g", Sign::NonNeg);
        p.objective_block(w1, testutil::random_hermitian(rng, 4));
        p.objective_block(w2, testutil::random_hermitian(rng, 3));
        p.objective_scalar(g, 0.3);
        int c1 = p.add_constraint(Rel::Le, 2.0);
        p.constraint_block(c1, w1, MatC::Identity(4, 4));
        int c2 = p.add_constraint(Rel::Le, 1.5);
        p.constraint_block(c2, w2, MatC::Identity(3, 3));
        p.constraint_scalar(c2, g, 1.0);
        int c3 = p.add_constraint(Rel::Le, 3.0);
        p.constraint_block(c3, w1, testutil::random_psd(rng, 4));
        p.constraint_scalar(c3, g, 2.0);
        return p;
    };
    Solution a = solve(build());
    Solution b = solve(build());
    ASSERT_EQ(a.status, Status::Optimal);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_LE(std::abs(a.objective_value - b.objective_value), 1e-12);
}

TEST(Solve, ObjectiveScalingSanity) {
    Rng rng(37);
    MatC f = testutil::random_psd(rng, 3);
    auto build = [&](double t) {
        Problem p;
        int w = p.add_block("W", 3);
        p.objective_block(w, MatC(t * f));
        int c = p.add_constraint(Rel::Le, 2.0);
        p.constraint_block(c, w, MatC::Identity(3, 3));
        return p;
    };
    Solution s1 = solve(build(1.0));
    Solution s5 = solve(build(5.0));
    ASSERT_EQ(s1.status, Status::Optimal);
    ASSERT_EQ(s5.status, Status::Optimal);
    EXPECT_NEAR(s5.objective_value, 5.0 * s1.objective_value,
                1e-6 * std::abs(s5.objective_value));
    EXPECT_LT((s5.block_values[0] - s1.block_values[0]).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Solve, RandomFeasibleProblemsPassKkt) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + seed);
        int n1 = 2 + static_cast<int>(rng.uniform() * 14);  // block sizes <= 16
        int n2 = 2 + static_cast<int>(rng.uniform() * 6);
        Problem p;
        int b1 = p.add_block("X1", n1);
        int b2 = p.add_block("X2", n2);
        int g = p.add_scalar("s", Sign::NonNeg);
        p.objective_block(b1, testutil::random_hermitian(rng, n1));
        p.objective_block(b2, testutil::random_hermitian(rng, n2));
        p.objective_scalar(g, rng.normal());

        // interior point to anchor feasibility
        MatC x1 = testutil::random_psd(rng, n1);
        MatC x2 = testutil::random_psd(rng, n2);
        double s0 = 1.0 + rng.uniform();

        // compactness so the maximum exists
        int cb = p.add_constraint(Rel::Le, x1.trace().real() + x2.trace().real() + 5.0);
        p.constraint_block(cb, b1, MatC::Identity(n1, n1));
        p.constraint_block(cb, b2, MatC::Identity(n2, n2));
        int cs = p.add_constraint(Rel::Le, s0 + 3.0);
        p.constraint_scalar(cs, g, 1.0);

        for (int i = 0; i < 4; ++i) {
            MatC a1 = testutil::random_hermitian(rng, n1);
            MatC a2 = testutil::random_hermitian(rng, n2);
            double c = rng.normal();
            double val = (a1 * x1).trace().real() + (a2 * x2).trace().real() + c * s0;
            Rel rel = i % 3 == 0 ? Rel::Le : (i % 3 == 1 ? Rel::Ge : Rel::Eq);
            double margin = i % 3 == 0 ? 0.5 : (i % 3 == 1 ? -0.5 : 0.0);
            int ci = p.add_constraint(rel, val + margin);
            p.constraint_block(ci, b1, a1);
            p.constraint_block(ci, b2, a2);
            p.constraint_scalar(ci, g, c);
        }
        Solution sol = solve(p);
        ASSERT_EQ(sol.status, Status::Optimal) << "seed " << seed;
        KktReport rep = kkt_check(p, sol);
        EXPECT_LT(rep.worst(), 1e-6) << "seed " << seed << ": primal " << rep.primal_residual
                                     << " dual " << rep.dual_residual << " comp "
                                     << rep.complementarity << " gap " << rep.duality_gap;
    }
}

TEST(Kkt, DiagonalProblemHasKnownDual) {
    // maximize -c.x with sum x = 1, x >= 0: optimum -min(c), dual y = -min(c)
    Problem p;
    VecR c(4);
    c << 0.7, 0.2, 0.9, 0.4;
    std::vector<int> xs;
    for (int i = 0; i < 4; ++i) {
        int s = p.add_scalar("x" + std::to_string(i), Sign::NonNeg);
        p.objective_scalar(s, -c(i));
        xs.push_back(s);
    }
    int ce = p.add_constraint(Rel::Eq, 1.0, "simplex");
    for (int s : xs) p.constraint_scalar(ce, s, 1.0);
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    EXPECT_NEAR(sol.objective_value, -0.2, 1e-7);
    EXPECT_NEAR(sol.constraint_duals[0], -0.2, 1e-6);
    KktReport rep = kkt_check(p, sol);
    EXPECT_LT(rep.duality_gap, 1e-6);
}

TEST(Kkt, PerturbedSolutionFlagsViolatedConstraint) {
    Problem p;
    int w = p.add_block("W", 2);
    p.objective_block(w, MatC::Identity(2, 2));
    int c = p.add_constraint(Rel::Le, 10.0, "power");
    p.constraint_block(c, w, MatC::Identity(2, 2));
    Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal);
    sol.block_values[0] += MatC::Identity(2, 2);  // push the trace past the cap
    KktReport rep = kkt_check(p, sol);
    ASSERT_EQ(rep.violated_constraints.size(), 1u);
    EXPECT_EQ(rep.violated_constraints[0], 0);
}

TEST(Presolve, EmptyConstraintHandling) {
    Problem p;
    int w = p.add_block("W", 2);
    p.objective_block(w, MatC::Identity(2, 2));
    int c = p.add_constraint(Rel::Le, 1.0);
    p.constraint_block(c, w, MatC::Identity(2, 2));
    p.add_constraint(Rel::Le, 0.5);  // empty: 0 <= 0.5, droppable
    Solution sol = solve(p);
    EXPECT_EQ(sol.status, Status::Optimal);
    bool noted = false;
    for (const auto& wmsg : sol.warnings)
        if (wmsg.find("empty") != std::string::npos) noted = true;
    EXPECT_TRUE(noted);

    Problem q;
    int w2 = q.add_block("W", 2);
    q.objective_block(w2, MatC::Identity(2, 2));
    q.add_constraint(Rel::Ge, 1.0);  // empty: 0 >= 1 is infeasible
    EXPECT_EQ(solve(q).status, Status::PrimalInfeasible);
}

TEST(Dump, SdpaFormatSmoke) {
    Problem p;
    int w = p.add_block("W", 2);
    int g = p.add_scalar("g", Sign::NonNeg);
    p.objective_block(w, MatC::Identity(2, 2));
    p.objective_scalar(g, 1.0);
    int c = p.add_constraint(Rel::Le, 3.0);
    p.constraint_block(c, w, MatC::Identity(2, 2));
    p.constraint_scalar(c, g, 1.0);
    std::string path = std::filesystem::temp_directory_path() / "mcisac_dump.dat-s";
    write_sdpa(p, path);
    std::ifstream in(path);
    ASSERT_TRUE(in.good());
    std::string line;
    std::getline(in, line);  // comment
    std::getline(in, line);
    EXPECT_NE(line.find("= mDIM"), std::string::npos);
    std::filesystem::remove(path);
}

} // namespace
