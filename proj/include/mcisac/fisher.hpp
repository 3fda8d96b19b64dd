#pragma once

#include <cassert>
#include <limits>
#include <vector>

#include "mcisac/scenario.hpp"

namespace mcisac {

/// Precoder covariances for one design. CBF keeps per-cell blocks W_mk of
/// size n_tx; CoMP keeps joint blocks W_k of size J*n_tx indexed by the
/// global user id m*K + k.
struct PrecoderSet {
    Mode mode = Mode::Cbf;
    int j_cells = 0;
    int k_users = 0;
    int n_tx = 0;
    std::vector<MatC> w;

    static PrecoderSet zero(const Scenario& s, Mode mode) {
        PrecoderSet p;
        p.mode = mode;
        p.j_cells = s.j_cells;
        p.k_users = s.k_users;
        p.n_tx = s.geometry.n_tx;
        int dim = (mode == Mode::Cbf) ? s.geometry.n_tx : s.n_comp();
        p.w.assign(static_cast<size_t>(s.j_cells) * s.k_users, MatC::Zero(dim, dim));
        return p;
    }

    MatC& block(int m, int k) { return w[static_cast<size_t>(m) * k_users + k]; }
    const MatC& block(int m, int k) const { return w[static_cast<size_t>(m) * k_users + k]; }
    MatC& block(int k_global) { return w[k_global]; }
    const MatC& block(int k_global) const { return w[k_global]; }

    /// CBF transmit covariance of cell m: R_Xm = sum_k W_mk.
    MatC cell_covariance(int m) const {
        MatC r = MatC::Zero(w[0].rows(), w[0].cols());
        if (mode == Mode::Cbf) {
            for (int k = 0; k < k_users; ++k) r += block(m, k);
            return r;
        }
        // CoMP: BS m's own transmit covariance is diagonal block m of R_X
        MatC rx = total_covariance();
        return rx.block(m * n_tx, m * n_tx, n_tx, n_tx);
    }

    /// Joint covariance R_X = sum over all users (CoMP layout only).
    MatC total_covariance() const {
        MatC r = MatC::Zero(w[0].rows(), w[0].cols());
        for (const auto& wk : w) r += wk;
        return r;
    }

    double bs_power(int m) const {
        if (mode == Mode::Cbf) return cell_covariance(m).trace().real();
        double p = 0.0;
        for (const auto& wk : w)
            p += wk.block(m * n_tx, m * n_tx, n_tx, n_tx).trace().real();
        return p;
    }

    /// PSD and per-BS power budget check (tolerances per the contract:
    /// lambda_min >= -1e-8 * trace, tr power <= P_t + 1e-6).
    bool valid(const Scenario& s, std::string* why = nullptr) const {
        for (size_t i = 0; i < w.size(); ++i) {
            if (!is_hermitian(w[i], 1e-9)) {
                if (why) *why = "block " + std::to_string(i) + " not Hermitian";
                return false;
            }
            if (!is_psd(w[i], 1e-8)) {
                if (why) *why = "block " + std::to_string(i) + " not PSD";
                return false;
            }
        }
        for (int m = 0; m < j_cells; ++m)
            if (bs_power(m) > s.power_budget_w + 1e-6) {
                if (why) *why = "BS " + std::to_string(m) + " power budget exceeded";
                return false;
            }
        return true;
    }
};

struct FimResult {
    double value = 0.0;  // scalar Fisher information for theta_mm
    double rcrb = std::numeric_limits<double>::infinity();
};

inline FimResult make_fim_result(double value) {
    FimResult r;
    r.value = value;
    r.rcrb = value > 0.0 ? 1.0 / std::sqrt(value)
                         : std::numeric_limits<double>::infinity();
    return r;
}

/// Echo covariance seen by BS m in CBF, where neighbours' data is unknown:
/// C_m = L * sum_{n != m} G_nm R_n G_nm^H + sigma_R^2 I. The printed form
/// of this model sums the m-th covariance instead of the n-th; scenario's
/// paper_literal_covariance switch restores that reading.
inline MatC cbf_covariance(const Scenario& s, const PrecoderSet& p, int m) {
    const int nr = s.geometry.n_rx;
    MatC c = s.noise_radar_w * MatC::Identity(nr, nr);
    for (int n = 0; n < s.j_cells; ++n) {
        if (n == m) continue;
        MatC g = target_response(s.path_gains(n, m), s.target_angles(m, m),
                                 s.target_angles(n, m), s.geometry)
                     .matrix;
        const MatC r_src = s.paper_literal_covariance ? p.cell_covariance(m)
                                                      : p.cell_covariance(n);
        c += static_cast<double>(s.frame_len) * (g * r_src * g.adjoint());
    }
    return hermitize(c);
}

/// Derivative of the mean w.r.t. theta_mm, stripped of the data matrix:
/// d mu / d theta = M * X. CBF: M = alpha_mm (da v^T + a dv^T). CoMP adds
/// the inter-cell rows, where only a_mm depends on theta_mm.
inline MatC mean_derivative(const Scenario& s, int m, Mode mode) {
    const auto& g = s.geometry;
    const double theta = s.target_angles(m, m);
    const VecC a = steering_rx(theta, g);
    const VecC da = steering_derivative(theta, ArraySide::Rx, g);
    const VecC v = steering_tx(theta, g.n_tx);
    const VecC dv = steering_derivative(theta, ArraySide::Tx, g);
    const cxd alpha = s.path_gains(m, m);

    if (mode == Mode::Cbf)
        return alpha * (da * v.transpose() + a * dv.transpose());

    MatC mfac = MatC::Zero(g.n_rx, s.n_comp());
    mfac.middleCols(m * g.n_tx, g.n_tx) =
        alpha * (da * v.transpose() + a * dv.transpose());
    for (int n = 0; n < s.j_cells; ++n) {
        if (n == m) continue;
        const VecC vn = steering_tx(s.target_angles(n, m), g.n_tx);
        mfac.middleCols(n * g.n_tx, g.n_tx) += s.path_gains(n, m) * (da * vn.transpose());
    }
    return mfac;
}

enum class FimPath { Generic, Expanded };

namespace detail {

// 1x1 quadratic form x^H A y, asserted scalar in debug builds.
inline cxd qform(const VecC& x, const MatC& a, const VecC& y) {
    MatC s = x.adjoint() * a * y;
    assert(s.rows() == 1 && s.cols() == 1);
    return s(0, 0);
}

/// Four-term expansion of the CBF trace: each term is a C^-1 quadratic
/// form in {a, da} times a conjugated-covariance quadratic form in
/// {v, dv}, scaled by L |alpha_mm|^2 and doubled by the real part.
inline double fim_cbf_expanded(const Scenario& s, const PrecoderSet& p, int m) {
    const auto& g = s.geometry;
    const double theta = s.target_angles(m, m);
    const VecC a = steering_rx(theta, g);
    const VecC da = steering_derivative(theta, ArraySide::Rx, g);
    const VecC v = steering_tx(theta, g.n_tx);
    const VecC dv = steering_derivative(theta, ArraySide::Tx, g);

    const MatC cinv = cbf_covariance(s, p, m).inverse();
    const MatC rconj = p.cell_covariance(m).conjugate();

    cxd sum = qform(da, cinv, da) * qform(v, rconj, v) +
              qform(da, cinv, a) * qform(v, rconj, dv) +
              qform(a, cinv, da) * qform(dv, rconj, v) +
              qform(a, cinv, a) * qform(dv, rconj, dv);
    const double amp2 = std::norm(s.path_gains(m, m));
    return 2.0 * s.frame_len * amp2 * sum.real();
}

/// Nine-term CoMP expansion for J = 2: the four own-cell terms, the four
/// cross terms pairing the own and inter-cell rows, and the inter-cell
/// quadratic term. Conjugate placement follows from expanding
/// tr(dmu^H C^-1 dmu); cross coefficients are conj(alpha_nm) alpha_mm and
/// the last term carries |alpha_nm|^2.
inline double fim_comp_expanded(const Scenario& s, const PrecoderSet& p, int m) {
    if (s.j_cells != 2)
        throw InvariantError("closed-form CoMP FIM is derived for J = 2 only");
    const auto& g = s.geometry;
    const int nt = g.n_tx;
    const int n = 1 - m;
    const double theta = s.target_angles(m, m);
    const VecC a = steering_rx(theta, g);
    const VecC da = steering_derivative(theta, ArraySide::Rx, g);
    const VecC v = steering_tx(theta, nt);
    const VecC dv = steering_derivative(theta, ArraySide::Tx, g);
    const VecC vn = steering_tx(s.target_angles(n, m), nt);

    const MatC cinv = (1.0 / s.noise_radar_w) * MatC::Identity(g.n_rx, g.n_rx);
    const MatC rconj = p.total_covariance().conjugate();
    auto rblk = [&](int b1, int b2) { return rconj.block(b1 * nt, b2 * nt, nt, nt); };

    const cxd amm = s.path_gains(m, m);
    const cxd anm = s.path_gains(n, m);

    cxd own = qform(da, cinv, da) * qform(v, rblk(m, m), v) +
              qform(da, cinv, a) * qform(v, rblk(m, m), dv) +
              qform(a, cinv, da) * qform(dv, rblk(m, m), v) +
              qform(a, cinv, a) * qform(dv, rblk(m, m), dv);
    cxd cross = std::conj(anm) * amm *
                    (qform(da, cinv, da) * qform(vn, rblk(n, m), v) +
                     qform(da, cinv, a) * qform(vn, rblk(n, m), dv)) +
                std::conj(amm) * anm *
                    (qform(da, cinv, da) * qform(v, rblk(m, n), vn) +
                     qform(a, cinv, da) * qform(dv, rblk(m, n), vn));
    cxd inter = std::norm(anm) * qform(da, cinv, da) * qform(vn, rblk(n, n), vn);

    cxd sum = std::norm(amm) * own + cross + inter;
    return 2.0 * s.frame_len * sum.real();
}

} // namespace detail

/// Scalar Fisher information for theta_mm:
/// F = 2 L Re tr(M^H C^-1 M R_X), with M from mean_derivative and C the
/// CBF echo covariance (CoMP: C = sigma_R^2 I). The Expanded path
/// recomputes F from the per-term closed forms as an independent route.
inline FimResult fim(const Scenario& s, const PrecoderSet& p, int m, Mode mode,
                     FimPath path = FimPath::Generic) {
    if (path == FimPath::Expanded) {
        double f = (mode == Mode::Cbf) ? detail::fim_cbf_expanded(s, p, m)
                                       : detail::fim_comp_expanded(s, p, m);
        return make_fim_result(f);
    }
    const MatC mfac = mean_derivative(s, m, mode);
    MatC c;
    MatC r;
    if (mode == Mode::Cbf) {
        c = cbf_covariance(s, p, m);
        r = p.cell_covariance(m);
    } else {
        c = s.noise_radar_w * MatC::Identity(s.geometry.n_rx, s.geometry.n_rx);
        r = p.total_covariance();
    }
    const MatC q = mfac.adjoint() * c.llt().solve(mfac);
    const double f = 2.0 * s.frame_len * (q * r).trace().real();
    return make_fim_result(f);
}

/// FIM frozen at a given echo covariance, as a linear functional of the
/// precoder blocks: F = sum_k Re tr(coeff W_k) + constant, summing over
/// cell m's blocks (CBF) or all user blocks (CoMP). coeff is Hermitian
/// PSD, so the functional is monotone in the covariance.
struct FimAffine {
    MatC coeff;
    double constant = 0.0;

    double evaluate(const MatC& r_sum) const {
        return (coeff * r_sum).trace().real() + constant;
    }
};

inline FimAffine fim_affine_coefficients(const Scenario& s, int m, Mode mode,
                                         const MatC& fixed_c) {
    if (min_eigenvalue(fixed_c) <= 0.0)
        throw InvariantError("frozen echo covariance must be positive definite");
    const MatC mfac = mean_derivative(s, m, mode);
    FimAffine a;
    a.coeff = hermitize(2.0 * s.frame_len * (mfac.adjoint() * fixed_c.llt().solve(mfac)));
    a.constant = 0.0;
    return a;
}

} // namespace mcisac
