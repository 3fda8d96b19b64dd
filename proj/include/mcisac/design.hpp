#pragma once

#include <chrono>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "mcisac/fisher.hpp"
#include "mcisac/sdp_core.hpp"

namespace mcisac {

enum class DesignMode { Cbf, Comp, BaselineNoIc };

inline std::string to_string(DesignMode m) {
    switch (m) {
        case DesignMode::Cbf: return "cbf";
        case DesignMode::Comp: return "comp";
        default: return "baseline";
    }
}

struct NormalizationFactors {
    VecR nf_radar = VecR::Ones(1);  // per BS (CBF); single entry for CoMP
    double nf_comm = 1.0;

    double radar(int m) const { return nf_radar.size() == 1 ? nf_radar(0) : nf_radar(m); }
};

struct AlternateOptions {
    int max_outer_iters = 50;
    double rel_tol = 1e-4;
    std::optional<double> gamma_floor;  // linear min-SINR floor
    std::optional<NormalizationFactors> normalization;
    sdp::Options sdp;
    bool parallel_a_step = true;
    bool check_carryover = true;
    std::uint64_t extraction_seed = 1;
};

struct IterationRecord {
    int iter = 0;
    double objective = 0.0;
    double gamma = 0.0;  // proxy min-SINR fed to the B-step
    VecR fim;
    double i_max = 0.0;
    double i_prime_max = 0.0;
    int solver_iters = 0;
    double wall_ms = 0.0;
};

struct DesignResult {
    PrecoderSet precoder_covariances;
    std::vector<VecC> beamformers;  // CBF: index m*K+k; CoMP: global user k
    double gamma = 0.0;             // achieved min SINR of the final covariances
    VecR fim_per_bs;
    double i_max = 0.0;
    double i_prime_max = 0.0;
    std::vector<IterationRecord> trace;
    bool converged = false;
    DesignMode mode = DesignMode::Cbf;
    double rank1_gap_max = 0.0;
    bool used_randomization = false;
    double sinr_extraction_ratio = 1.0;  // extracted / relaxed min-SINR
    std::string diagnostic;
};

/// Principal-eigenpair beamformer and the residual rank-1 gap lambda2/lambda1.
struct Rank1Extraction {
    VecC w;
    double rank1_gap = 0.0;
};

inline Rank1Extraction extract_rank1(const MatC& w_cov) {
    Rank1Extraction r;
    const Eigen::Index n = w_cov.rows();
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitize(w_cov));
    double l1 = es.eigenvalues()(n - 1);
    if (l1 <= 1e-300) {
        r.w = VecC::Zero(n);
        return r;
    }
    r.w = std::sqrt(l1) * es.eigenvectors().col(n - 1);
    r.rank1_gap = n > 1 ? std::max(0.0, es.eigenvalues()(n - 2)) / l1 : 0.0;
    return r;
}

namespace detail {

inline MatC channel_outer(const VecC& h) { return h.conjugate() * h.transpose(); }

/// True per-user SINR of a covariance set under the full multi-cell model.
inline double sinr_cov(const Scenario& s, const PrecoderSet& p, int m, int k) {
    if (p.mode == Mode::Cbf) {
        MatC q_own = channel_outer(s.channel(m, m, k));
        double sig = (q_own * p.block(m, k)).trace().real();
        double intra = 0.0;
        for (int l = 0; l < s.k_users; ++l)
            if (l != k) intra += (q_own * p.block(m, l)).trace().real();
        double inter = 0.0;
        for (int n = 0; n < s.j_cells; ++n) {
            if (n == m) continue;
            MatC q = channel_outer(s.channel(n, m, k));
            for (int l = 0; l < s.k_users; ++l) inter += (q * p.block(n, l)).trace().real();
        }
        return sig / (intra + inter + s.noise_comm_w);
    }
    const int kg = m * s.k_users + k;
    MatC q = channel_outer(s.stacked_channel(m, k));
    double sig = (q * p.block(kg)).trace().real();
    double interf = 0.0;
    for (int l = 0; l < s.total_users(); ++l)
        if (l != kg) interf += (q * p.block(l)).trace().real();
    return sig / (interf + s.noise_comm_w);
}

inline double min_sinr_cov(const Scenario& s, const PrecoderSet& p) {
    double worst = std::numeric_limits<double>::infinity();
    for (int m = 0; m < s.j_cells; ++m)
        for (int k = 0; k < s.k_users; ++k) worst = std::min(worst, sinr_cov(s, p, m, k));
    return worst;
}

inline std::string block_name(int m, int k) {
    return "W_" + std::to_string(m + 1) + "_" + std::to_string(k + 1);
}

} // namespace detail

struct LeakageCaps {
    double inter = 0.0;  // I_max
    double intra = 0.0;  // I'_max
};

/// P1.1.A for one BS: maximize (u/NF_R) FIM + ((1-u)/NF_C) gamma under the
/// leakage-split SINR surrogate, the per-user leakage caps, and the power
/// budget, with the echo covariance frozen at `frozen_c`. The rank-one
/// constraint is dropped (SDR). When u = 1 the SINR rows collapse to the
/// explicit floor (or vanish without one).
inline sdp::Problem build_p11a(const Scenario& s, int m, const MatC& frozen_c,
                               const LeakageCaps& caps, const NormalizationFactors& nf,
                               std::optional<double> gamma_floor = {}) {
    const int K = s.k_users, J = s.j_cells;
    const double u = s.weight_u;
    sdp::Problem p;
    std::vector<int> wb(K);
    for (int k = 0; k < K; ++k) wb[k] = p.add_block(detail::block_name(m, k), s.geometry.n_tx);

    FimAffine fa = fim_affine_coefficients(s, m, Mode::Cbf, frozen_c);
    if (u > 0.0)
        for (int k = 0; k < K; ++k)
            p.objective_block(wb[k], MatC(u / nf.radar(m) * fa.coeff));

    const bool gamma_is_var = u < 1.0;
    int gv = -1;
    if (gamma_is_var) {
        gv = p.add_scalar("gamma", sdp::Sign::NonNeg);
        p.objective_scalar(gv, (1.0 - u) / nf.nf_comm);
        if (gamma_floor) {
            int c = p.add_constraint(sdp::Rel::Ge, *gamma_floor, "gamma_floor");
            p.constraint_scalar(c, gv, 1.0);
        }
    }

    int cp = p.add_constraint(sdp::Rel::Le, s.power_budget_w, "power");
    for (int k = 0; k < K; ++k)
        p.constraint_block(cp, wb[k], MatC::Identity(s.geometry.n_tx, s.geometry.n_tx));

    const double interference_bound = caps.intra + caps.inter + s.noise_comm_w;
    for (int k = 0; k < K; ++k) {
        MatC q = detail::channel_outer(s.channel(m, m, k));
        if (gamma_is_var) {
            int c = p.add_constraint(sdp::Rel::Ge, 0.0, "sinr_u" + std::to_string(k + 1));
            p.constraint_block(c, wb[k], q);
            p.constraint_scalar(c, gv, -interference_bound);
        } else if (gamma_floor) {
            int c = p.add_constraint(sdp::Rel::Ge, *gamma_floor * interference_bound,
                                     "sinr_u" + std::to_string(k + 1));
            p.constraint_block(c, wb[k], q);
        }
        if (K > 1) {
            int c = p.add_constraint(sdp::Rel::Le, caps.intra, "intra_u" + std::to_string(k + 1));
            for (int l = 0; l < K; ++l)
                if (l != k) p.constraint_block(c, wb[l], q);
        }
    }
    for (int n = 0; n < J; ++n) {
        if (n == m) continue;
        for (int k = 0; k < K; ++k) {
            MatC q = detail::channel_outer(s.channel(m, n, k));
            int c = p.add_constraint(sdp::Rel::Le, caps.inter / (J - 1),
                                     "inter_u" + std::to_string(n + 1) + "_" +
                                         std::to_string(k + 1));
            for (int l = 0; l < K; ++l) p.constraint_block(c, wb[l], q);
        }
    }
    return p;
}

/// P1.1.B: joint cap minimization. All cells' blocks are variables along
/// with the caps; the achieved FIM and proxy SINR levels become floors.
/// The caps themselves are floored at 1% of the communication noise so a
/// shrunken cap cannot starve the next A-step of strictly feasible room.
inline sdp::Problem build_p11b(const Scenario& s, const std::vector<MatC>& frozen_cs,
                               double gamma_star, const VecR& fim_targets) {
    const int K = s.k_users, J = s.j_cells, nt = s.geometry.n_tx;
    sdp::Problem p;
    std::vector<std::vector<int>> wb(J, std::vector<int>(K));
    for (int m = 0; m < J; ++m)
        for (int k = 0; k < K; ++k) wb[m][k] = p.add_block(detail::block_name(m, k), nt);
    int iv = p.add_scalar("I_max", sdp::Sign::NonNeg);
    int ipv = p.add_scalar("I_prime", sdp::Sign::NonNeg);
    p.objective_scalar(iv, -1.0);
    p.objective_scalar(ipv, -1.0);
    const double cap_floor = 0.01 * s.noise_comm_w;
    int cf1 = p.add_constraint(sdp::Rel::Ge, cap_floor, "cap_floor_inter");
    p.constraint_scalar(cf1, iv, 1.0);
    int cf2 = p.add_constraint(sdp::Rel::Ge, cap_floor, "cap_floor_intra");
    p.constraint_scalar(cf2, ipv, 1.0);

    for (int m = 0; m < J; ++m) {
        FimAffine fa = fim_affine_coefficients(s, m, Mode::Cbf, frozen_cs[m]);
        int c = p.add_constraint(sdp::Rel::Ge, fim_targets(m), "fim_bs" + std::to_string(m + 1));
        for (int k = 0; k < K; ++k) p.constraint_block(c, wb[m][k], fa.coeff);

        int cp = p.add_constraint(sdp::Rel::Le, s.power_budget_w,
                                  "power_bs" + std::to_string(m + 1));
        for (int k = 0; k < K; ++k) p.constraint_block(cp, wb[m][k], MatC::Identity(nt, nt));

        for (int k = 0; k < K; ++k) {
            MatC q = detail::channel_outer(s.channel(m, m, k));
            int cs = p.add_constraint(sdp::Rel::Ge, gamma_star * s.noise_comm_w,
                                      "sinr_bs" + std::to_string(m + 1) + "_u" +
                                          std::to_string(k + 1));
            p.constraint_block(cs, wb[m][k], q);
            p.constraint_scalar(cs, iv, -gamma_star);
            p.constraint_scalar(cs, ipv, -gamma_star);
            if (K > 1) {
                int ci = p.add_constraint(sdp::Rel::Le, 0.0,
                                          "intra_bs" + std::to_string(m + 1) + "_u" +
                                              std::to_string(k + 1));
                for (int l = 0; l < K; ++l)
                    if (l != k) p.constraint_block(ci, wb[m][l], q);
                p.constraint_scalar(ci, ipv, -1.0);
            }
        }
        for (int n = 0; n < J; ++n) {
            if (n == m) continue;
            for (int k = 0; k < K; ++k) {
                MatC q = detail::channel_outer(s.channel(m, n, k));
                int c2 = p.add_constraint(sdp::Rel::Le, 0.0,
                                          "inter_bs" + std::to_string(m + 1) + "_u" +
                                              std::to_string(n + 1) + "_" + std::to_string(k + 1));
                for (int l = 0; l < K; ++l) p.constraint_block(c2, wb[m][l], q);
                p.constraint_scalar(c2, iv, -1.0 / (J - 1));
            }
        }
    }
    return p;
}

/// P2.1.A: joint CoMP design over N x N user blocks with the min-FIM
/// epigraph f, the shared leakage cap, per-BS power, and the SINR split.
/// The epigraph is expressed in units of fim_scale so the scalar variable
/// stays near the block magnitudes.
inline sdp::Problem build_p21a(const Scenario& s, double cap, const NormalizationFactors& nf,
                               std::optional<double> gamma_floor = {}, double fim_scale = 1.0) {
    const int n = s.n_comp(), nt = s.geometry.n_tx, users = s.total_users();
    const double u = s.weight_u;
    sdp::Problem p;
    std::vector<int> wb(users);
    for (int kg = 0; kg < users; ++kg)
        wb[kg] = p.add_block("W_" + std::to_string(kg + 1), n);

    const MatC noise_c = s.noise_radar_w * MatC::Identity(s.geometry.n_rx, s.geometry.n_rx);
    if (u > 0.0) {
        int fv = p.add_scalar("f", sdp::Sign::NonNeg);
        p.objective_scalar(fv, u / nf.radar(0) * fim_scale);
        for (int m = 0; m < s.j_cells; ++m) {
            FimAffine fa = fim_affine_coefficients(s, m, Mode::Comp, noise_c);
            int c = p.add_constraint(sdp::Rel::Ge, 0.0, "fim_bs" + std::to_string(m + 1));
            for (int kg = 0; kg < users; ++kg)
                p.constraint_block(c, wb[kg], MatC(fa.coeff / fim_scale));
            p.constraint_scalar(c, fv, -1.0);
        }
    }

    const bool gamma_is_var = u < 1.0;
    int gv = -1;
    if (gamma_is_var) {
        gv = p.add_scalar("gamma", sdp::Sign::NonNeg);
        p.objective_scalar(gv, (1.0 - u) / nf.nf_comm);
        if (gamma_floor) {
            int c = p.add_constraint(sdp::Rel::Ge, *gamma_floor, "gamma_floor");
            p.constraint_scalar(c, gv, 1.0);
        }
    }

    for (int m = 0; m < s.j_cells; ++m) {
        MatC sel = MatC::Zero(n, n);
        sel.block(m * nt, m * nt, nt, nt).setIdentity();
        int cp = p.add_constraint(sdp::Rel::Le, s.power_budget_w,
                                  "power_bs" + std::to_string(m + 1));
        for (int kg = 0; kg < users; ++kg) p.constraint_block(cp, wb[kg], sel);
    }

    const double interference_bound = cap + s.noise_comm_w;
    for (int m = 0; m < s.j_cells; ++m)
        for (int k = 0; k < s.k_users; ++k) {
            const int kg = m * s.k_users + k;
            MatC q = detail::channel_outer(s.stacked_channel(m, k));
            if (users > 1) {
                int cl = p.add_constraint(sdp::Rel::Le, cap, "leak_u" + std::to_string(kg + 1));
                for (int l = 0; l < users; ++l)
                    if (l != kg) p.constraint_block(cl, wb[l], q);
            }
            if (gamma_is_var) {
                int cs = p.add_constraint(sdp::Rel::Ge, 0.0, "sinr_u" + std::to_string(kg + 1));
                p.constraint_block(cs, wb[kg], q);
                p.constraint_scalar(cs, gv, -interference_bound);
            } else if (gamma_floor) {
                int cs = p.add_constraint(sdp::Rel::Ge, *gamma_floor * interference_bound,
                                          "sinr_u" + std::to_string(kg + 1));
                p.constraint_block(cs, wb[kg], q);
            }
        }
    return p;
}

/// P2.1.B: minimize the shared leakage cap at fixed performance targets.
inline sdp::Problem build_p21b(const Scenario& s, double f_star, double gamma_star) {
    const int n = s.n_comp(), nt = s.geometry.n_tx, users = s.total_users();
    sdp::Problem p;
    std::vector<int> wb(users);
    for (int kg = 0; kg < users; ++kg)
        wb[kg] = p.add_block("W_" + std::to_string(kg + 1), n);
    int iv = p.add_scalar("I_max", sdp::Sign::NonNeg);
    p.objective_scalar(iv, -1.0);
    int cf = p.add_constraint(sdp::Rel::Ge, 0.01 * s.noise_comm_w, "cap_floor");
    p.constraint_scalar(cf, iv, 1.0);

    const MatC noise_c = s.noise_radar_w * MatC::Identity(s.geometry.n_rx, s.geometry.n_rx);
    for (int m = 0; m < s.j_cells; ++m) {
        FimAffine fa = fim_affine_coefficients(s, m, Mode::Comp, noise_c);
        int c = p.add_constraint(sdp::Rel::Ge, f_star, "fim_bs" + std::to_string(m + 1));
        for (int kg = 0; kg < users; ++kg) p.constraint_block(c, wb[kg], fa.coeff);

        MatC sel = MatC::Zero(n, n);
        sel.block(m * nt, m * nt, nt, nt).setIdentity();
        int cp = p.add_constraint(sdp::Rel::Le, s.power_budget_w,
                                  "power_bs" + std::to_string(m + 1));
        for (int kg = 0; kg < users; ++kg) p.constraint_block(cp, wb[kg], sel);
    }
    for (int m = 0; m < s.j_cells; ++m)
        for (int k = 0; k < s.k_users; ++k) {
            const int kg = m * s.k_users + k;
            MatC q = detail::channel_outer(s.stacked_channel(m, k));
            int cs = p.add_constraint(sdp::Rel::Ge, gamma_star * s.noise_comm_w,
                                      "sinr_u" + std::to_string(kg + 1));
            p.constraint_block(cs, wb[kg], q);
            p.constraint_scalar(cs, iv, -gamma_star);
            if (users > 1) {
                int cl = p.add_constraint(sdp::Rel::Le, 0.0, "leak_u" + std::to_string(kg + 1));
                for (int l = 0; l < users; ++l)
                    if (l != kg) p.constraint_block(cl, wb[l], q);
                p.constraint_scalar(cl, iv, -1.0);
            }
        }
    return p;
}

namespace detail {

inline double max_channel_norm2(const Scenario& s) {
    double worst = 0.0;
    for (int n = 0; n < s.j_cells; ++n)
        for (int m = 0; m < s.j_cells; ++m)
            for (int k = 0; k < s.k_users; ++k)
                worst = std::max(worst, s.channel(n, m, k).squaredNorm());
    return worst;
}

inline PrecoderSet initial_precoders(const Scenario& s, Mode mode) {
    PrecoderSet p = PrecoderSet::zero(s, mode);
    if (mode == Mode::Cbf) {
        double t = s.power_budget_w / (s.k_users * s.geometry.n_tx);
        for (auto& w : p.w) w = t * MatC::Identity(s.geometry.n_tx, s.geometry.n_tx);
    } else {
        double t = s.power_budget_w / (s.total_users() * s.geometry.n_tx);
        for (auto& w : p.w) w = t * MatC::Identity(s.n_comp(), s.n_comp());
    }
    return p;
}

/// Min over users of the SINR surrogate tr(Q W_k) / (caps + noise), the
/// level the B-step must preserve.
inline double proxy_gamma(const Scenario& s, const PrecoderSet& p, double interference_bound) {
    double worst = std::numeric_limits<double>::infinity();
    for (int m = 0; m < s.j_cells; ++m)
        for (int k = 0; k < s.k_users; ++k) {
            MatC q = (p.mode == Mode::Cbf) ? channel_outer(s.channel(m, m, k))
                                           : channel_outer(s.stacked_channel(m, k));
            const MatC& w = (p.mode == Mode::Cbf) ? p.block(m, k)
                                                  : p.block(m * s.k_users + k);
            worst = std::min(worst, (q * w).trace().real() / interference_bound);
        }
    return worst;
}

/// A solve is usable if it reached the termination contract, or stopped
/// at the iteration cap with residuals still inside a verified envelope.
inline bool usable(const sdp::Solution& sol) {
    if (sol.status == sdp::Status::Optimal) return true;
    return sol.status == sdp::Status::MaxIterations && sol.primal_residual <= 1e-6 &&
           sol.dual_residual <= 1e-6 && sol.relative_gap <= 1e-5;
}

/// Extracted beamformer set. Falls back to seeded Gaussian randomization
/// when some block is materially rank-deficient, scoring candidate sets
/// by the true min-SINR they achieve.
struct ExtractionOutcome {
    std::vector<VecC> beamformers;
    double max_gap = 0.0;
    bool used_randomization = false;
    double sinr_ratio = 1.0;
};

inline ExtractionOutcome extract_beamformers(const Scenario& s, const PrecoderSet& p,
                                             std::uint64_t seed) {
    ExtractionOutcome out;
    const size_t nblocks = p.w.size();
    out.beamformers.resize(nblocks);
    for (size_t i = 0; i < nblocks; ++i) {
        Rank1Extraction r = extract_rank1(p.w[i]);
        out.beamformers[i] = r.w;
        out.max_gap = std::max(out.max_gap, r.rank1_gap);
    }
    double relaxed = min_sinr_cov(s, p);
    auto as_set = [&](const std::vector<VecC>& ws) {
        PrecoderSet q = PrecoderSet::zero(s, p.mode);
        for (size_t i = 0; i < nblocks; ++i) q.w[i] = ws[i] * ws[i].adjoint();
        return q;
    };
    double best = min_sinr_cov(s, as_set(out.beamformers));
    if (out.max_gap > 1e-3) {
        out.used_randomization = true;
        for (int cand = 0; cand < 100; ++cand) {
            Rng rng = Rng::substream(seed, cand);
            std::vector<VecC> ws(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                const MatC& w = p.w[i];
                double tr = w.trace().real();
                if (tr <= 1e-300) {
                    ws[i] = VecC::Zero(w.rows());
                    continue;
                }
                Eigen::SelfAdjointEigenSolver<MatC> es(hermitize(w));
                VecR lam = es.eigenvalues().cwiseMax(0.0);
                VecC xi = rng.complex_normal_vector(w.rows());
                VecC v = es.eigenvectors() * lam.cwiseSqrt().asDiagonal().toDenseMatrix().cast<cxd>() * xi;
                ws[i] = std::sqrt(tr) * v.normalized();
            }
            double score = min_sinr_cov(s, as_set(ws));
            if (score > best) {
                best = score;
                out.beamformers = ws;
            }
        }
    }
    out.sinr_ratio = relaxed > 0.0 ? best / relaxed : 1.0;
    return out;
}

} // namespace detail

NormalizationFactors normalization_factors(const Scenario& s, Mode mode,
                                           const AlternateOptions& options = {});

/// Alternating SDR design. CBF refreshes the frozen echo covariance from
/// the previous iterate, solves P1.1.A per BS, then the joint cap
/// minimization P1.1.B; CoMP runs the same loop without the covariance
/// refresh using P2.1.A/B. Stops on relative objective change below
/// rel_tol, on an objective plateau, or at the iteration cap.
inline DesignResult alternate(const Scenario& scenario, DesignMode design_mode,
                              const AlternateOptions& options = {});

namespace detail {

inline DesignResult alternate_coordinated(const Scenario& s, Mode mode,
                                          const AlternateOptions& options) {
    using clock = std::chrono::steady_clock;
    const int J = s.j_cells, K = s.k_users;
    const double u = s.weight_u;

    NormalizationFactors nf;
    if (options.normalization) {
        nf = *options.normalization;
    } else if (u > 0.0 && u < 1.0) {
        nf = normalization_factors(s, mode, options);
    }

    DesignResult res;
    res.mode = mode == Mode::Cbf ? DesignMode::Cbf : DesignMode::Comp;
    PrecoderSet w = initial_precoders(s, mode);
    LeakageCaps caps;
    if (options.gamma_floor) {
        caps.inter = caps.intra = s.noise_comm_w;
    } else {
        caps.inter = caps.intra = s.power_budget_w * max_channel_norm2(s) / 10.0;
    }

    double prev_obj = -std::numeric_limits<double>::infinity();
    std::string defect;

    for (int it = 1; it <= options.max_outer_iters; ++it) {
        auto t0 = clock::now();
        int solver_iters = 0;

        std::vector<MatC> frozen(J);
        for (int m = 0; m < J; ++m)
            frozen[m] = (mode == Mode::Cbf)
                            ? cbf_covariance(s, w, m)
                            : MatC(s.noise_radar_w *
                                   MatC::Identity(s.geometry.n_rx, s.geometry.n_rx));

        // A-step
        PrecoderSet wa = PrecoderSet::zero(s, mode);
        bool a_ok = true;
        std::string a_msg;
        if (mode == Mode::Cbf) {
            std::vector<sdp::Solution> sols(J);
            auto run = [&](int m) {
                return sdp::solve(build_p11a(s, m, frozen[m], caps, nf, options.gamma_floor),
                                  options.sdp);
            };
            if (options.parallel_a_step && J > 1) {
                std::vector<std::future<sdp::Solution>> futs;
                for (int m = 0; m < J; ++m)
                    futs.push_back(std::async(std::launch::async, run, m));
                for (int m = 0; m < J; ++m) sols[m] = futs[m].get();
            } else {
                for (int m = 0; m < J; ++m) sols[m] = run(m);
            }
            for (int m = 0; m < J; ++m) {
                solver_iters += sols[m].iterations;
                if (!usable(sols[m])) {
                    a_ok = false;
                    a_msg = "P1.1.A for BS " + std::to_string(m + 1) + " returned " +
                            sdp::to_string(sols[m].status);
                } else {
                    for (int k = 0; k < K; ++k) wa.block(m, k) = sols[m].block_values[k];
                }
            }
        } else {
            FimAffine fa0 = fim_affine_coefficients(s, 0, Mode::Comp, frozen[0]);
            double fim_scale = std::max(1.0, fa0.evaluate(w.total_covariance()));
            sdp::Solution sol = sdp::solve(
                build_p21a(s, caps.inter, nf, options.gamma_floor, fim_scale), options.sdp);
            solver_iters += sol.iterations;
            if (!usable(sol)) {
                a_ok = false;
                a_msg = "P2.1.A returned " + sdp::to_string(sol.status);
            } else {
                for (int kg = 0; kg < s.total_users(); ++kg) wa.block(kg) = sol.block_values[kg];
            }
        }
        if (!a_ok) {
            if (it == 1) throw SolverError(a_msg + " at the first iteration");
            res.diagnostic = a_msg + "; keeping the previous iterate";
            break;
        }

        // achieved targets at the frozen covariances
        VecR fim_star(J);
        for (int m = 0; m < J; ++m) {
            FimAffine fa = fim_affine_coefficients(s, m, mode, frozen[m]);
            fim_star(m) = fa.evaluate(mode == Mode::Cbf ? wa.cell_covariance(m)
                                                        : wa.total_covariance());
        }
        const double bound = (mode == Mode::Cbf) ? caps.intra + caps.inter + s.noise_comm_w
                                                 : caps.inter + s.noise_comm_w;
        double gamma_star;
        if (u >= 1.0) {
            gamma_star = options.gamma_floor.value_or(0.0);
        } else {
            gamma_star = proxy_gamma(s, wa, bound);
            if (options.gamma_floor) gamma_star = std::max(gamma_star, *options.gamma_floor);
        }

        double objective = 0.0;
        for (int m = 0; m < J; ++m) objective += u / nf.radar(m) * fim_star(m);
        if (mode == Mode::Comp) objective = u / nf.radar(0) * fim_star.minCoeff();
        objective += (1.0 - u) / nf.nf_comm * gamma_star * (mode == Mode::Cbf ? J : 1);

        // plateau guard: alternating ascent has stalled if the refreshed
        // objective drops; keep the previous iterate and stop
        if (objective < prev_obj - 1e-9 * std::max(1.0, std::abs(prev_obj))) {
            res.converged = true;
            res.diagnostic = "objective plateau at iteration " + std::to_string(it);
            break;
        }

        // B-step
        double relax = 1.0;
        sdp::Solution bsol;
        for (int attempt = 0; attempt < 2; ++attempt) {
            VecR targets = (fim_star * relax).cwiseMax(0.0);
            sdp::Problem bp = (mode == Mode::Cbf)
                                  ? build_p11b(s, frozen, gamma_star, targets)
                                  : build_p21b(s, relax * fim_star.minCoeff(), gamma_star);
            if (options.check_carryover && attempt == 0) {
                // A-step iterate with the incumbent caps must stay feasible
                std::vector<double> scal;
                if (mode == Mode::Cbf) scal = {caps.inter, caps.intra};
                else scal = {caps.inter};
                for (size_t ci = 0; ci < bp.constraints().size(); ++ci) {
                    const auto& con = bp.constraints()[ci];
                    double g = bp.evaluate(con.lhs, wa.w, scal);
                    double viol = con.rel == sdp::Rel::Le ? g - con.rhs : con.rhs - g;
                    if (viol > 1e-6 * std::max(1.0, std::abs(con.rhs)))
                        defect = "carry-over violation at iteration " + std::to_string(it) +
                                 " constraint " + con.name;
                }
            }
            bsol = sdp::solve(bp, options.sdp);
            solver_iters += bsol.iterations;
            if (usable(bsol)) break;
            relax *= 0.999;  // shave the FIM floor and retry once
        }
        if (!usable(bsol)) {
            res.diagnostic = "P1.1.B/P2.1.B returned " + sdp::to_string(bsol.status) +
                             "; keeping the previous iterate";
            break;
        }

        for (size_t i = 0; i < w.w.size(); ++i) w.w[i] = hermitize(bsol.block_values[i]);
        if (mode == Mode::Cbf) {
            caps.inter = bsol.scalar_values[0];
            caps.intra = bsol.scalar_values[1];
        } else {
            caps.inter = bsol.scalar_values[0];
        }

        IterationRecord rec;
        rec.iter = it;
        rec.objective = objective;
        rec.gamma = gamma_star;
        rec.fim = fim_star;
        rec.i_max = caps.inter;
        rec.i_prime_max = caps.intra;
        rec.solver_iters = solver_iters;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        res.trace.push_back(rec);

        if (std::isfinite(prev_obj) &&
            std::abs(objective - prev_obj) <=
                options.rel_tol * std::max(1.0, std::abs(prev_obj))) {
            res.converged = true;
            break;
        }
        prev_obj = objective;
    }
    if (!res.trace.empty() && !res.converged && res.diagnostic.empty())
        res.diagnostic = "iteration cap reached";
    if (!defect.empty()) res.diagnostic += (res.diagnostic.empty() ? "" : "; ") + defect;

    res.precoder_covariances = w;
    res.i_max = caps.inter;
    res.i_prime_max = caps.intra;
    res.fim_per_bs.resize(J);
    for (int m = 0; m < J; ++m) res.fim_per_bs(m) = fim(s, w, m, mode).value;
    res.gamma = min_sinr_cov(s, w);

    auto ext = extract_beamformers(s, w, options.extraction_seed);
    res.beamformers = std::move(ext.beamformers);
    res.rank1_gap_max = ext.max_gap;
    res.used_randomization = ext.used_randomization;
    res.sinr_extraction_ratio = ext.sinr_ratio;
    return res;
}

/// Single-cell view of cell m: the neighbour links are simply absent.
inline Scenario isolated_cell(const Scenario& s, int m) {
    Scenario one = s;
    one.j_cells = 1;
    one.target_angles = MatR::Constant(1, 1, s.target_angles(m, m));
    one.path_gains = MatC::Constant(1, 1, s.path_gains(m, m));
    one.channels = ChannelMap(1, s.k_users, s.geometry.n_tx);
    for (int k = 0; k < s.k_users; ++k) one.channels.at(0, 0, k) = s.channel(m, m, k);
    one.validate();
    return one;
}

} // namespace detail

inline NormalizationFactors normalization_factors(const Scenario& s, Mode mode,
                                                  const AlternateOptions& options) {
    AlternateOptions sub = options;
    sub.normalization = NormalizationFactors{};  // unit factors for the anchor solves
    sub.gamma_floor.reset();

    Scenario radar = s;
    radar.weight_u = 1.0;
    DesignResult r = detail::alternate_coordinated(radar, mode, sub);

    Scenario comm = s;
    comm.weight_u = 0.0;
    DesignResult c = detail::alternate_coordinated(comm, mode, sub);

    NormalizationFactors nf;
    if (mode == Mode::Cbf) {
        nf.nf_radar = r.fim_per_bs;
    } else {
        nf.nf_radar = VecR::Constant(1, r.fim_per_bs.minCoeff());
    }
    double gamma = c.trace.empty() ? c.gamma : c.trace.back().gamma;
    nf.nf_comm = gamma;
    for (int m = 0; m < nf.nf_radar.size(); ++m)
        if (!(nf.nf_radar(m) > 0.0)) throw SolverError("degenerate radar normalization factor");
    if (!(nf.nf_comm > 0.0)) throw SolverError("degenerate SINR normalization factor");
    return nf;
}

/// Independent per-cell designs that ignore every inter-cell link. The
/// result carries CBF-layout covariances and is meant to be evaluated
/// under the true multi-cell model afterwards.
inline DesignResult baseline_no_ic(const Scenario& s, const AlternateOptions& options = {}) {
    DesignResult res;
    res.mode = DesignMode::BaselineNoIc;
    res.precoder_covariances = PrecoderSet::zero(s, Mode::Cbf);
    res.fim_per_bs.resize(s.j_cells);
    res.converged = true;
    res.beamformers.resize(static_cast<size_t>(s.j_cells) * s.k_users);

    for (int m = 0; m < s.j_cells; ++m) {
        Scenario one = detail::isolated_cell(s, m);
        DesignResult sub = detail::alternate_coordinated(one, Mode::Cbf, options);
        for (int k = 0; k < s.k_users; ++k) {
            res.precoder_covariances.block(m, k) = sub.precoder_covariances.block(0, k);
            res.beamformers[static_cast<size_t>(m) * s.k_users + k] = sub.beamformers[k];
        }
        res.converged = res.converged && sub.converged;
        res.rank1_gap_max = std::max(res.rank1_gap_max, sub.rank1_gap_max);
        res.i_max = std::max(res.i_max, sub.i_max);
        res.i_prime_max = std::max(res.i_prime_max, sub.i_prime_max);
        // merge traces by outer iteration
        for (size_t t = 0; t < sub.trace.size(); ++t) {
            if (t >= res.trace.size()) {
                IterationRecord rec = sub.trace[t];
                rec.fim = VecR::Zero(s.j_cells);
                rec.fim(m) = sub.trace[t].fim(0);
                res.trace.push_back(rec);
            } else {
                res.trace[t].objective += sub.trace[t].objective;
                res.trace[t].gamma = std::min(res.trace[t].gamma, sub.trace[t].gamma);
                res.trace[t].fim(m) = sub.trace[t].fim(0);
                res.trace[t].solver_iters += sub.trace[t].solver_iters;
                res.trace[t].wall_ms += sub.trace[t].wall_ms;
            }
        }
    }
    // evaluated under the true multi-cell model
    for (int m = 0; m < s.j_cells; ++m)
        res.fim_per_bs(m) = fim(s, res.precoder_covariances, m, Mode::Cbf).value;
    res.gamma = detail::min_sinr_cov(s, res.precoder_covariances);
    return res;
}

inline DesignResult alternate(const Scenario& scenario, DesignMode design_mode,
                              const AlternateOptions& options) {
    if (design_mode == DesignMode::BaselineNoIc) return baseline_no_ic(scenario, options);
    return detail::alternate_coordinated(
        scenario, design_mode == DesignMode::Cbf ? Mode::Cbf : Mode::Comp, options);
}

} // namespace mcisac
