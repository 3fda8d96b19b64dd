#pragma once

#include <optional>
#include <vector>

#include "mcisac/design.hpp"

namespace mcisac {

/// Covariance-form SINR of user (m, k) under the full multi-cell model.
inline double sinr(const Scenario& s, const PrecoderSet& p, int m, int k) {
    return detail::sinr_cov(s, p, m, k);
}

/// Vector-form SINR from extracted beamformers; identical to the trace
/// form when W_k = w_k w_k^H.
inline double sinr(const Scenario& s, const std::vector<VecC>& beamformers, Mode mode, int m,
                   int k) {
    auto pow2 = [](cxd z) { return std::norm(z); };
    if (mode == Mode::Cbf) {
        const VecC& h_own = s.channel(m, m, k);
        double sig = pow2((h_own.transpose() * beamformers[m * s.k_users + k])(0));
        double intra = 0.0;
        for (int l = 0; l < s.k_users; ++l)
            if (l != k) intra += pow2((h_own.transpose() * beamformers[m * s.k_users + l])(0));
        double inter = 0.0;
        for (int n = 0; n < s.j_cells; ++n) {
            if (n == m) continue;
            const VecC hn = s.channel(n, m, k);
            for (int l = 0; l < s.k_users; ++l)
                inter += pow2((hn.transpose() * beamformers[n * s.k_users + l])(0));
        }
        return sig / (intra + inter + s.noise_comm_w);
    }
    const int kg = m * s.k_users + k;
    VecC h = s.stacked_channel(m, k);
    double sig = pow2((h.transpose() * beamformers[kg])(0));
    double interf = 0.0;
    for (int l = 0; l < s.total_users(); ++l)
        if (l != kg) interf += pow2((h.transpose() * beamformers[l])(0));
    return sig / (interf + s.noise_comm_w);
}

struct BeampatternSample {
    double theta_deg = 0.0;
    double power = 0.0;  // linear (watts toward the direction)
};

/// Transmit beampattern P(theta) = Re{v(theta)^H R_X v(theta)} over the
/// grid. Accepts the +-90 degree endpoints, which the estimation-side
/// steering functions exclude.
inline std::vector<BeampatternSample> beampattern(const MatC& r_x,
                                                  const std::vector<double>& grid_deg) {
    const int n = static_cast<int>(r_x.rows());
    std::vector<BeampatternSample> out;
    out.reserve(grid_deg.size());
    for (double deg : grid_deg) {
        VecC v = detail::steering_unchecked(deg2rad(deg), n, 1.0);
        double pw = (v.adjoint() * r_x * v)(0).real();
        out.push_back({deg, pw});
    }
    return out;
}

inline std::vector<double> default_beampattern_grid(double step_deg = 0.25) {
    std::vector<double> g;
    for (double d = -90.0; d <= 90.0 + 1e-9; d += step_deg) g.push_back(d);
    return g;
}

struct RcrbPair {
    double expected = 0.0;  // under the designer's assumed model
    double actual = 0.0;    // under the full multi-cell model
};

/// Expected vs actual root-CRB per BS. Coordinated designs assume the
/// model they are evaluated under, so the two coincide; the baseline's
/// expectation ignores every inter-cell term and is optimistic.
inline std::vector<RcrbPair> rcrb_pair(const Scenario& s, const DesignResult& design) {
    std::vector<RcrbPair> out(s.j_cells);
    const PrecoderSet& w = design.precoder_covariances;
    for (int m = 0; m < s.j_cells; ++m) {
        if (design.mode == DesignMode::BaselineNoIc) {
            Scenario one = detail::isolated_cell(s, m);
            PrecoderSet sub = PrecoderSet::zero(one, Mode::Cbf);
            for (int k = 0; k < s.k_users; ++k) sub.block(0, k) = w.block(m, k);
            out[m].expected = fim(one, sub, 0, Mode::Cbf).rcrb;
            out[m].actual = fim(s, w, m, Mode::Cbf).rcrb;
        } else {
            Mode mode = design.mode == DesignMode::Cbf ? Mode::Cbf : Mode::Comp;
            double rcrb = fim(s, w, m, mode).rcrb;
            out[m].expected = rcrb;
            out[m].actual = rcrb;
        }
    }
    return out;
}

/// One simulated frame: the echo at BS m plus the data realization the
/// estimator is entitled to know.
struct EchoSim {
    MatC y;                  // n_rx x L
    std::vector<MatC> x;     // per-cell transmit matrices X_n (n_tx x L)
};

namespace detail {

/// K orthogonal unit-power rows: (1/L) S S^H = I_K exactly.
inline MatC orthogonal_streams(Rng& rng, int k_streams, int frame_len) {
    MatC g = rng.complex_normal_matrix(frame_len, k_streams);
    Eigen::HouseholderQR<MatC> qr(g);
    MatC q = qr.householderQ() * MatC::Identity(frame_len, k_streams);
    return std::sqrt(static_cast<double>(frame_len)) * q.transpose();
}

} // namespace detail

/// Draws orthogonal symbol streams, forms X_n = W_n S_n, and returns the
/// echo Y_m = sum_n G_nm X_n + Z with i.i.d. CN(0, sigma_R^2) noise.
/// CoMP shares one 2K-stream matrix across BSs; CBF draws independent
/// per-cell streams.
inline EchoSim simulate_echo(const Scenario& s, const std::vector<VecC>& beamformers, int m,
                             Mode mode, std::uint64_t seed) {
    const int L = s.frame_len, nt = s.geometry.n_tx, nr = s.geometry.n_rx;
    const int K = s.k_users, J = s.j_cells;
    EchoSim sim;
    sim.x.assign(J, MatC::Zero(nt, L));

    if (mode == Mode::Comp) {
        if (L < J * K)
            throw ConfigError("system.frame_len",
                              "frame too short for " + std::to_string(J * K) +
                                  " orthogonal streams");
        Rng rng = Rng::substream(seed, 0);
        MatC streams = detail::orthogonal_streams(rng, J * K, L);
        MatC x_full = MatC::Zero(J * nt, L);
        for (int kg = 0; kg < J * K; ++kg) x_full += beamformers[kg] * streams.row(kg);
        for (int n = 0; n < J; ++n) sim.x[n] = x_full.middleRows(n * nt, nt);
    } else {
        if (L < K)
            throw ConfigError("system.frame_len", "frame too short for the per-cell streams");
        for (int n = 0; n < J; ++n) {
            Rng rng = Rng::substream(seed, n);
            MatC streams = detail::orthogonal_streams(rng, K, L);
            for (int k = 0; k < K; ++k)
                sim.x[n] += beamformers[n * K + k] * streams.row(k);
        }
    }

    sim.y = MatC::Zero(nr, L);
    for (int n = 0; n < J; ++n) {
        MatC g = target_response(s.path_gains(n, m), s.target_angles(m, m),
                                 s.target_angles(n, m), s.geometry)
                     .matrix;
        sim.y += g * sim.x[n];
    }
    Rng noise_rng = Rng::substream(seed, 1000 + m);
    sim.y += std::sqrt(s.noise_radar_w) * noise_rng.complex_normal_matrix(nr, L);
    return sim;
}

namespace detail {

/// Negative concentrated log-likelihood at candidate theta: the own-path
/// amplitude is fitted in closed form, the inter-cell rows are known
/// (CoMP) or folded into the whitened noise (CBF).
class AngleObjective {
public:
    AngleObjective(const Scenario& s, const EchoSim& sim, int m, Mode mode,
                   const PrecoderSet* precoders)
        : s_(s), sim_(sim), m_(m), mode_(mode) {
        if (mode == Mode::Cbf && precoders != nullptr) {
            // genie covariance whitening to match the estimation model
            MatC c = cbf_covariance(s, *precoders, m);
            white_ = MatC(c.llt().matrixL()).inverse();
        } else {
            white_ = MatC::Identity(s.geometry.n_rx, s.geometry.n_rx);
        }
        yw_ = white_ * sim.y;
        if (mode == Mode::Comp) {
            r_ = MatC::Zero(1, s.frame_len);
            for (int n = 0; n < s.j_cells; ++n) {
                if (n == m_) continue;
                r_ += s.path_gains(n, m_) *
                      (steering_tx(s.target_angles(n, m_), s.geometry.n_tx).transpose() *
                       sim.x[n]);
            }
        } else {
            r_ = MatC::Zero(1, s.frame_len);
        }
    }

    double operator()(double theta) const {
        const VecC a = white_ * detail::steering_unchecked(theta, s_.geometry.n_rx,
                                                           s_.geometry.n_tx);
        const MatC u = detail::steering_unchecked(theta, s_.geometry.n_tx, 1.0).transpose() *
                       sim_.x[m_];  // 1 x L
        // residual after removing the known inter-cell rows
        MatC resid = yw_ - a * r_;
        const double bnorm2 = a.squaredNorm() * u.squaredNorm();
        if (bnorm2 <= 1e-300) return resid.squaredNorm();
        cxd inner = (a.adjoint() * resid * u.adjoint())(0);
        return resid.squaredNorm() - std::norm(inner) / bnorm2;
    }

private:
    const Scenario& s_;
    const EchoSim& sim_;
    int m_;
    Mode mode_;
    MatC white_;
    MatC yw_;
    MatC r_;
};

} // namespace detail

/// Grid-plus-golden-section maximum-likelihood azimuth estimate. The
/// complex path amplitude is concentrated out per candidate angle; the
/// coarse grid is refined to 1e-4 degrees.
inline double ml_estimate_angle(const Scenario& s, const EchoSim& sim, int m, Mode mode,
                                double grid_res_deg = 0.1,
                                const PrecoderSet* precoders = nullptr) {
    detail::AngleObjective obj(s, sim, m, mode, precoders);
    double best_theta = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (double deg = -89.9; deg <= 89.9 + 1e-12; deg += grid_res_deg) {
        double v = obj(deg2rad(deg));
        if (v < best) {
            best = v;
            best_theta = deg;
        }
    }
    // golden-section refinement inside the bracketing cell
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = deg2rad(best_theta - grid_res_deg);
    double hi = deg2rad(best_theta + grid_res_deg);
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = obj(c), fd = obj(d);
    while (hi - lo > deg2rad(1e-4)) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = obj(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = obj(d);
        }
    }
    return 0.5 * (lo + hi);
}

struct McPoint {
    double snr_db = 0.0;  // P_t / sigma_R^2
    int trials = 0;
    double rmse_rad = 0.0;
    double rcrb_rad = 0.0;
    double outlier_rate = 0.0;  // fraction with |error| > 2 degrees
};

struct McConfig {
    int trials = 2000;
    std::vector<double> noise_radar_dbm = {10.0, 0.0, -10.0, -20.0};
    double grid_res_deg = 0.1;
    std::uint64_t seed = 1;
    int parallelism = 4;
};

/// Monte-Carlo validation of the computed bound: empirical RMSE of the ML
/// estimator against the RCRB, per radar-noise level. No trial is ever
/// discarded; outliers are reported separately.
inline std::vector<McPoint> monte_carlo_rmse(const Scenario& s, const DesignResult& design,
                                             int m, const McConfig& cfg) {
    Mode mode = design.mode == DesignMode::Comp ? Mode::Comp : Mode::Cbf;
    // bound for the covariance the rank-one beamformers actually transmit
    PrecoderSet sent = PrecoderSet::zero(s, mode);
    for (size_t i = 0; i < sent.w.size(); ++i)
        sent.w[i] = design.beamformers[i] * design.beamformers[i].adjoint();
    std::vector<McPoint> out;
    for (double noise_dbm : cfg.noise_radar_dbm) {
        Scenario sn = s;
        sn.noise_radar_w = dbm_to_watts(noise_dbm);
        McPoint pt;
        pt.snr_db = linear_to_db(sn.power_budget_w / sn.noise_radar_w);
        pt.trials = cfg.trials;
        pt.rcrb_rad = fim(sn, sent, m, mode).rcrb;

        const double truth = s.target_angles(m, m);
        std::vector<double> errors(cfg.trials, 0.0);
        auto worker = [&](int begin, int end) {
            for (int t = begin; t < end; ++t) {
                EchoSim sim = simulate_echo(sn, design.beamformers, m, mode,
                                            Rng::mix(cfg.seed, t));
                double est = ml_estimate_angle(sn, sim, m, mode, cfg.grid_res_deg, &sent);
                errors[t] = est - truth;
            }
        };
        int nthreads = std::max(1, cfg.parallelism);
        std::vector<std::future<void>> futs;
        int chunk = (cfg.trials + nthreads - 1) / nthreads;
        for (int c = 0; c < nthreads; ++c) {
            int b = c * chunk, e = std::min(cfg.trials, (c + 1) * chunk);
            if (b < e) futs.push_back(std::async(std::launch::async, worker, b, e));
        }
        for (auto& f : futs) f.get();

        double acc = 0.0;
        int outliers = 0;
        for (double e : errors) {
            acc += e * e;
            if (std::abs(e) > deg2rad(2.0)) ++outliers;
        }
        pt.rmse_rad = std::sqrt(acc / cfg.trials);
        pt.outlier_rate = static_cast<double>(outliers) / cfg.trials;
        out.push_back(pt);
    }
    return out;
}

struct UserSinr {
    int cell = 0;
    int user = 0;
    double linear = 0.0;
    double db = 0.0;
};

struct EvalReport {
    std::vector<UserSinr> sinrs;
    VecR min_sinr_per_cell;
    std::vector<RcrbPair> rcrb;                           // per BS, radians
    std::vector<std::vector<BeampatternSample>> patterns; // per BS
    std::optional<std::vector<McPoint>> mc;
};

/// Full evaluation of a finished design under the true multi-cell model.
inline EvalReport evaluate(const Scenario& s, const DesignResult& design,
                           double beampattern_step_deg = 0.25) {
    EvalReport rep;
    rep.min_sinr_per_cell = VecR::Constant(s.j_cells, std::numeric_limits<double>::infinity());
    for (int m = 0; m < s.j_cells; ++m)
        for (int k = 0; k < s.k_users; ++k) {
            double v = sinr(s, design.precoder_covariances, m, k);
            rep.sinrs.push_back({m, k, v, linear_to_db(v)});
            rep.min_sinr_per_cell(m) = std::min(rep.min_sinr_per_cell(m), v);
        }
    rep.rcrb = rcrb_pair(s, design);
    auto grid = default_beampattern_grid(beampattern_step_deg);
    for (int m = 0; m < s.j_cells; ++m)
        rep.patterns.push_back(beampattern(design.precoder_covariances.cell_covariance(m), grid));
    return rep;
}

} // namespace mcisac
