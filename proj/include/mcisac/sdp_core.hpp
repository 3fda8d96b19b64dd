#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mcisac/linalg.hpp"

namespace mcisac::sdp {

enum class Rel { Le, Eq, Ge };
enum class Sign { Free, NonNeg };
enum class Status { Optimal, PrimalInfeasible, DualInfeasible, MaxIterations };

inline std::string to_string(Status s) {
    switch (s) {
        case Status::Optimal: return "optimal";
        case Status::PrimalInfeasible: return "primal_infeasible";
        case Status::DualInfeasible: return "dual_infeasible";
        default: return "max_iterations";
    }
}

/// Real symmetric embedding of a Hermitian matrix:
/// [[Re H, -Im H], [Im H, Re H]]. H >= 0 iff the embedding is >= 0, each
/// eigenvalue of H appearing twice, and tr(A H) = (1/2) tr(emb(A) emb(H))
/// for Hermitian A.
inline MatR embed_real(const MatC& h) {
    if (!is_hermitian(h, 1e-10))
        throw InvariantError("embed_real requires a Hermitian matrix");
    const Eigen::Index n = h.rows();
    MatR e(2 * n, 2 * n);
    e.topLeftCorner(n, n) = h.real();
    e.topRightCorner(n, n) = -h.imag();
    e.bottomLeftCorner(n, n) = h.imag();
    e.bottomRightCorner(n, n) = h.real();
    return e;
}

/// Inverse of embed_real up to the structured projection: maps a real
/// symmetric 2n x 2n matrix back to the Hermitian matrix whose embedding
/// is the nearest structured matrix. PSD inputs map to PSD outputs.
inline MatC recover_hermitian(const MatR& e) {
    const Eigen::Index n = e.rows() / 2;
    MatR p = 0.5 * (e.topLeftCorner(n, n) + e.bottomRightCorner(n, n));
    MatR q = 0.5 * (e.bottomLeftCorner(n, n) - e.topRightCorner(n, n));
    MatC h = p.cast<cxd>() + cxd(0, 1) * q.cast<cxd>();
    return hermitize(h);
}

struct Options {
    double eps_primal = 1e-8;   // relative primal feasibility at Optimal
    double eps_dual = 1e-8;     // relative dual feasibility at Optimal
    double eps_gap = 1e-8;      // relative duality gap at Optimal
    double eps_infeasible = 1e-10;  // certificate tolerance
    int max_iterations = 500;
    double step_fraction = 0.98;
    bool verbose = false;
};

/// Conic program over complex Hermitian PSD blocks and signed scalars:
///   maximize    sum_b Re tr(F_b X_b) + sum_j g_j s_j
///   subject to  sum_b Re tr(A_ib X_b) + sum_j c_ij s_j (<=|=|>=) d_i
///               X_b >= 0, s_j >= 0 (NonNeg) or free.
/// Coefficient matrices are Hermitized on assembly; asymmetry beyond
/// 1e-12 is recorded as a warning per the presolve contract.
class Problem {
public:
    struct Block {
        std::string name;
        int size = 0;
    };
    struct ScalarVar {
        std::string name;
        Sign sign = Sign::NonNeg;
    };
    struct LinExpr {
        std::vector<std::pair<int, MatC>> blocks;     // (block index, Hermitian coeff)
        std::vector<std::pair<int, double>> scalars;  // (scalar index, coeff)
    };
    struct Constraint {
        LinExpr lhs;
        Rel rel = Rel::Le;
        double rhs = 0.0;
        std::string name;
    };

    int add_block(const std::string& name, int size) {
        if (size < 1) throw InvariantError("block size must be positive");
        blocks_.push_back({name, size});
        return static_cast<int>(blocks_.size()) - 1;
    }

    int add_scalar(const std::string& name, Sign sign) {
        scalars_.push_back({name, sign});
        return static_cast<int>(scalars_.size()) - 1;
    }

    void objective_block(int b, const MatC& f) { add_term(objective_, b, f); }
    void objective_scalar(int j, double g) { objective_.scalars.emplace_back(j, g); }

    int add_constraint(Rel rel, double rhs, const std::string& name = "") {
        constraints_.push_back(Constraint{{}, rel, rhs, name});
        return static_cast<int>(constraints_.size()) - 1;
    }

    void constraint_block(int i, int b, const MatC& a) { add_term(constraints_[i].lhs, b, a); }
    void constraint_scalar(int i, int j, double c) {
        constraints_[i].lhs.scalars.emplace_back(j, c);
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    const std::vector<ScalarVar>& scalars() const { return scalars_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }
    const LinExpr& objective() const { return objective_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Value of a linear expression at a candidate point.
    double evaluate(const LinExpr& e, const std::vector<MatC>& xs,
                    const std::vector<double>& ss) const {
        double v = 0.0;
        for (const auto& [b, a] : e.blocks) v += (a * xs[b]).trace().real();
        for (const auto& [j, c] : e.scalars) v += c * ss[j];
        return v;
    }

private:
    void add_term(LinExpr& e, int b, const MatC& a) {
        if (b < 0 || b >= static_cast<int>(blocks_.size()))
            throw InvariantError("unknown block index");
        if (a.rows() != blocks_[b].size || a.cols() != blocks_[b].size)
            throw InvariantError("coefficient dimension mismatch for block " + blocks_[b].name);
        double asym = hermitian_asymmetry(a);
        if (asym > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
            warnings_.push_back("coefficient for block " + blocks_[b].name +
                                " symmetrized (asymmetry " + std::to_string(asym) + ")");
        for (auto& [bi, ai] : e.blocks)
            if (bi == b) {
                ai = hermitize(MatC(ai + a));
                return;
            }
        e.blocks.emplace_back(b, hermitize(a));
    }

    std::vector<Block> blocks_;
    std::vector<ScalarVar> scalars_;
    std::vector<Constraint> constraints_;
    LinExpr objective_;
    mutable std::vector<std::string> warnings_;
};

struct Solution {
    Status status = Status::MaxIterations;
    std::vector<MatC> block_values;
    std::vector<double> scalar_values;
    double objective_value = 0.0;
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double relative_gap = std::numeric_limits<double>::infinity();
    int iterations = 0;
    // Duals in the convention F_b = sum_i y_i A_ib - Z_b with Z_b >= 0,
    // y_i >= 0 for <=, y_i <= 0 for >=. Dual objective is sum_i y_i d_i.
    std::vector<double> constraint_duals;
    std::vector<MatC> dual_blocks;
    std::vector<double> scalar_reduced_costs;
    std::vector<std::string> warnings;
};

namespace detail {

/// Internal real standard form: min <C,X> s.t. A(X) = b over a cone of
/// real symmetric PSD blocks plus a nonnegative vector. Complex blocks
/// arrive via embed_real with coefficients halved, inequalities via
/// slacks, free scalars via splitting.
struct StdForm {
    std::vector<int> dims;                                   // PSD block dims
    int lp_dim = 0;
    std::vector<std::vector<std::pair<int, MatR>>> a_blocks; // i -> [(b, A_ib)]
    std::vector<std::vector<std::pair<int, double>>> a_lp;   // i -> [(p, coef)]
    VecR b;
    std::vector<MatR> c_blocks;
    VecR c_lp;

    // bookkeeping for mapping back
    std::vector<int> scalar_lp_index;   // scalar j -> lp index of s_j (or s_j+)
    std::vector<int> scalar_neg_index;  // -1 unless free (index of s_j-)
    std::vector<int> slack_lp_index;    // constraint i -> lp slack index or -1
    std::vector<double> slack_sign;     // +1 for <=, -1 for >=
    std::vector<int> row_of_constraint; // original constraint -> row (or -1 if dropped)
    double obj_scale = 1.0;             // scaled C = C_orig * obj_sign / obj_scale
    std::vector<double> row_scale;      // scaled A_i = A_orig_i / row_scale_i
};

inline StdForm build_std_form(const Problem& p) {
    StdForm f;
    const auto& blocks = p.blocks();
    f.dims.reserve(blocks.size());
    for (const auto& blk : blocks) f.dims.push_back(2 * blk.size);

    // lp layout: scalars (split if free), then one slack per inequality
    f.scalar_lp_index.assign(p.scalars().size(), -1);
    f.scalar_neg_index.assign(p.scalars().size(), -1);
    int lp = 0;
    for (size_t j = 0; j < p.scalars().size(); ++j) {
        f.scalar_lp_index[j] = lp++;
        if (p.scalars()[j].sign == Sign::Free) f.scalar_neg_index[j] = lp++;
    }
    const auto& cons = p.constraints();
    f.slack_lp_index.assign(cons.size(), -1);
    f.slack_sign.assign(cons.size(), 0.0);
    f.row_of_constraint.assign(cons.size(), -1);
    for (size_t i = 0; i < cons.size(); ++i) {
        bool empty = cons[i].lhs.blocks.empty() && cons[i].lhs.scalars.empty();
        if (empty) continue; // presolve: dropped (feasibility checked by caller)
        if (cons[i].rel != Rel::Eq) {
            f.slack_lp_index[i] = lp;
            f.slack_sign[i] = cons[i].rel == Rel::Le ? 1.0 : -1.0;
            ++lp;
        }
    }
    f.lp_dim = lp;

    // objective: min form with halved embeddings
    f.c_blocks.assign(blocks.size(), MatR());
    for (size_t b = 0; b < blocks.size(); ++b)
        f.c_blocks[b] = MatR::Zero(f.dims[b], f.dims[b]);
    f.c_lp = VecR::Zero(f.lp_dim);
    for (const auto& [b, mat] : p.objective().blocks)
        f.c_blocks[b] -= 0.5 * embed_real(mat);
    for (const auto& [j, g] : p.objective().scalars) {
        f.c_lp(f.scalar_lp_index[j]) -= g;
        if (f.scalar_neg_index[j] >= 0) f.c_lp(f.scalar_neg_index[j]) += g;
    }
    double cnorm = 0.0;
    for (const auto& cb : f.c_blocks) cnorm = std::max(cnorm, cb.cwiseAbs().maxCoeff());
    if (f.lp_dim > 0) cnorm = std::max(cnorm, f.c_lp.cwiseAbs().maxCoeff());
    f.obj_scale = std::max(1.0, cnorm);
    for (auto& cb : f.c_blocks) cb /= f.obj_scale;
    f.c_lp /= f.obj_scale;

    // constraint rows with row scaling
    int rows = 0;
    for (size_t i = 0; i < cons.size(); ++i)
        if (!(cons[i].lhs.blocks.empty() && cons[i].lhs.scalars.empty())) ++rows;
    f.b.resize(rows);
    f.a_blocks.resize(rows);
    f.a_lp.resize(rows);
    f.row_scale.assign(rows, 1.0);
    int r = 0;
    for (size_t i = 0; i < cons.size(); ++i) {
        const auto& con = cons[i];
        if (con.lhs.blocks.empty() && con.lhs.scalars.empty()) continue;
        f.row_of_constraint[i] = r;
        double scale = 0.0;
        for (const auto& [b, mat] : con.lhs.blocks) {
            MatR e = 0.5 * embed_real(mat);
            scale = std::max(scale, e.cwiseAbs().maxCoeff());
            f.a_blocks[r].emplace_back(b, std::move(e));
        }
        for (const auto& [j, c] : con.lhs.scalars) {
            f.a_lp[r].emplace_back(f.scalar_lp_index[j], c);
            if (f.scalar_neg_index[j] >= 0) f.a_lp[r].emplace_back(f.scalar_neg_index[j], -c);
            scale = std::max(scale, std::abs(c));
        }
        if (f.slack_lp_index[i] >= 0) {
            f.a_lp[r].emplace_back(f.slack_lp_index[i], f.slack_sign[i]);
            scale = std::max(scale, 1.0);
        }
        scale = std::max(scale, 1e-12);
        f.row_scale[r] = scale;
        for (auto& [b, mat] : f.a_blocks[r]) mat /= scale;
        for (auto& [pi, c] : f.a_lp[r]) c /= scale;
        f.b(r) = con.rhs / scale;
        ++r;
    }
    return f;
}

struct ConeVec {
    std::vector<MatR> blocks;
    VecR lp;

    static ConeVec zeros(const StdForm& f) {
        ConeVec v;
        v.blocks.reserve(f.dims.size());
        for (int d : f.dims) v.blocks.push_back(MatR::Zero(d, d));
        v.lp = VecR::Zero(f.lp_dim);
        return v;
    }
    static ConeVec identity(const StdForm& f, double t) {
        ConeVec v = zeros(f);
        for (auto& bm : v.blocks) bm.diagonal().setConstant(t);
        v.lp.setConstant(t);
        return v;
    }
    double dot(const ConeVec& o) const {
        double s = lp.size() ? lp.dot(o.lp) : 0.0;
        for (size_t b = 0; b < blocks.size(); ++b)
            s += blocks[b].cwiseProduct(o.blocks[b]).sum();
        return s;
    }
    double frob() const { return std::sqrt(std::max(0.0, dot(*this))); }
};

inline double apply_row(const StdForm& f, int i, const ConeVec& x) {
    double v = 0.0;
    for (const auto& [b, a] : f.a_blocks[i]) v += a.cwiseProduct(x.blocks[b]).sum();
    for (const auto& [p, c] : f.a_lp[i]) v += c * x.lp(p);
    return v;
}

inline VecR apply_all(const StdForm& f, const ConeVec& x) {
    VecR v(f.b.size());
    for (int i = 0; i < f.b.size(); ++i) v(i) = apply_row(f, i, x);
    return v;
}

/// adjoint: sum_i y_i A_i added into out
inline void add_adjoint(const StdForm& f, const VecR& y, ConeVec& out, double sign = 1.0) {
    for (int i = 0; i < y.size(); ++i) {
        if (y(i) == 0.0) continue;
        for (const auto& [b, a] : f.a_blocks[i]) out.blocks[b] += sign * y(i) * a;
        for (const auto& [p, c] : f.a_lp[i]) out.lp(p) += sign * y(i) * c;
    }
}

/// Largest t with X + t*D staying PSD, via lambda_min of L^-1 D L^-T.
inline double max_step(const MatR& x_chol_l, const MatR& d) {
    MatR w = x_chol_l.triangularView<Eigen::Lower>().solve(d);
    MatR m = x_chol_l.triangularView<Eigen::Lower>().solve(w.transpose());
    Eigen::SelfAdjointEigenSolver<MatR> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues().minCoeff();
    if (lmin >= -1e-14) return std::numeric_limits<double>::infinity();
    return -1.0 / lmin;
}

inline double max_step_lp(const VecR& x, const VecR& d) {
    double t = std::numeric_limits<double>::infinity();
    for (int i = 0; i < x.size(); ++i)
        if (d(i) < 0.0) t = std::min(t, -x(i) / d(i));
    return t;
}

} // namespace detail

/// Primal-dual predictor-corrector interior-point solve (HKM direction)
/// on the real embedding of the problem. Deterministic: identical inputs
/// give identical iterates.
inline Solution solve(const Problem& prob, const Options& opt = {}) {
    using detail::ConeVec;
    Solution sol;
    sol.warnings = prob.warnings();

    // presolve feasibility of empty constraints
    for (const auto& con : prob.constraints()) {
        if (!(con.lhs.blocks.empty() && con.lhs.scalars.empty())) continue;
        bool ok = (con.rel == Rel::Le && 0.0 <= con.rhs + 1e-15) ||
                  (con.rel == Rel::Ge && 0.0 >= con.rhs - 1e-15) ||
                  (con.rel == Rel::Eq && con.rhs == 0.0);
        if (!ok) {
            sol.status = Status::PrimalInfeasible;
            return sol;
        }
        sol.warnings.push_back("dropped empty constraint" +
                               (con.name.empty() ? std::string() : " '" + con.name + "'"));
    }

    const detail::StdForm f = detail::build_std_form(prob);
    const int m = static_cast<int>(f.b.size());
    const size_t nb = f.dims.size();
    double nu = f.lp_dim;
    for (int d : f.dims) nu += d;

    auto extract = [&](const ConeVec& x, const ConeVec& s, const VecR& y, Status st,
                       int iters, double rp, double rd, double gap) {
        sol.status = st;
        sol.iterations = iters;
        sol.primal_residual = rp;
        sol.dual_residual = rd;
        sol.relative_gap = gap;
        sol.block_values.clear();
        for (size_t b = 0; b < nb; ++b) sol.block_values.push_back(recover_hermitian(x.blocks[b]));
        sol.scalar_values.assign(prob.scalars().size(), 0.0);
        for (size_t j = 0; j < prob.scalars().size(); ++j) {
            double v = x.lp(f.scalar_lp_index[j]);
            if (f.scalar_neg_index[j] >= 0) v -= x.lp(f.scalar_neg_index[j]);
            sol.scalar_values[j] = v;
        }
        sol.objective_value = 0.0;
        for (const auto& [b, mat] : prob.objective().blocks)
            sol.objective_value += (mat * sol.block_values[b]).trace().real();
        for (const auto& [j, g] : prob.objective().scalars)
            sol.objective_value += g * sol.scalar_values[j];
        // duals: internal y' -> reported y_i = -y'_i * obj_scale / row_scale_i
        sol.constraint_duals.assign(prob.constraints().size(), 0.0);
        for (size_t i = 0; i < prob.constraints().size(); ++i) {
            int r = f.row_of_constraint[i];
            if (r >= 0) sol.constraint_duals[i] = -y(r) * f.obj_scale / f.row_scale[r];
        }
        sol.dual_blocks.clear();
        for (size_t b = 0; b < nb; ++b)
            sol.dual_blocks.push_back(recover_hermitian(MatR(2.0 * f.obj_scale * s.blocks[b])));
        sol.scalar_reduced_costs.assign(prob.scalars().size(), 0.0);
        for (size_t j = 0; j < prob.scalars().size(); ++j)
            if (f.scalar_neg_index[j] < 0)
                sol.scalar_reduced_costs[j] = f.obj_scale * s.lp(f.scalar_lp_index[j]);
    };

    if (m == 0) {
        // No coupling: optimum is 0 unless the objective improves along a ray.
        ConeVec x = ConeVec::zeros(f), s = ConeVec::zeros(f);
        bool unbounded = false;
        for (size_t b = 0; b < nb; ++b) {
            s.blocks[b] = f.c_blocks[b];
            if (min_eigenvalue(recover_hermitian(f.c_blocks[b])) < -1e-12) unbounded = true;
        }
        s.lp = f.c_lp;
        if (f.lp_dim > 0 && f.c_lp.minCoeff() < -1e-12) unbounded = true;
        extract(x, s, VecR::Zero(0), unbounded ? Status::DualInfeasible : Status::Optimal, 0,
                0.0, 0.0, 0.0);
        return sol;
    }

    // initial point scaling (CSDP-flavoured heuristics)
    double amax = 1.0;
    for (int i = 0; i < m; ++i) {
        double rownorm = 0.0;
        for (const auto& [b, a] : f.a_blocks[i]) rownorm += a.squaredNorm();
        for (const auto& [p, c] : f.a_lp[i]) rownorm += c * c;
        amax = std::max(amax, std::abs(f.b(i)) / std::max(1.0, std::sqrt(rownorm)));
    }
    double dmax = 1.0;
    for (int d : f.dims) dmax = std::max(dmax, static_cast<double>(d));
    double cnorm = 0.0;
    for (const auto& cb : f.c_blocks) cnorm += cb.squaredNorm();
    cnorm += f.c_lp.squaredNorm();
    const double xi_p = std::max({10.0, std::sqrt(dmax), 10.0 * amax});
    const double xi_d = std::max({10.0, std::sqrt(dmax), std::sqrt(cnorm)});

    ConeVec x = ConeVec::identity(f, xi_p);
    ConeVec s = ConeVec::identity(f, xi_d);
    VecR y = VecR::Zero(m);

    const double bnorm = 1.0 + f.b.norm();
    const double cnorm_ref = 1.0 + std::sqrt(cnorm);

    ConeVec best_x = x, best_s = s;
    VecR best_y = y;
    double best_merit = std::numeric_limits<double>::infinity();
    double best_rp = 0, best_rd = 0, best_gap = 0;
    int best_iter = 0;

    std::vector<MatR> s_chol(nb), x_chol(nb);
    MatR big_m(m, m);
    std::vector<std::vector<MatR>> t_mats(m); // per constraint, per block sym(X A S^-1)
    // lp column structure: p -> [(row, coef)], fixed across iterations
    std::vector<std::vector<std::pair<int, double>>> lp_cols(f.lp_dim);
    for (int i = 0; i < m; ++i)
        for (const auto& [p, c] : f.a_lp[i]) lp_cols[p].emplace_back(i, c);

    int iter = 0;
    int stall = 0;
    for (; iter < opt.max_iterations; ++iter) {
        // residuals
        VecR rp = f.b - detail::apply_all(f, x);
        ConeVec rd = ConeVec::zeros(f);
        for (size_t b = 0; b < nb; ++b) rd.blocks[b] = f.c_blocks[b] - s.blocks[b];
        rd.lp = f.c_lp - s.lp;
        detail::add_adjoint(f, y, rd, -1.0);

        double pobj = 0.0;
        for (size_t b = 0; b < nb; ++b) pobj += f.c_blocks[b].cwiseProduct(x.blocks[b]).sum();
        pobj += f.c_lp.dot(x.lp);
        double dobj = f.b.dot(y);
        double mu = x.dot(s) / nu;

        double rel_p = rp.norm() / bnorm;
        double rel_d = rd.frob() / cnorm_ref;
        double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

        double merit = std::max({rel_p, rel_d, gap});
        if (merit < best_merit) {
            best_merit = merit;
            best_x = x;
            best_s = s;
            best_y = y;
            best_rp = rel_p;
            best_rd = rel_d;
            best_gap = gap;
            best_iter = iter;
        }

        if (opt.verbose)
            std::fprintf(stderr, "iter %3d  mu %.3e  rp %.3e  rd %.3e  gap %.3e\n", iter, mu,
                         rel_p, rel_d, gap);

        if (rel_p <= opt.eps_primal && rel_d <= opt.eps_dual && gap <= opt.eps_gap) {
            extract(x, s, y, Status::Optimal, iter, rel_p, rel_d, gap);
            return sol;
        }

        // infeasibility certificates
        double by = f.b.dot(y);
        if (by > 0.0 && iter > 5) {
            ConeVec aty = ConeVec::zeros(f);
            detail::add_adjoint(f, y, aty);
            double viol = 0.0, norm = 0.0;
            for (size_t b = 0; b < nb; ++b) {
                Eigen::SelfAdjointEigenSolver<MatR> es(aty.blocks[b] / by,
                                                       Eigen::EigenvaluesOnly);
                viol = std::max(viol, es.eigenvalues().maxCoeff());
                norm = std::max(norm, es.eigenvalues().cwiseAbs().maxCoeff());
            }
            if (f.lp_dim > 0) {
                viol = std::max(viol, aty.lp.maxCoeff() / by);
                norm = std::max(norm, aty.lp.cwiseAbs().maxCoeff() / by);
            }
            // -A^T(y)/b.y in the dual cone certifies primal infeasibility
            if (viol <= opt.eps_infeasible * (1.0 + norm)) {
                extract(x, s, y, Status::PrimalInfeasible, iter, rel_p, rel_d, gap);
                return sol;
            }
        }
        double cx = pobj;
        if (cx < 0.0 && iter > 5) {
            double anorm = detail::apply_all(f, x).norm() / (-cx);
            if (anorm <= opt.eps_infeasible * (1.0 + x.frob() / (-cx))) {
                extract(x, s, y, Status::DualInfeasible, iter, rel_p, rel_d, gap);
                return sol;
            }
        }

        // factorizations
        bool fact_ok = true;
        for (size_t b = 0; b < nb; ++b) {
            Eigen::LLT<MatR> llt_s(s.blocks[b]);
            Eigen::LLT<MatR> llt_x(x.blocks[b]);
            if (llt_s.info() != Eigen::Success || llt_x.info() != Eigen::Success) {
                fact_ok = false;
                break;
            }
            s_chol[b] = llt_s.matrixL();
            x_chol[b] = llt_x.matrixL();
        }
        if (!fact_ok) break; // iterate left the cone numerically: return best

        auto s_solve = [&](size_t b, const MatR& rhs) {
            MatR w = s_chol[b].triangularView<Eigen::Lower>().solve(rhs);
            return MatR(s_chol[b].transpose().triangularView<Eigen::Upper>().solve(w));
        };

        // Schur complement M_ij = sum_b <A_ib, sym(X A_jb S^-1)> + lp part;
        // A S^-1 = (S^-1 A)^T since both factors are symmetric
        for (int j = 0; j < m; ++j) {
            t_mats[j].assign(nb, MatR());
            for (const auto& [b, a] : f.a_blocks[j]) {
                MatR u = x.blocks[b] * s_solve(b, a).transpose();
                t_mats[j][b] = 0.5 * (u + u.transpose());
            }
        }
        VecR xz = f.lp_dim > 0 ? VecR(x.lp.cwiseQuotient(s.lp)) : VecR();
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                double v = 0.0;
                for (const auto& [b, a] : f.a_blocks[i])
                    if (t_mats[j][b].size() > 0) v += a.cwiseProduct(t_mats[j][b]).sum();
                big_m(i, j) = v;
                big_m(j, i) = v;
            }
        if (f.lp_dim > 0)
            for (int p = 0; p < f.lp_dim; ++p) {
                const auto& col = lp_cols[p];
                for (size_t ii = 0; ii < col.size(); ++ii)
                    for (size_t jj = ii; jj < col.size(); ++jj) {
                        double v = col[ii].second * col[jj].second * xz(p);
                        big_m(col[ii].first, col[jj].first) += v;
                        if (ii != jj) big_m(col[jj].first, col[ii].first) += v;
                    }
            }

        Eigen::LDLT<MatR> mfac;
        double jitter = 0.0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            MatR mreg = big_m;
            if (jitter > 0.0) mreg.diagonal().array() += jitter;
            mfac.compute(mreg);
            if (mfac.info() == Eigen::Success && mfac.isPositive()) break;
            jitter = jitter == 0.0 ? 1e-13 * big_m.diagonal().maxCoeff() : jitter * 100.0;
        }

        // common pieces of the Newton rhs
        ConeVec xrd = ConeVec::zeros(f); // sym(X R_d S^-1) per block; lp (x/z)*rd
        for (size_t b = 0; b < nb; ++b) {
            MatR u = x.blocks[b] * s_solve(b, rd.blocks[b]).transpose();
            xrd.blocks[b] = 0.5 * (u + u.transpose());
        }
        if (f.lp_dim > 0) xrd.lp = xz.cwiseProduct(rd.lp);

        ConeVec sinv = ConeVec::zeros(f);
        for (size_t b = 0; b < nb; ++b)
            sinv.blocks[b] = s_solve(b, MatR::Identity(f.dims[b], f.dims[b]));
        if (f.lp_dim > 0) sinv.lp = s.lp.cwiseInverse();

        auto newton = [&](double sigma_mu, const ConeVec* corr) {
            VecR rhs = rp;
            for (int i = 0; i < m; ++i) {
                rhs(i) += detail::apply_row(f, i, x) - sigma_mu * detail::apply_row(f, i, sinv) +
                          detail::apply_row(f, i, xrd);
                if (corr) rhs(i) += detail::apply_row(f, i, *corr);
            }
            VecR dy = mfac.solve(rhs);
            ConeVec ds = rd;
            detail::add_adjoint(f, dy, ds, -1.0);
            ConeVec dx = ConeVec::zeros(f);
            for (size_t b = 0; b < nb; ++b) {
                MatR u = x.blocks[b] * s_solve(b, ds.blocks[b]).transpose();
                dx.blocks[b] = sigma_mu * sinv.blocks[b] - x.blocks[b] - 0.5 * (u + u.transpose());
                if (corr) dx.blocks[b] -= corr->blocks[b];
            }
            if (f.lp_dim > 0) {
                dx.lp = sigma_mu * sinv.lp - x.lp - xz.cwiseProduct(ds.lp);
                if (corr) dx.lp -= corr->lp;
            }
            return std::make_pair(std::move(dx), std::make_pair(std::move(ds), std::move(dy)));
        };

        auto step_lengths = [&](const ConeVec& dx, const ConeVec& ds) {
            double ap = std::numeric_limits<double>::infinity();
            double ad = std::numeric_limits<double>::infinity();
            for (size_t b = 0; b < nb; ++b) {
                ap = std::min(ap, detail::max_step(x_chol[b], dx.blocks[b]));
                ad = std::min(ad, detail::max_step(s_chol[b], ds.blocks[b]));
            }
            if (f.lp_dim > 0) {
                ap = std::min(ap, detail::max_step_lp(x.lp, dx.lp));
                ad = std::min(ad, detail::max_step_lp(s.lp, ds.lp));
            }
            return std::make_pair(ap, ad);
        };

        // predictor
        auto [dx_aff, rest_aff] = newton(0.0, nullptr);
        auto& [ds_aff, dy_aff] = rest_aff;
        auto [ap_aff, ad_aff] = step_lengths(dx_aff, ds_aff);
        double tp = std::min(1.0, opt.step_fraction * ap_aff);
        double td = std::min(1.0, opt.step_fraction * ad_aff);

        double mu_aff = 0.0;
        {
            ConeVec xa = x, sa = s;
            for (size_t b = 0; b < nb; ++b) {
                xa.blocks[b] += tp * dx_aff.blocks[b];
                sa.blocks[b] += td * ds_aff.blocks[b];
            }
            if (f.lp_dim > 0) {
                xa.lp += tp * dx_aff.lp;
                sa.lp += td * ds_aff.lp;
            }
            mu_aff = xa.dot(sa) / nu;
        }
        double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 1e-8, 1.0);

        // corrector: second-order term sym(dX_aff dS_aff S^-1); note
        // dS_aff S^-1 = (S^-1 dS_aff)^T for symmetric factors
        ConeVec corr = ConeVec::zeros(f);
        for (size_t b = 0; b < nb; ++b) {
            MatR u = dx_aff.blocks[b] * s_solve(b, ds_aff.blocks[b]).transpose();
            corr.blocks[b] = 0.5 * (u + u.transpose());
        }
        if (f.lp_dim > 0)
            corr.lp = dx_aff.lp.cwiseProduct(ds_aff.lp).cwiseQuotient(s.lp);

        auto [dx, rest] = newton(sigma * mu, &corr);
        auto& [ds, dy] = rest;
        auto [ap, ad] = step_lengths(dx, ds);
        double sp = std::min(1.0, opt.step_fraction * ap);
        double sd = std::min(1.0, opt.step_fraction * ad);
        if (opt.verbose)
            std::fprintf(stderr, "         sigma %.3e  ap %.3e  ad %.3e\n", sigma, sp, sd);

        if (sp < 1e-8 && sd < 1e-8) {
            if (++stall >= 3) break;
        } else {
            stall = 0;
        }

        for (size_t b = 0; b < nb; ++b) {
            x.blocks[b] += sp * dx.blocks[b];
            s.blocks[b] += sd * ds.blocks[b];
            x.blocks[b] = 0.5 * (x.blocks[b] + x.blocks[b].transpose()).eval();
            s.blocks[b] = 0.5 * (s.blocks[b] + s.blocks[b].transpose()).eval();
        }
        if (f.lp_dim > 0) {
            x.lp += sp * dx.lp;
            s.lp += sd * ds.lp;
        }
        y += sd * dy;
    }

    extract(best_x, best_s, best_y, Status::MaxIterations, iter, best_rp, best_rd, best_gap);
    (void)best_iter;
    return sol;
}

struct KktReport {
    double primal_residual = 0.0;   // max relative constraint violation
    double dual_residual = 0.0;     // max relative stationarity violation
    double complementarity = 0.0;   // max relative complementary slackness
    double psd_violation = 0.0;     // most negative eigenvalue, normalized
    double duality_gap = 0.0;       // |primal - dual objective|, relative
    std::vector<int> violated_constraints;

    double worst() const {
        return std::max({primal_residual, dual_residual, complementarity, psd_violation,
                         duality_gap});
    }
    bool ok(double tol) const { return worst() <= tol; }
};

/// Recomputes feasibility, stationarity, and complementary slackness of a
/// claimed solution directly from the problem data. Independent of solver
/// state: every quantity is rebuilt from the original coefficients.
inline KktReport kkt_check(const Problem& prob, const Solution& sol, double viol_tol = 1e-6) {
    KktReport rep;
    const auto& xs = sol.block_values;
    const auto& ss = sol.scalar_values;

    double obj = 0.0;
    for (const auto& [b, mat] : prob.objective().blocks) obj += (mat * xs[b]).trace().real();
    for (const auto& [j, g] : prob.objective().scalars) obj += g * ss[j];
    double obj_ref = 1.0 + std::abs(obj);

    for (size_t i = 0; i < prob.constraints().size(); ++i) {
        const auto& con = prob.constraints()[i];
        double g = prob.evaluate(con.lhs, xs, ss);
        double viol = 0.0;
        if (con.rel == Rel::Le) viol = std::max(0.0, g - con.rhs);
        else if (con.rel == Rel::Ge) viol = std::max(0.0, con.rhs - g);
        else viol = std::abs(g - con.rhs);
        double rel = viol / (1.0 + std::abs(con.rhs));
        rep.primal_residual = std::max(rep.primal_residual, rel);
        if (rel > viol_tol) rep.violated_constraints.push_back(static_cast<int>(i));
        // sign and complementary slackness of the multiplier
        double yi = sol.constraint_duals.empty() ? 0.0 : sol.constraint_duals[i];
        if (con.rel == Rel::Le)
            rep.dual_residual = std::max(rep.dual_residual, std::max(0.0, -yi) / obj_ref);
        if (con.rel == Rel::Ge)
            rep.dual_residual = std::max(rep.dual_residual, std::max(0.0, yi) / obj_ref);
        if (con.rel != Rel::Eq)
            rep.complementarity =
                std::max(rep.complementarity, std::abs(yi * (con.rhs - g)) / obj_ref);
    }

    for (size_t b = 0; b < xs.size(); ++b) {
        double tr = std::abs(xs[b].trace().real());
        rep.psd_violation =
            std::max(rep.psd_violation, std::max(0.0, -min_eigenvalue(xs[b])) / (1.0 + tr));
    }

    // stationarity: F_b - sum_i y_i A_ib + Z_b = 0; scalars likewise
    if (!sol.constraint_duals.empty() && !sol.dual_blocks.empty()) {
        std::vector<MatC> r(xs.size());
        for (size_t b = 0; b < xs.size(); ++b)
            r[b] = MatC::Zero(xs[b].rows(), xs[b].cols());
        for (const auto& [b, mat] : prob.objective().blocks) r[b] += mat;
        for (size_t i = 0; i < prob.constraints().size(); ++i)
            for (const auto& [b, mat] : prob.constraints()[i].lhs.blocks)
                r[b] -= sol.constraint_duals[i] * mat;
        double coef_scale = 1.0;
        for (size_t b = 0; b < xs.size(); ++b) {
            r[b] += sol.dual_blocks[b];
            coef_scale = std::max(coef_scale, sol.dual_blocks[b].cwiseAbs().maxCoeff());
            rep.psd_violation = std::max(
                rep.psd_violation, std::max(0.0, -min_eigenvalue(sol.dual_blocks[b])) /
                                       (1.0 + std::abs(sol.dual_blocks[b].trace().real())));
        }
        for (size_t b = 0; b < xs.size(); ++b)
            rep.dual_residual =
                std::max(rep.dual_residual, r[b].cwiseAbs().maxCoeff() / coef_scale);
        for (size_t b = 0; b < xs.size(); ++b)
            rep.complementarity = std::max(
                rep.complementarity,
                std::abs((sol.dual_blocks[b] * xs[b]).trace().real()) /
                    (1.0 + std::abs(obj)));
        std::vector<double> rs(prob.scalars().size(), 0.0);
        for (const auto& [j, g] : prob.objective().scalars) rs[j] += g;
        for (size_t i = 0; i < prob.constraints().size(); ++i)
            for (const auto& [j, c] : prob.constraints()[i].lhs.scalars)
                rs[j] -= sol.constraint_duals[i] * c;
        for (size_t j = 0; j < rs.size(); ++j) {
            double zeta = sol.scalar_reduced_costs.empty() ? 0.0 : sol.scalar_reduced_costs[j];
            if (prob.scalars()[j].sign == Sign::NonNeg) {
                rep.dual_residual =
                    std::max(rep.dual_residual, std::abs(rs[j] + zeta) / coef_scale);
                rep.complementarity =
                    std::max(rep.complementarity, std::abs(zeta * ss[j]) / (1.0 + std::abs(obj)));
            } else {
                rep.dual_residual = std::max(rep.dual_residual, std::abs(rs[j]) / coef_scale);
            }
        }
        double dual_obj = 0.0;
        for (size_t i = 0; i < prob.constraints().size(); ++i)
            dual_obj += sol.constraint_duals[i] * prob.constraints()[i].rhs;
        rep.duality_gap = std::abs(obj - dual_obj) / (1.0 + std::abs(obj) + std::abs(dual_obj));
    }
    return rep;
}

/// Sparse SDPA-style dump of the internal standard form's dual
/// (max b.y s.t. C - sum_i y_i A_i >= 0), for cross-checking against
/// external solvers. The LP part is written as a negative block size.
inline void write_sdpa(const Problem& prob, const std::string& path) {
    const detail::StdForm f = detail::build_std_form(prob);
    std::ofstream out(path);
    if (!out) throw InvariantError("cannot write " + path);
    const int m = static_cast<int>(f.b.size());
    out << "\"mcisac sdp dump: max b'y s.t. C - sum y_i A_i >= 0\"\n";
    out << m << " = mDIM\n";
    int nblocks = static_cast<int>(f.dims.size()) + (f.lp_dim > 0 ? 1 : 0);
    out << nblocks << " = nBLOCK\n";
    for (int d : f.dims) out << d << " ";
    if (f.lp_dim > 0) out << -f.lp_dim;
    out << " = bLOCKsTRUCT\n";
    for (int i = 0; i < m; ++i) out << fmt_double(f.b(i)) << (i + 1 < m ? " " : "");
    out << "\n";
    auto emit = [&](int mat_no, int blk, const MatR& a) {
        for (int r = 0; r < a.rows(); ++r)
            for (int c = r; c < a.cols(); ++c)
                if (a(r, c) != 0.0)
                    out << mat_no << " " << blk + 1 << " " << r + 1 << " " << c + 1 << " "
                        << fmt_double(a(r, c)) << "\n";
    };
    for (size_t b = 0; b < f.dims.size(); ++b) emit(0, static_cast<int>(b), f.c_blocks[b]);
    if (f.lp_dim > 0)
        for (int p = 0; p < f.lp_dim; ++p)
            if (f.c_lp(p) != 0.0)
                out << 0 << " " << nblocks << " " << p + 1 << " " << p + 1 << " "
                    << fmt_double(f.c_lp(p)) << "\n";
    for (int i = 0; i < m; ++i) {
        for (const auto& [b, a] : f.a_blocks[i]) emit(i + 1, b, a);
        for (const auto& [p, c] : f.a_lp[i])
            out << i + 1 << " " << nblocks << " " << p + 1 << " " << p + 1 << " " << fmt_double(c)
                << "\n";
    }
}

} // namespace mcisac::sdp
