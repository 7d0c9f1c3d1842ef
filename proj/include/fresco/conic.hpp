#pragma once

// Standard-form conic program container and a dense primal-dual
// interior-point solver.
//
// Programs are
//
//     min c'x   s.t.  A x = b,   x in K
//
// where K is a product of free, nonnegative, second-order and rotated
// second-order cone slices partitioning the variable vector. Cone
// conventions: SOC blocks (t, xbar) satisfy t >= ||xbar||; rotated blocks
// (u, v, w) satisfy 2 u v >= ||w||^2 with u, v >= 0.
//
// The solver runs a homogeneous path-following method with Nesterov-Todd
// scaling and a Mehrotra predictor-corrector step, starting from the unit
// interior point of each cone. Data is Ruiz-equilibrated up front (cone
// blocks share one column scale so membership is preserved); convergence is
// judged on the unscaled residuals. Rotated cones are scaled natively in
// their own coordinates, so their dual blocks come back untouched. The
// Newton systems are solved by an LDL' factorization of the quasi-definite
// KKT matrix with static regularization, plus iterative refinement.
//
// Reported duals satisfy  c - A'y - z = 0  with z in the dual cone of each
// block (zero on free slices), so b'y equals the primal objective at an
// optimal pair.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fresco/linexpr.hpp"

namespace fresco {

enum class ConeKind { Free, NonNeg, Soc, RotatedSoc };

struct ConeBlock {
    ConeKind kind;
    int start;
    int size;
};

class ConicProgram {
  public:
    int add_var(ConeKind kind, std::string name) {
        assert(kind == ConeKind::Free || kind == ConeKind::NonNeg);
        int id = num_vars();
        blocks_.push_back({kind, id, 1});
        names_.push_back(std::move(name));
        obj_.push_back(0.0);
        return id;
    }

    /// Adds one cone block of `dim` consecutive variables; returns the index
    /// of its first variable. Soc needs dim >= 2, RotatedSoc dim >= 3.
    int add_cone_block(ConeKind kind, int dim, const std::string& prefix) {
        assert((kind == ConeKind::Soc && dim >= 2) || (kind == ConeKind::RotatedSoc && dim >= 3));
        int start = num_vars();
        blocks_.push_back({kind, start, dim});
        for (int i = 0; i < dim; ++i) {
            names_.push_back(prefix + "[" + std::to_string(i) + "]");
            obj_.push_back(0.0);
        }
        return start;
    }

    /// lhs == rhs; any constant inside lhs moves to the right-hand side.
    int add_eq(const LinExpr& lhs, double rhs) {
        int row = static_cast<int>(eq_lhs_.size());
        LinExpr e = lhs;
        double c = e.constant();
        e -= c;
        eq_lhs_.push_back(std::move(e));
        eq_rhs_.push_back(rhs - c);
        return row;
    }

    /// expr >= rhs via a fresh nonnegative slack; returns the slack column
    /// (whose cone dual is the constraint's multiplier).
    int add_ineq_ge(const LinExpr& expr, double rhs, const std::string& slack_name) {
        int s = add_var(ConeKind::NonNeg, slack_name);
        add_eq(expr - LinExpr::term(s, 1.0), rhs);
        return s;
    }
    int add_ineq_le(const LinExpr& expr, double rhs, const std::string& slack_name) {
        int s = add_var(ConeKind::NonNeg, slack_name);
        add_eq(expr + LinExpr::term(s, 1.0), rhs);
        return s;
    }

    void set_objective(const LinExpr& e) {
        std::fill(obj_.begin(), obj_.end(), 0.0);
        obj_offset_ = e.constant();
        for (const auto& [v, c] : e.coefs()) obj_[v] = c;
    }
    void add_objective_term(int var, double c) { obj_[var] += c; }

    void mark_integer(int var) { integer_marks_.push_back(var); }

    int num_vars() const { return static_cast<int>(obj_.size()); }
    int num_eqs() const { return static_cast<int>(eq_lhs_.size()); }
    const std::vector<ConeBlock>& blocks() const { return blocks_; }
    const std::vector<LinExpr>& eq_lhs() const { return eq_lhs_; }
    const std::vector<double>& eq_rhs() const { return eq_rhs_; }
    void set_eq_rhs(int row, double rhs) { eq_rhs_[row] = rhs; }
    const std::vector<double>& objective() const { return obj_; }
    double objective_offset() const { return obj_offset_; }
    const std::vector<int>& integer_marks() const { return integer_marks_; }
    void clear_integer_marks() { integer_marks_.clear(); }
    const std::string& name(int var) const { return names_[var]; }

  private:
    std::vector<double> obj_;
    double obj_offset_ = 0.0;
    std::vector<ConeBlock> blocks_;
    std::vector<LinExpr> eq_lhs_;
    std::vector<double> eq_rhs_;
    std::vector<int> integer_marks_;
    std::vector<std::string> names_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::NumericalFailure: return "numerical-failure";
    }
    return "?";
}

struct SolveSettings {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iter = 200;
    double static_reg = 1e-10;
    bool verbose = false;
    std::ostream* log = nullptr;
};

struct ConicSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    Eigen::VectorXd x;  // primal values (per program variable)
    Eigen::VectorXd y;  // equality duals
    Eigen::VectorXd z;  // cone duals scattered over the variables (0 on free)
    double objective_value = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();  // relative duality gap
    double primal_residual = std::numeric_limits<double>::quiet_NaN();
    double dual_residual = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
};

namespace ipm_detail {

// Everything below works on the stacked cone coordinate space (dimension m):
// first all nonnegative coordinates, then each spin (SOC or rotated) block.

struct SpinBlock {
    ConeKind kind;
    int offset;  // into the m-space
    int dim;
    int col0;    // first program column of the block
    // NT scaling data (in standard SOC coordinates)
    Eigen::VectorXd wbar;
    double eta = 1.0;
};

// Rotation between rotated and standard SOC coordinates; orthogonal and
// self-inverse, acting on the first two components only.
inline void rot2(Eigen::Ref<Eigen::VectorXd> v) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    double a = v[0], b = v[1];
    v[0] = (a + b) * inv_sqrt2;
    v[1] = (a - b) * inv_sqrt2;
}

inline void to_std(const SpinBlock& blk, Eigen::Ref<Eigen::VectorXd> v) {
    if (blk.kind == ConeKind::RotatedSoc) rot2(v);
}
inline void from_std(const SpinBlock& blk, Eigen::Ref<Eigen::VectorXd> v) {
    if (blk.kind == ConeKind::RotatedSoc) rot2(v);
}

struct Cones {
    int n_lp = 0;
    std::vector<SpinBlock> spins;
    int m = 0;

    int degree() const { return n_lp + static_cast<int>(spins.size()); }

    void set_identity(Eigen::VectorXd& v) const {
        v.setZero(m);
        v.head(n_lp).setOnes();
        for (const auto& blk : spins) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(blk.dim);
            e[0] = 1.0;
            from_std(blk, e);
            v.segment(blk.offset, blk.dim) = e;
        }
    }

    // Largest step alpha >= 0 keeping v + alpha*dv in the cone; capped.
    double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double cap) const {
        double alpha = cap;
        for (int i = 0; i < n_lp; ++i)
            if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
        for (const auto& blk : spins) {
            Eigen::VectorXd s = v.segment(blk.offset, blk.dim);
            Eigen::VectorXd d = dv.segment(blk.offset, blk.dim);
            to_std(blk, s);
            to_std(blk, d);
            double c0 = s[0] * s[0] - s.tail(blk.dim - 1).squaredNorm();
            double b0 = 2.0 * (s[0] * d[0] - s.tail(blk.dim - 1).dot(d.tail(blk.dim - 1)));
            double a0 = d[0] * d[0] - d.tail(blk.dim - 1).squaredNorm();
            c0 = std::max(c0, 0.0);
            double root = cap;
            double scale = std::max({std::fabs(a0), std::fabs(b0), std::fabs(c0), 1e-300});
            if (std::fabs(a0) <= 1e-14 * scale) {
                if (b0 < 0.0) root = -c0 / b0;
            } else {
                double disc = b0 * b0 - 4.0 * a0 * c0;
                if (disc >= 0.0) {
                    double sq = std::sqrt(disc);
                    double q = -0.5 * (b0 + (b0 >= 0.0 ? sq : -sq));
                    double r1 = q != 0.0 ? c0 / q : std::numeric_limits<double>::infinity();
                    double r2 = a0 != 0.0 ? q / a0 : std::numeric_limits<double>::infinity();
                    double best = cap;
                    if (r1 > 0.0) best = std::min(best, r1);
                    if (r2 > 0.0) best = std::min(best, r2);
                    root = best;
                } else if (a0 < 0.0) {
                    root = 0.0;  // should not happen: c0 >= 0 forces real roots
                }
            }
            if (d[0] < 0.0) root = std::min(root, -s[0] / d[0]);
            alpha = std::min(alpha, root);
        }
        return std::max(alpha, 0.0);
    }

    bool strictly_inside(const Eigen::VectorXd& v) const {
        for (int i = 0; i < n_lp; ++i)
            if (v[i] <= 0.0) return false;
        for (const auto& blk : spins) {
            Eigen::VectorXd s = v.segment(blk.offset, blk.dim);
            to_std(blk, s);
            if (s[0] <= 0.0) return false;
            if (s[0] * s[0] - s.tail(blk.dim - 1).squaredNorm() <= 0.0) return false;
        }
        return true;
    }
};

// Nesterov-Todd scaling for the product cone. lambda = W z = W^{-1} s.
struct Scaling {
    Eigen::VectorXd w_lp;  // per nonnegative coordinate
    std::vector<SpinBlock>* spins = nullptr;
    const Cones* cones = nullptr;

    bool update(Cones& K, const Eigen::VectorXd& s, const Eigen::VectorXd& z,
                Eigen::VectorXd& lambda) {
        cones = &K;
        spins = &K.spins;
        w_lp.resize(K.n_lp);
        lambda.resize(K.m);
        for (int i = 0; i < K.n_lp; ++i) {
            if (s[i] <= 0.0 || z[i] <= 0.0) return false;
            w_lp[i] = std::sqrt(s[i] / z[i]);
            lambda[i] = std::sqrt(s[i] * z[i]);
        }
        for (auto& blk : K.spins) {
            Eigen::VectorXd sb = s.segment(blk.offset, blk.dim);
            Eigen::VectorXd zb = z.segment(blk.offset, blk.dim);
            to_std(blk, sb);
            to_std(blk, zb);
            int d = blk.dim;
            double sres = sb[0] * sb[0] - sb.tail(d - 1).squaredNorm();
            double zres = zb[0] * zb[0] - zb.tail(d - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0) return false;
            double snorm = std::sqrt(sres), znorm = std::sqrt(zres);
            Eigen::VectorXd sn = sb / snorm, zn = zb / znorm;
            double gamma = std::sqrt(0.5 * (1.0 + sn.dot(zn)));
            Eigen::VectorXd wb(d);
            wb[0] = (sn[0] + zn[0]) / (2.0 * gamma);
            wb.tail(d - 1) = (sn.tail(d - 1) - zn.tail(d - 1)) / (2.0 * gamma);
            blk.wbar = wb;
            blk.eta = std::sqrt(snorm / znorm);
            // lambda = W z in standard coordinates
            Eigen::VectorXd lz = apply_spin(blk, zb, /*inverse=*/false);
            from_std(blk, lz);
            lambda.segment(blk.offset, blk.dim) = lz;
        }
        return true;
    }

    // W v (or W^{-1} v) for one spin block, inputs/outputs in std coords.
    static Eigen::VectorXd apply_spin(const SpinBlock& blk, const Eigen::VectorXd& v,
                                      bool inverse) {
        int d = blk.dim;
        const Eigen::VectorXd& w = blk.wbar;
        double a = w[0];
        Eigen::VectorXd r(d);
        double qv = w.tail(d - 1).dot(v.tail(d - 1));
        if (!inverse) {
            r[0] = a * v[0] + qv;
            r.tail(d - 1) = v.tail(d - 1) + (v[0] + qv / (1.0 + a)) * w.tail(d - 1);
            r *= blk.eta;
        } else {
            r[0] = a * v[0] - qv;
            r.tail(d - 1) = v.tail(d - 1) + (-v[0] + qv / (1.0 + a)) * w.tail(d - 1);
            r /= blk.eta;
        }
        return r;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v, bool inverse) const {
        Eigen::VectorXd r(cones->m);
        for (int i = 0; i < cones->n_lp; ++i) r[i] = inverse ? v[i] / w_lp[i] : v[i] * w_lp[i];
        for (const auto& blk : *spins) {
            Eigen::VectorXd vb = v.segment(blk.offset, blk.dim);
            to_std(blk, vb);
            Eigen::VectorXd rb = apply_spin(blk, vb, inverse);
            from_std(blk, rb);
            r.segment(blk.offset, blk.dim) = rb;
        }
        return r;
    }

    // Dense W^2 block for the KKT matrix, in the block's own coordinates.
    Eigen::MatrixXd w2_block(const SpinBlock& blk) const {
        int d = blk.dim;
        Eigen::MatrixXd J = -Eigen::MatrixXd::Identity(d, d);
        J(0, 0) = 1.0;
        Eigen::MatrixXd w2 =
            blk.eta * blk.eta * (2.0 * blk.wbar * blk.wbar.transpose() - J);
        if (blk.kind == ConeKind::RotatedSoc) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Identity(d, d);
            double isq = 1.0 / std::sqrt(2.0);
            T(0, 0) = isq; T(0, 1) = isq;
            T(1, 0) = isq; T(1, 1) = -isq;
            w2 = T * w2 * T;
        }
        return w2;
    }
};

// Jordan algebra products in the (lambda-) scaled space.
struct Jordan {
    const Cones* K;

    Eigen::VectorXd mul(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        Eigen::VectorXd r(K->m);
        for (int i = 0; i < K->n_lp; ++i) r[i] = a[i] * b[i];
        for (const auto& blk : K->spins) {
            Eigen::VectorXd ab = a.segment(blk.offset, blk.dim);
            Eigen::VectorXd bb = b.segment(blk.offset, blk.dim);
            to_std(blk, ab);
            to_std(blk, bb);
            Eigen::VectorXd rb(blk.dim);
            rb[0] = ab.dot(bb);
            rb.tail(blk.dim - 1) =
                ab[0] * bb.tail(blk.dim - 1) + bb[0] * ab.tail(blk.dim - 1);
            from_std(blk, rb);
            r.segment(blk.offset, blk.dim) = rb;
        }
        return r;
    }

    // Solves lam o q = d for q.
    Eigen::VectorXd div(const Eigen::VectorXd& lam, const Eigen::VectorXd& d) const {
        Eigen::VectorXd r(K->m);
        for (int i = 0; i < K->n_lp; ++i) r[i] = d[i] / lam[i];
        for (const auto& blk : K->spins) {
            Eigen::VectorXd lb = lam.segment(blk.offset, blk.dim);
            Eigen::VectorXd db = d.segment(blk.offset, blk.dim);
            to_std(blk, lb);
            to_std(blk, db);
            int n1 = blk.dim - 1;
            double det = lb[0] * lb[0] - lb.tail(n1).squaredNorm();
            Eigen::VectorXd qb(blk.dim);
            qb[0] = (lb[0] * db[0] - lb.tail(n1).dot(db.tail(n1))) / det;
            qb.tail(n1) = (db.tail(n1) - qb[0] * lb.tail(n1)) / lb[0];
            from_std(blk, qb);
            r.segment(blk.offset, blk.dim) = qb;
        }
        return r;
    }
};

// Dense LDL' factorization without pivoting; valid for quasi-definite
// matrices (which the regularized KKT matrix is). Pivots that collapse or
// flip sign under roundoff are pushed back to their quasi-definite sign
// with a small dynamic regularization; iterative refinement absorbs it.
class Ldlt {
  public:
    bool factor(const Eigen::MatrixXd& M, const std::vector<int>& sign) {
        int n = static_cast<int>(M.rows());
        L_ = M;
        d_.resize(n);
        for (int j = 0; j < n; ++j) {
            double dj = L_(j, j);
            for (int k = 0; k < j; ++k) dj -= L_(j, k) * L_(j, k) * d_[k];
            if (!std::isfinite(dj) || sign[j] * dj <= 0.0) return false;
            d_[j] = dj;
            for (int i = j + 1; i < n; ++i) {
                double v = L_(i, j);
                for (int k = 0; k < j; ++k) v -= L_(i, k) * L_(j, k) * d_[k];
                L_(i, j) = v / dj;
            }
        }
        return true;
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        int n = static_cast<int>(d_.size());
        Eigen::VectorXd u = rhs;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < i; ++k) u[i] -= L_(i, k) * u[k];
        for (int i = 0; i < n; ++i) u[i] /= d_[i];
        for (int i = n - 1; i >= 0; --i)
            for (int k = i + 1; k < n; ++k) u[i] -= L_(k, i) * u[k];
        return u;
    }

  private:
    Eigen::MatrixXd L_;
    Eigen::VectorXd d_;
};

}  // namespace ipm_detail

struct KktReport {
    double stationarity = 0.0;      // max |c - A'y - z|
    double eq_residual = 0.0;       // max |A x - b|
    double complementarity = 0.0;   // max |<x_blk, z_blk>|
    double primal_cone_margin = 0.0;
    double dual_cone_margin = 0.0;
};

class InteriorPointSolver {
  public:
    /// Solves the continuous relaxation of `prog` (integer marks ignored).
    ConicSolution solve(const ConicProgram& prog, const SolveSettings& st = {}) const {
        using namespace ipm_detail;
        const int n = prog.num_vars();
        const int p = prog.num_eqs();

        // Cone layout over the program variables.
        Cones K;
        std::vector<int> g_cols;
        for (const auto& blk : prog.blocks())
            if (blk.kind == ConeKind::NonNeg) g_cols.push_back(blk.start);
        K.n_lp = static_cast<int>(g_cols.size());
        int off = K.n_lp;
        for (const auto& blk : prog.blocks()) {
            if (blk.kind == ConeKind::Soc || blk.kind == ConeKind::RotatedSoc) {
                K.spins.push_back({blk.kind, off, blk.size, blk.start, {}, 1.0});
                for (int i = 0; i < blk.size; ++i) g_cols.push_back(blk.start + i);
                off += blk.size;
            }
        }
        K.m = off;
        const int m = K.m;

        Eigen::VectorXd c0(n);
        for (int i = 0; i < n; ++i) c0[i] = prog.objective()[i];
        Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(p, n);
        Eigen::VectorXd b0(p);
        for (int r = 0; r < p; ++r) {
            for (const auto& [v, cf] : prog.eq_lhs()[r].coefs()) A0(r, v) = cf;
            b0[r] = prog.eq_rhs()[r];
        }

        // Ruiz equilibration. Columns of a cone block share one scale so the
        // scaled variables live in the same cone.
        Eigen::VectorXd dcol = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd erow = Eigen::VectorXd::Ones(p);
        for (int pass = 0; pass < 4 && p > 0; ++pass) {
            Eigen::VectorXd colmax = Eigen::VectorXd::Zero(n);
            for (int r = 0; r < p; ++r)
                for (int j = 0; j < n; ++j)
                    colmax[j] = std::max(colmax[j], std::fabs(erow[r] * A0(r, j) * dcol[j]));
            for (const auto& blk : prog.blocks()) {
                if (blk.kind == ConeKind::Soc || blk.kind == ConeKind::RotatedSoc) {
                    double mx = 0.0;
                    for (int i = 0; i < blk.size; ++i) mx = std::max(mx, colmax[blk.start + i]);
                    for (int i = 0; i < blk.size; ++i) colmax[blk.start + i] = mx;
                }
            }
            for (int j = 0; j < n; ++j)
                if (colmax[j] > 0.0) dcol[j] /= std::sqrt(colmax[j]);
            Eigen::VectorXd rowmax = Eigen::VectorXd::Zero(p);
            for (int r = 0; r < p; ++r) {
                for (int j = 0; j < n; ++j)
                    rowmax[r] = std::max(rowmax[r], std::fabs(erow[r] * A0(r, j) * dcol[j]));
                rowmax[r] = std::max(rowmax[r], std::fabs(erow[r] * b0[r]));
            }
            for (int r = 0; r < p; ++r)
                if (rowmax[r] > 0.0) erow[r] /= std::sqrt(rowmax[r]);
        }
        Eigen::MatrixXd A = erow.asDiagonal() * A0 * dcol.asDiagonal();
        const double sigma_b = 1.0;
        Eigen::VectorXd b = erow.asDiagonal() * b0;
        Eigen::VectorXd c_unit = dcol.asDiagonal() * c0;
        double sigma_c = 1.0 / std::max(1.0, c_unit.lpNorm<Eigen::Infinity>());
        Eigen::VectorXd c = sigma_c * c_unit;

        auto mulG = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd r(m);
            for (int j = 0; j < m; ++j) r[j] = -x[g_cols[j]];
            return r;
        };
        auto mulGt = [&](const Eigen::VectorXd& z) {
            Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
            for (int j = 0; j < m; ++j) r[g_cols[j]] -= z[j];
            return r;
        };

        // Iterates of the homogeneous embedding (scaled data).
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd s(m), z(m);
        K.set_identity(s);
        K.set_identity(z);
        double tau = 1.0, kappa = 1.0;

        const double resx0 = std::max(1.0, c0.lpNorm<Eigen::Infinity>());
        const double resy0 = std::max(1.0, p > 0 ? b0.lpNorm<Eigen::Infinity>() : 0.0);
        const int nu = K.degree();

        Scaling W;
        Jordan jd{&K};
        Eigen::VectorXd lambda;
        Ldlt ldl;
        const int dim = n + p + m;

        ConicSolution best;
        double best_score = std::numeric_limits<double>::infinity();

        // Unscaled candidate solution from the current embedding iterate.
        auto make_solution = [&](SolveStatus status) {
            ConicSolution sol;
            sol.status = status;
            sol.x.resize(n);
            sol.y.resize(p);
            sol.z = Eigen::VectorXd::Zero(n);
            double t = std::max(tau, 1e-300);
            for (int i = 0; i < n; ++i) sol.x[i] = dcol[i] * x[i] / (t * sigma_b);
            for (int r = 0; r < p; ++r) sol.y[r] = -erow[r] * y[r] / (sigma_c * t);
            for (int j = 0; j < m; ++j)
                sol.z[g_cols[j]] = z[j] / (dcol[g_cols[j]] * sigma_c * t);
            sol.objective_value = c0.dot(sol.x) + prog.objective_offset();
            return sol;
        };

        // Step state kept for backtracking when the NT update fails on the
        // cone boundary.
        Eigen::VectorXd dx_l, dy_l, dz_l, ds_l;
        double dt_l = 0.0, dk_l = 0.0, alpha_l = 0.0;
        double sigma_last = 0.0;
        int backtracks = 0;
        double resh0 = 1.0;
        constexpr double kMuLag = 1e-3;  // floor on mu relative to residual progress

        int iter = 0;
        for (; iter <= st.max_iter; ++iter) {
            // Residuals of the homogeneous system (scaled space).
            Eigen::VectorXd rx = A.transpose() * y + mulGt(z) + c * tau;
            Eigen::VectorXd ry = A * x - b * tau;
            Eigen::VectorXd rz = s + mulG(x);  // h = 0
            double rt = kappa + c.dot(x) + b.dot(y);
            double mu = (s.dot(z) + tau * kappa) / (nu + 1);

            // Convergence measures on the original data. The cone rows only
            // tie the slack copy to its variable, so their residual is
            // normalized by the coordinate's own magnitude.
            ConicSolution cand = make_solution(SolveStatus::NumericalFailure);
            double pres = 0.0;
            if (p > 0) pres = (A0 * cand.x - b0).lpNorm<Eigen::Infinity>() / resy0;
            for (int j = 0; j < m; ++j) {
                double sres_j = dcol[g_cols[j]] * s[j] / (tau * sigma_b) - cand.x[g_cols[j]];
                pres = std::max(pres,
                                std::fabs(sres_j) / (1.0 + std::fabs(cand.x[g_cols[j]])));
            }
            Eigen::VectorXd station = c0 - cand.z;
            station -= A0.transpose() * cand.y;
            double dres = station.lpNorm<Eigen::Infinity>() / resx0;
            double pobj = c0.dot(cand.x);
            double dobj = b0.dot(cand.y);
            double relgap =
                std::fabs(pobj - dobj) / std::max({1.0, std::fabs(pobj), std::fabs(dobj)});

            if (st.verbose && st.log) {
                char buf[200];
                std::snprintf(
                    buf, sizeof(buf),
                    "iter %3d  pres %9.2e  dres %9.2e  relgap %9.2e  mu %9.2e  tau %8.1e  "
                    "kap %8.1e  alpha %6.4f  sigma %6.4f\n",
                    iter, pres, dres, relgap, mu, tau, kappa, alpha_l, sigma_last);
                (*st.log) << buf;
            }

            double score = std::max({pres, dres, relgap});
            if (score < best_score) {
                best_score = score;
                best = cand;
                best.gap = relgap;
                best.primal_residual = pres;
                best.dual_residual = dres;
                best.iterations = iter;
            }

            if (pres <= st.feas_tol && dres <= st.feas_tol && relgap <= st.gap_tol) {
                cand.status = SolveStatus::Optimal;
                cand.gap = relgap;
                cand.primal_residual = pres;
                cand.dual_residual = dres;
                cand.iterations = iter;
                return cand;
            }
            // Infeasibility certificates (scale-invariant ratios).
            auto cert_residuals = [&](double& pinfres, double& dinfres) {
                pinfres = dinfres = std::numeric_limits<double>::infinity();
                double cert = -b.dot(y);
                if (cert > 0.0)
                    pinfres =
                        (A.transpose() * y + mulGt(z)).lpNorm<Eigen::Infinity>() / cert;
                double dcert = -c.dot(x);
                if (dcert > 0.0)
                    dinfres = std::max((A * x).lpNorm<Eigen::Infinity>(),
                                       (mulG(x) + s).lpNorm<Eigen::Infinity>()) /
                              dcert;
            };
            double pinfres, dinfres;
            cert_residuals(pinfres, dinfres);
            if (pinfres <= st.feas_tol) {
                ConicSolution sol = make_solution(SolveStatus::Infeasible);
                sol.iterations = iter;
                return sol;
            }
            if (dinfres <= st.feas_tol) {
                ConicSolution sol = make_solution(SolveStatus::Unbounded);
                sol.iterations = iter;
                return sol;
            }
            if (iter == st.max_iter) break;

            // NT scaling; when the previous step grazed the boundary, undo
            // half of it and retry.
            bool scaled = W.update(K, s, z, lambda);
            while (!scaled && alpha_l > 1e-13 && backtracks < 50) {
                ++backtracks;
                x -= 0.5 * alpha_l * dx_l;
                y -= 0.5 * alpha_l * dy_l;
                z -= 0.5 * alpha_l * dz_l;
                s -= 0.5 * alpha_l * ds_l;
                tau -= 0.5 * alpha_l * dt_l;
                kappa -= 0.5 * alpha_l * dk_l;
                alpha_l *= 0.5;
                scaled = W.update(K, s, z, lambda);
            }
            if (!scaled) {
                if (st.verbose && st.log) (*st.log) << "stop: scaling update failed\n";
                break;
            }

            // Assemble and factor the KKT matrix.
            Eigen::MatrixXd KM = Eigen::MatrixXd::Zero(dim, dim);
            for (int r = 0; r < p; ++r)
                for (int j = 0; j < n; ++j) {
                    KM(n + r, j) = A(r, j);
                    KM(j, n + r) = A(r, j);
                }
            for (int j = 0; j < m; ++j) {
                KM(n + p + j, g_cols[j]) = -1.0;
                KM(g_cols[j], n + p + j) = -1.0;
            }
            for (int i = 0; i < K.n_lp; ++i)
                KM(n + p + i, n + p + i) = -W.w_lp[i] * W.w_lp[i];
            for (const auto& blk : K.spins) {
                Eigen::MatrixXd w2 = W.w2_block(blk);
                KM.block(n + p + blk.offset, n + p + blk.offset, blk.dim, blk.dim) = -w2;
            }
            std::vector<int> kkt_sign(dim, -1);
            for (int i = 0; i < n; ++i) kkt_sign[i] = 1;
            bool factored = false;
            for (double reg = st.static_reg; reg <= 1e-2 && !factored; reg *= 100.0) {
                Eigen::MatrixXd KR = KM;
                for (int i = 0; i < n; ++i) KR(i, i) += reg;
                for (int i = n; i < dim; ++i) KR(i, i) -= reg;
                factored = ldl.factor(KR, kkt_sign);
            }
            if (!factored) {
                if (st.verbose && st.log) (*st.log) << "stop: factorization failed\n";
                break;
            }

            // Iterative refinement against the unregularized matrix, with the
            // residual accumulated in extended precision.
            auto kkt_residual = [&](const Eigen::VectorXd& rhs, const Eigen::VectorXd& u) {
                Eigen::VectorXd r(dim);
                for (int i = 0; i < dim; ++i) {
                    long double acc = rhs[i];
                    for (int j = 0; j < dim; ++j)
                        acc -= static_cast<long double>(KM(i, j)) * u[j];
                    r[i] = static_cast<double>(acc);
                }
                return r;
            };
            auto kkt_solve = [&](const Eigen::VectorXd& rhs) {
                Eigen::VectorXd u = ldl.solve(rhs);
                for (int ref = 0; ref < 4; ++ref) {
                    Eigen::VectorXd r = kkt_residual(rhs, u);
                    u += ldl.solve(r);
                }
                return u;
            };

            Eigen::VectorXd rhs1(dim);
            rhs1 << -c, b, Eigen::VectorXd::Zero(m);
            Eigen::VectorXd u1 = kkt_solve(rhs1);
            double cbh_u1 = c.dot(u1.head(n)) + b.dot(u1.segment(n, p));

            auto newton = [&](const Eigen::VectorXd& dx, const Eigen::VectorXd& dy,
                              const Eigen::VectorXd& dz, double dt,
                              const Eigen::VectorXd& ds_tilde, double dk_tilde,
                              Eigen::VectorXd& Dx, Eigen::VectorXd& Dy, Eigen::VectorXd& Dz,
                              Eigen::VectorXd& Ds, double& Dtau, double& Dkappa) {
                Eigen::VectorXd ds_hat = W.apply(jd.div(lambda, ds_tilde), false);
                Eigen::VectorXd rhs2(dim);
                rhs2 << dx, dy, dz - ds_hat;
                Eigen::VectorXd u2 = kkt_solve(rhs2);
                double cbh_u2 = c.dot(u2.head(n)) + b.dot(u2.segment(n, p));
                Dtau = (dt - dk_tilde / tau - cbh_u2) / (cbh_u1 - kappa / tau);
                Dx = u2.head(n) + Dtau * u1.head(n);
                Dy = u2.segment(n, p) + Dtau * u1.segment(n, p);
                Dz = u2.tail(m) + Dtau * u1.tail(m);
                Ds = ds_hat - W.apply(W.apply(Dz, false), false);
                Dkappa = (dk_tilde - kappa * Dtau) / tau;
            };

            // Predictor (affine) direction.
            Eigen::VectorXd dxa, dya, dza, dsa;
            double dta, dka;
            Eigen::VectorXd ds_tilde_aff = -jd.mul(lambda, lambda);
            newton(-rx, -ry, -rz, -rt, ds_tilde_aff, -tau * kappa, dxa, dya, dza, dsa, dta,
                   dka);

            double a_aff = K.max_step(s, dsa, 1.0);
            a_aff = std::min(a_aff, K.max_step(z, dza, 1.0));
            if (dta < 0.0) a_aff = std::min(a_aff, -tau / dta);
            if (dka < 0.0) a_aff = std::min(a_aff, -kappa / dka);
            double sigma = std::pow(1.0 - a_aff, 3);
            sigma = std::clamp(sigma, 0.0, 1.0);
            sigma_last = sigma;

            // Corrector (combined) direction with Mehrotra second-order term.
            Eigen::VectorXd e_id(m);
            K.set_identity(e_id);
            Eigen::VectorXd corr = jd.mul(W.apply(dsa, true), W.apply(dza, false));
            Eigen::VectorXd ds_tilde = -jd.mul(lambda, lambda) - corr + sigma * mu * e_id;
            double dk_tilde = -(tau * kappa + dta * dka) + sigma * mu;
            // full residual elimination; sigma only centres complementarity
            Eigen::VectorXd dx, dy, dz, ds;
            double dt, dk;
            newton(-rx, -ry, -rz, -rt, ds_tilde, dk_tilde, dx, dy, dz, ds, dt, dk);

            double a_max = K.max_step(s, ds, 10.0);
            a_max = std::min(a_max, K.max_step(z, dz, 10.0));
            if (dt < 0.0) a_max = std::min(a_max, -tau / dt);
            if (dk < 0.0) a_max = std::min(a_max, -kappa / dk);
            double alpha = std::min(1.0, 0.99 * a_max);

            // The combined step removes the full residual, so residuals
            // contract by (1 - alpha) while mu can collapse quadratically.
            // Keep mu lagging no further than a fixed factor behind the
            // residuals: once mu is many orders below an unconverged
            // residual the scaling is too ill-conditioned to recover.
            double resh_now = std::max({rx.lpNorm<Eigen::Infinity>(),
                                        p > 0 ? ry.lpNorm<Eigen::Infinity>() : 0.0,
                                        rz.lpNorm<Eigen::Infinity>(), std::fabs(rt)});
            if (iter == 0) resh0 = std::max(resh_now, 1e-12);
            bool lag_ok_now = mu >= kMuLag * resh_now / resh0;
            for (int bt = 0; bt < 60; ++bt) {
                Eigen::VectorXd s_try = s + alpha * ds;
                Eigen::VectorXd z_try = z + alpha * dz;
                double t_try = tau + alpha * dt;
                double k_try = kappa + alpha * dk;
                if (t_try > 0.0 && k_try > 0.0 && K.strictly_inside(s_try) &&
                    K.strictly_inside(z_try)) {
                    if (!lag_ok_now) break;  // cannot restore the bound, only keep the cone
                    double mu_try = (s_try.dot(z_try) + t_try * k_try) / (nu + 1);
                    double resh_try = (1.0 - alpha) * resh_now;
                    if (mu_try >= kMuLag * resh_try / resh0) break;
                }
                alpha *= 0.5;
            }

            x += alpha * dx;
            y += alpha * dy;
            z += alpha * dz;
            s += alpha * ds;
            tau += alpha * dt;
            kappa += alpha * dk;
            dx_l = dx; dy_l = dy; dz_l = dz; ds_l = ds;
            dt_l = dt; dk_l = dk; alpha_l = alpha;
        }

        // The path often identifies an infeasibility ray just as mu collapses
        // below the point where the NT scaling can still be formed, one step
        // short of the strict in-loop test; accept the certificate at a
        // relaxed exit tolerance when tau has clearly vanished.
        if (tau <= 1e-5 * std::max(1.0, kappa)) {
            double cert = -b.dot(y);
            if (cert > 0.0 &&
                (A.transpose() * y + mulGt(z)).lpNorm<Eigen::Infinity>() / cert <=
                    1e3 * st.feas_tol) {
                ConicSolution sol = make_solution(SolveStatus::Infeasible);
                sol.iterations = iter;
                return sol;
            }
            double dcert = -c.dot(x);
            if (dcert > 0.0 &&
                std::max((A * x).lpNorm<Eigen::Infinity>(),
                         (mulG(x) + s).lpNorm<Eigen::Infinity>()) /
                        dcert <=
                    1e3 * st.feas_tol) {
                ConicSolution sol = make_solution(SolveStatus::Unbounded);
                sol.iterations = iter;
                return sol;
            }
        }
        best.status = SolveStatus::NumericalFailure;
        best.iterations = iter;
        return best;
    }
};

inline ConicSolution solve(const ConicProgram& prog, const SolveSettings& st = {}) {
    return InteriorPointSolver{}.solve(prog, st);
}

/// KKT residual summary of an optimal primal-dual pair.
inline KktReport kkt_report(const ConicProgram& prog, const ConicSolution& sol) {
    KktReport rep;
    const int n = prog.num_vars();
    Eigen::VectorXd station(n);
    for (int i = 0; i < n; ++i) station[i] = prog.objective()[i] - sol.z[i];
    for (int r = 0; r < prog.num_eqs(); ++r) {
        double lhs = 0.0;
        for (const auto& [v, cf] : prog.eq_lhs()[r].coefs()) {
            station[v] -= cf * sol.y[r];
            lhs += cf * sol.x[v];
        }
        rep.eq_residual = std::max(rep.eq_residual, std::fabs(lhs - prog.eq_rhs()[r]));
    }
    rep.stationarity = station.lpNorm<Eigen::Infinity>();

    rep.primal_cone_margin = std::numeric_limits<double>::infinity();
    rep.dual_cone_margin = std::numeric_limits<double>::infinity();
    auto spin_margin = [](ConeKind kind, const Eigen::VectorXd& v) {
        Eigen::VectorXd u = v;
        if (kind == ConeKind::RotatedSoc) ipm_detail::rot2(u);
        return u[0] - u.tail(u.size() - 1).norm();
    };
    for (const auto& blk : prog.blocks()) {
        if (blk.kind == ConeKind::Free) continue;
        Eigen::VectorXd xb = sol.x.segment(blk.start, blk.size);
        Eigen::VectorXd zb = sol.z.segment(blk.start, blk.size);
        rep.complementarity = std::max(rep.complementarity, std::fabs(xb.dot(zb)));
        if (blk.kind == ConeKind::NonNeg) {
            rep.primal_cone_margin = std::min(rep.primal_cone_margin, xb[0]);
            rep.dual_cone_margin = std::min(rep.dual_cone_margin, zb[0]);
        } else {
            rep.primal_cone_margin =
                std::min(rep.primal_cone_margin, spin_margin(blk.kind, xb));
            rep.dual_cone_margin = std::min(rep.dual_cone_margin, spin_margin(blk.kind, zb));
        }
    }
    return rep;
}

}  // namespace fresco
