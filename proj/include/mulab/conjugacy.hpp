#pragma once

#include "mulab/admissibility.hpp"
#include "mulab/dichotomy.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace mulab {

/// Where the improper integrals are cut. The cut is placed where the tail
/// envelope integrates to tail_tol; a cut farther than max_span from t throws
/// TruncationUnreachable.
struct TruncationPolicy {
    double tail_tol = 1e-6;
    double max_span = 200.0;
};

/// Discretization of eta. Unstable coordinates are stored through the
/// transported variable z with b = Phi(t) z, Phi(t) = Tbar(t, 0) on U, so a
/// linear orbit keeps its z. Each of the d_u axes of z uses the same points.
struct ConjugacyGrid {
    double t_min = -6.0;
    double t_max = 6.0;
    double t_step = 0.25;
    double z_min = -3.0;
    double z_max = 3.0;
    int z_points = 241;
};

struct SolverOptions {
    double tol = 1e-12;
    int max_sweeps = 25;
};

struct ConjugacyProblem {
    DichotomyModel model;
    Perturbation pert;
    ParamSet params;
    TruncationPolicy trunc;
    ConjugacyGrid grid;
};

struct EtaNorms {
    double sup = 0.0;            // ||eta||_inf
    double sup_mu = 0.0;         // ||eta||_{inf,mu}
    double derivative_mu = 0.0;  // ||d eta/d b||_{inf,mu}
    double one_mu = 0.0;         // ||eta||_{1,mu} = sup_mu + derivative_mu
};

/// eta on the tensor grid t x z. values[i] is flat x Nz (one flattened
/// segment per z point); derivative[i] is flat x (Nz d_u) with the z-gradient
/// of point j in columns [j d_u, (j + 1) d_u).
struct EtaField {
    std::vector<double> t_grid;
    std::vector<double> z_axis;
    int unstable_dim = 0;
    int dim = 0;
    int resolution = 0;
    double delay = 1.0;
    std::vector<Matrix> values;
    std::vector<Matrix> derivative;
    EtaNorms norms;

    Eigen::Index flat_size() const { return static_cast<Eigen::Index>(dim) * (resolution + 1); }
    /// Number of z points, z_axis.size()^d_u.
    Eigen::Index z_count() const;
    /// The z point with tensor index j (axis 0 fastest).
    Vector z_point(Eigen::Index j) const;
    /// Unstable coordinates at t_grid[i] of every z point, b = Phi(t) z.
    std::vector<Vector> b_grid(const DichotomyModel& m, std::size_t i) const;

    void save(const std::filesystem::path& file) const;
    static EtaField load(const std::filesystem::path& file);
};

/// eta = 0 with derivative 0 on the problem's grid.
EtaField zero_field(const ConjugacyProblem& p);

/// Phi(t): the map z -> b.
Matrix transport(const DichotomyModel& m, double t);

/// Interpolated eta(t, b) and its z-gradient. Outside the grid the nearest
/// boundary value is used; `clamped` reports whether that happened.
struct EtaSample {
    Segment value;
    Matrix dz;  // flat x d_u
    bool clamped = false;
};
EtaSample eta_at(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b);

/// d eta/d b (t, b) as a flat x d_u matrix.
Matrix eta_derivative_b(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b);

/// Recompute norms in place.
void update_norms(const ConjugacyProblem& p, EtaField& eta);

/// Integration window [tau_lo, tau_hi] around t before snapping to panels.
std::pair<double, double> truncation_window(const ConjugacyProblem& p, double t);

/// Dd(alpha + beta)/(alpha beta), the sup-norm bound of F.
double F_norm_bound(const ParamSet& p);
/// The bound on ||dF(eta)/db||_{inf,mu} for eta in the ball of radius q.
double dF_norm_bound(const ParamSet& p);

/// F(eta)(t, b) as a segment at t.
Segment F_apply(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b);

/// dF(eta)/db (t, b), the sum of the four quadratures, as a flat x d_u matrix.
Matrix dF_db_apply(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b);

/// One Picard sweep on the grid: (F(eta), dF(eta)/db) at every grid point.
/// Construction integrates every kernel once; `apply` may then be called
/// repeatedly.
class SweepOperator {
public:
    explicit SweepOperator(const ConjugacyProblem& p);
    ~SweepOperator();
    SweepOperator(SweepOperator&&) noexcept;
    SweepOperator& operator=(SweepOperator&&) noexcept;

    EtaField apply(const EtaField& eta) const;
    /// Fraction of quadrature nodes lying outside the t grid (eta clamped).
    double t_clamp_rate() const;

    /// Kernel storage, shared with single-point evaluation.
    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

/// ||a - b||_{1,mu} for fields on the same grid.
double distance_one_mu(const ConjugacyProblem& p, const EtaField& a, const EtaField& b);

struct SweepRecord {
    int k = 0;
    double delta = 0.0;  // ||eta_k - eta_{k-1}||_{1,mu}
    double ratio = 0.0;  // delta_k / delta_{k-1}; 0 for the first sweep
};

struct ResidualSample {
    double t = 0.0;
    double s = 0.0;
    Vector b;
    double raw = 0.0;
    double weighted = 0.0;
};

struct ConjugacyResult {
    EtaField eta;
    std::vector<SweepRecord> sweeps;
    bool converged = false;
    double contraction_rate_measured = 0.0;
    double contraction_rate_theoretical = 0.0;  // q/(1 + q)
    double norm_bound = 0.0;                    // F_norm_bound + tail_tol
    double t_clamp_rate = 0.0;
    std::vector<ResidualSample> residual_grid;
    double derivative_margin = 1.0;
};

/// Picard iteration from eta = 0. Throws NotContracting when the measured
/// ratio is >= 1 for two consecutive sweeps.
ConjugacyResult picard_solve(const ConjugacyProblem& p, const SolverOptions& opts = {});

struct ResidualValue {
    double raw = 0.0;
    double weighted = 0.0;
};

/// ||T(t,s) b^ + eta(t, T(t,s) b) - R(t,s)(b^ + eta(s, b))||, raw and with
/// the mu weight at t. Throws TimeOrder if t < s.
ResidualValue conjugacy_residual(const ConjugacyProblem& p, const EtaField& eta, double t,
                                 double s, const Vector& b);

/// Residuals at `samples` random (t, s, z) with 0 <= t - s <= max_gap inside
/// the grid, appended to result.residual_grid.
void sample_residuals(const ConjugacyProblem& p, ConjugacyResult& result, int samples,
                      double max_gap, std::uint64_t seed);

struct InvertibilityReport {
    double derivative_norm = 0.0;
    double margin = 1.0;
    bool margin_ok = true;
    /// Only meaningful for d_u = 1.
    bool monotone_checked = false;
    bool monotone = true;
    double min_increment = 0.0;
    bool pass() const { return margin_ok && monotone; }
};

/// margin = 1 - ||d eta/d b||_{inf,mu}; for d_u = 1 also checks that
/// b -> b + coordinates of Q(t) eta(t, b) increases strictly along each
/// b column.
InvertibilityReport invertibility_check(const ConjugacyProblem& p, const EtaField& eta);

/// Per time, max_z |central difference in z of eta - stored gradient| over
/// max_z |stored gradient|, on interior z points. Returns the worst time.
double derivative_fd_error(const EtaField& eta);

} // namespace mulab
