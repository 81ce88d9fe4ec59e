#pragma once

#include "mulab/dde.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mulab {

/// Dichotomy constants (K, alpha, beta, theta, nu) and bounded-growth
/// constants (K~ = k_growth, a, eps).
struct DichotomyConstants {
    double K = 1.0;
    double alpha = 1.0;
    double beta = 1.0;
    double theta = 0.0;
    double nu = 0.0;
    double k_growth = 1.0;
    double a = 0.0;
    double eps = 0.1;
};

/// A linear delay system together with an analytically known splitting
/// C = E(s) + U(s), dim U(s) = unstable_dim.
struct DichotomyModel {
    LinearDelaySystem sys;
    GrowthRate growth;
    /// P(s) phi.
    std::function<Segment(double, const Segment&)> stable_projection;
    int unstable_dim = 0;
    /// Segments spanning U(s), all of shape (delay, dim, resolution).
    std::function<std::vector<Segment>(double)> unstable_basis;
    /// Matrix of T(t, s) restricted to U(s) in basis coordinates. For t <= s
    /// this is the inverse evolution; for t >= s the forward one.
    std::function<Matrix(double, double)> unstable_backward;
    DichotomyConstants constants;
    int resolution = 32;
    double step = 1.0 / 32;
    std::string label;

    double delay() const noexcept { return sys.delay(); }
    int dim() const noexcept { return sys.dim(); }

    Segment P(double s, const Segment& phi) const { return stable_projection(s, phi); }
    Segment Q(double s, const Segment& phi) const { return phi - stable_projection(s, phi); }

    /// Coordinates of an element of U(s) in the unstable basis. Throws
    /// SingularUnstableBasis if the least-squares residual exceeds 1e-6
    /// relative to the segment.
    Vector unstable_coordinates(double s, const Segment& u) const;
    /// Segment sum_i c_i basis_i(s).
    Segment realize(double s, const Vector& coords) const;
    /// n (m + 1) x d_u matrix of flattened basis segments at s.
    Matrix basis_matrix(double s) const;
};

/// d_u x n matrix C(t) with Q0(t) p = realize(t, C(t) p).
Matrix q0_coordinates(const DichotomyModel& m, double t);

/// Q0(t) p = Tbar(t, t + r) Q(t + r) T0(t + r, t) X0 p.
Segment apply_Q0(const DichotomyModel& m, double t, const Vector& p);

/// P0(t) p = X0 p - Q0(t) p, kept as body plus jump.
C0Segment apply_P0(const DichotomyModel& m, double t, const Vector& p);

/// Largest of the constants bounding T0 P0 forward and Tbar Q0 backward:
/// K K~ N^{|a - beta| + nu}, K~ N^a (1 + K1), K K~ N^{a + alpha + theta} and
/// K K~ N^{a + alpha + eps}, with K1 = K K~ N^{|a - beta| + nu}.
double derived_constant_D(const DichotomyConstants& c, double N);

/// One sampled (t, s) pair and the lower-bound norm estimate measured there.
struct NormSample {
    double t = 0.0;
    double s = 0.0;
    double measured = 0.0;
    double bound = 0.0;
};

struct BoundCheck {
    std::string bound_name;
    double worst_ratio = 0.0;
    std::pair<double, double> argmax_pair{0.0, 0.0};
    bool pass = true;
    std::vector<NormSample> samples;
};

struct DichotomyCertificate {
    double t_min = 0.0;
    double t_max = 0.0;
    double tolerance = 5e-2;
    double D = 0.0;
    std::vector<BoundCheck> bounds;

    bool pass() const;
    const BoundCheck& bound(const std::string& name) const;
};

/// Measured operator norms for the five bound families, independent of the
/// claimed constants. Each family holds the same number of samples.
struct DichotomyMeasurements {
    double t_min = 0.0;
    double t_max = 0.0;
    std::vector<NormSample> stable;        // ||T(t,s) P(s)||, t >= s
    std::vector<NormSample> unstable;      // ||Tbar(t,s) Q(s)||, t <= s
    std::vector<NormSample> growth;        // ||T0(t,s)||, t >= s
    std::vector<NormSample> jump_stable;   // ||T0(t,s) P0(s)||, t >= s
    std::vector<NormSample> jump_unstable; // ||Tbar(t,s) Q0(s)||, t <= s
};

/// Samples `samples` random pairs in [t_min, t_max]^2 per family and
/// estimates each operator norm by maximizing over a fixed probe set.
DichotomyMeasurements measure_dichotomy(const DichotomyModel& m, double t_min, double t_max,
                                        int samples, std::uint64_t seed);

/// Scores measurements against the claimed constants. `N` is the ratio
/// bound of the model's growth rate for its delay.
DichotomyCertificate assess_dichotomy(const DichotomyMeasurements& meas,
                                      const DichotomyModel& m, double N,
                                      double tolerance = 5e-2);

/// measure_dichotomy followed by assess_dichotomy.
DichotomyCertificate verify_bounds(const DichotomyModel& m, double t_min, double t_max,
                                   int samples, std::uint64_t seed, double tolerance = 5e-2);

/// Ratio bound of the model's growth rate for its delay on a grid over
/// [-50, 50].
double model_ratio_bound(const DichotomyModel& m);

} // namespace mulab
