#pragma once

#include "mulab/phase_space.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mulab {

/// One point-delay term A(t) x(t - lag).
struct DelayTerm {
    double lag = 0.0;
    std::function<Matrix(double)> coeff;
};

/// x'(t) = sum_k A_k(t) x(t - lag_k) with 0 <= lag_k <= r.
class LinearDelaySystem {
public:
    LinearDelaySystem(double delay, int dim, std::vector<DelayTerm> terms, std::string label = {});

    double delay() const noexcept { return r_; }
    int dim() const noexcept { return n_; }
    const std::vector<DelayTerm>& terms() const noexcept { return terms_; }
    const std::string& label() const noexcept { return label_; }

    /// L(t) phi for a sampled segment.
    Vector apply(double t, const Segment& phi) const;

private:
    double r_;
    int n_;
    std::vector<DelayTerm> terms_;
    std::string label_;
};

/// Constants describing the perturbation envelopes.
struct EnvelopeParams {
    double delta = 0.0;
    double gamma = 0.0;
    double lambda = 0.0;
    double xi = 0.0;
    double eps = 0.0;
};

/// Nonlinear term g(t, x_t) together with its derivative in the segment
/// argument. `d2g(t, phi)` is an n x (n (m + 1)) matrix acting on flattened
/// segment samples.
struct Perturbation {
    std::function<Vector(double, const Segment&)> g;
    std::function<Matrix(double, const Segment&)> d2g;
    EnvelopeParams params;
    std::string label;
    bool identically_zero = false;
};

Perturbation zero_perturbation(int dim);

/// Dense solution on [s - r, t_end] produced by the method of steps.
class Trajectory {
public:
    double start() const noexcept { return s_; }
    double end() const noexcept { return t_end_; }
    double step() const noexcept { return h_; }
    const C0Segment& initial() const noexcept { return initial_; }

    /// x(u) for u in [s - r, t_end]. At u = s this is the state including any
    /// jump of the initial data.
    Vector operator()(double u) const;

    /// The x_t view sampled on the initial segment's grid.
    Segment segment_at(double t) const;

    std::size_t node_count() const noexcept { return times_.size(); }
    double node_time(std::size_t k) const { return times_[k]; }
    Vector node_state(std::size_t k) const { return states_.col(static_cast<Eigen::Index>(k)); }

private:
    friend class MethodOfSteps;

    Trajectory(double s, double t_end, double h, C0Segment initial)
        : s_(s), t_end_(t_end), h_(h), initial_(std::move(initial)) {}

    Vector hermite(std::size_t k, double u) const;
    std::size_t locate(double u) const;

    double s_;
    double t_end_;
    double h_;
    C0Segment initial_;
    std::vector<double> times_;
    Matrix states_;
    Matrix slopes_;
};

/// Integrate x' = L(t) x_t from C0 data at s to t_end by classical RK4.
/// The step must divide the delay.
Trajectory solve_linear(const LinearDelaySystem& sys, double s, const C0Segment& phi,
                        double t_end, double step);

/// Same with the nonlinear term: x' = L(t) x_t + g(t, x_t).
Trajectory solve_perturbed(const LinearDelaySystem& sys, const Perturbation& pert, double s,
                           const C0Segment& phi, double t_end, double step);

/// T(t, s) phi.
Segment solution_op_T(const LinearDelaySystem& sys, double t, double s, const Segment& phi,
                      double step);

/// T0(t, s) X0 p. At t = s the jump segment itself is returned.
C0Segment fundamental_jump(const LinearDelaySystem& sys, double t, double s, const Vector& p,
                           int resolution, double step);

/// R(t, s) phi.
Segment solve_perturbed_R(const LinearDelaySystem& sys, const Perturbation& pert, double t,
                          double s, const Segment& phi, double step);

/// Throws StepMisaligned unless step divides delay to 1e-12.
void require_aligned_step(double delay, double step);

/// Largest step <= target that divides delay.
double aligned_step(double delay, double target);

} // namespace mulab
