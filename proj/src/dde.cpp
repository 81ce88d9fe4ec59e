#include "mulab/dde.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mulab {

LinearDelaySystem::LinearDelaySystem(double delay, int dim, std::vector<DelayTerm> terms,
                                     std::string label)
    : r_(delay), n_(dim), terms_(std::move(terms)), label_(std::move(label)) {
    if (!(delay > 0.0)) throw NonPositiveDelay("system delay must be positive");
    if (dim < 1) throw InvalidArgument("system dimension must be positive");
    for (const auto& term : terms_) {
        if (term.lag < 0.0 || term.lag > delay * (1.0 + 1e-12))
            throw InvalidArgument("lag " + std::to_string(term.lag) + " outside [0, r]");
        if (!term.coeff) throw InvalidArgument("delay term without coefficient");
    }
}

Vector LinearDelaySystem::apply(double t, const Segment& phi) const {
    Vector out = Vector::Zero(n_);
    for (const auto& term : terms_) out += term.coeff(t) * interpolate(phi, -term.lag);
    return out;
}

Perturbation zero_perturbation(int dim) {
    Perturbation p;
    p.g = [dim](double, const Segment&) { return Vector::Zero(dim); };
    p.d2g = [dim](double, const Segment& phi) {
        return Matrix::Zero(dim, static_cast<Eigen::Index>(phi.flat_size()));
    };
    p.label = "zero";
    p.identically_zero = true;
    return p;
}

void require_aligned_step(double delay, double step) {
    if (!(step > 0.0)) throw StepMisaligned("step must be positive");
    const double k = std::round(delay / step);
    if (k < 1.0 || std::abs(delay - k * step) > 1e-12 * std::max(1.0, delay))
        throw StepMisaligned("step " + std::to_string(step) + " does not divide r = " +
                             std::to_string(delay));
}

double aligned_step(double delay, double target) {
    const double k = std::max(1.0, std::ceil(delay / target - 1e-9));
    return delay / k;
}

// ---------------------------------------------------------------------------

Vector Trajectory::hermite(std::size_t k, double u) const {
    const double t0 = times_[k], t1 = times_[k + 1];
    const double h = t1 - t0;
    const double th = (u - t0) / h;
    const double th2 = th * th, th3 = th2 * th;
    const auto c0 = static_cast<Eigen::Index>(k), c1 = c0 + 1;
    return (2 * th3 - 3 * th2 + 1) * states_.col(c0) + (th3 - 2 * th2 + th) * h * slopes_.col(c0) +
           (-2 * th3 + 3 * th2) * states_.col(c1) + (th3 - th2) * h * slopes_.col(c1);
}

std::size_t Trajectory::locate(double u) const {
    const std::size_t last = times_.size() - 2;
    const double x = std::floor((u - s_) / h_);
    if (x <= 0.0) return 0;
    return std::min(last, static_cast<std::size_t>(x));
}

Vector Trajectory::operator()(double u) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(s_) + std::abs(t_end_));
    const double r = initial_.delay();
    if (u < s_ - r - tol || u > t_end_ + tol)
        throw OutOfDomain("trajectory evaluated outside [s - r, t_end]");
    if (u < s_ - tol) return interpolate(initial_.body, std::max(u - s_, -r));
    if (times_.size() < 2) return states_.col(0);
    return hermite(locate(u), std::clamp(u, s_, t_end_));
}

Segment Trajectory::segment_at(double t) const {
    const Segment& shape = initial_.body;
    Matrix values(shape.dim(), shape.resolution() + 1);
    for (int j = 0; j <= shape.resolution(); ++j)
        values.col(j) = (*this)(j == shape.resolution() ? t : t + shape.omega(j));
    return Segment(shape.delay(), std::move(values));
}

// ---------------------------------------------------------------------------

class MethodOfSteps {
public:
    MethodOfSteps(const LinearDelaySystem& sys, const Perturbation* pert)
        : sys_(sys), pert_(pert) {}

    Trajectory run(double s, const C0Segment& phi, double t_end, double step) {
        if (t_end < s) throw TimeOrder("t_end precedes s");
        require_aligned_step(sys_.delay(), step);
        if (phi.dim() != sys_.dim()) throw InvalidArgument("initial data dimension mismatch");
        if (std::abs(phi.delay() - sys_.delay()) > 1e-12 * sys_.delay())
            throw InvalidArgument("initial segment delay differs from system delay");

        Trajectory traj(s, t_end, step, phi);
        const double span = t_end - s;
        auto full = static_cast<std::size_t>(std::floor(span / step + 1e-9));
        const double rest = span - static_cast<double>(full) * step;
        const bool partial = rest > 1e-12 * std::max(1.0, std::abs(t_end));
        const std::size_t steps = full + (partial ? 1 : 0);

        traj.times_.resize(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) traj.times_[k] = s + static_cast<double>(k) * step;
        traj.times_.back() = t_end;
        const int n = sys_.dim();
        traj.states_.resize(n, static_cast<Eigen::Index>(steps + 1));
        traj.slopes_.resize(n, static_cast<Eigen::Index>(steps + 1));

        traj_ = &traj;
        tol_ = 1e-12 * std::max(1.0, std::abs(s) + std::abs(t_end));
        const Vector x0 = phi.value_at_zero();
        traj.states_.col(0) = x0;
        traj.slopes_.col(0) = rhs({0, s, &x0, false});

        for (std::size_t k = 0; k < steps; ++k) {
            const double t = traj.times_[k];
            const double h = traj.times_[k + 1] - t;
            const Vector x = traj.states_.col(static_cast<Eigen::Index>(k));
            const Vector k1 = traj.slopes_.col(static_cast<Eigen::Index>(k));
            const Vector y2 = x + 0.5 * h * k1;
            const Vector k2 = rhs({k, t + 0.5 * h, &y2, false});
            const Vector y3 = x + 0.5 * h * k2;
            const Vector k3 = rhs({k, t + 0.5 * h, &y3, false});
            const Vector y4 = x + h * k3;
            const Vector k4 = rhs({k, t + h, &y4, true});
            const Vector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!next.allFinite())
                throw NonFiniteState("state overflow at t = " + std::to_string(t + h));
            traj.states_.col(static_cast<Eigen::Index>(k + 1)) = next;
            traj.slopes_.col(static_cast<Eigen::Index>(k + 1)) =
                rhs({k, traj.times_[k + 1], &next, false});
        }
        traj_ = nullptr;
        return traj;
    }

private:
    // Evaluation point of the right-hand side: nodes 0..done are final, the
    // stage value at time `tau` is `*y`. `left_limit` selects the limit from
    // below when a history read lands exactly on the start time.
    struct Stage {
        std::size_t done;
        double tau;
        const Vector* y;
        bool left_limit;
    };

    Vector read(double u, const Stage& st) const {
        const Trajectory& tr = *traj_;
        const double s = tr.s_;
        if (u < s - tol_ || (st.left_limit && u <= s + tol_))
            return interpolate(tr.initial_.body, std::clamp(u - s, -tr.initial_.delay(), 0.0));
        const double t_done = tr.times_[st.done];
        if (u <= t_done + tol_) {
            if (st.done == 0 || u >= t_done - tol_) return tr.states_.col(static_cast<Eigen::Index>(st.done));
            return tr.hermite(std::min(tr.locate(u), st.done - 1), u);
        }
        const double w = (u - t_done) / (st.tau - t_done);
        return (1.0 - w) * tr.states_.col(static_cast<Eigen::Index>(st.done)) + w * (*st.y);
    }

    Segment stage_segment(const Stage& st) const {
        const Segment& shape = traj_->initial_.body;
        Matrix values(shape.dim(), shape.resolution() + 1);
        for (int j = 0; j < shape.resolution(); ++j) values.col(j) = read(st.tau + shape.omega(j), st);
        values.col(shape.resolution()) = *st.y;
        return Segment(shape.delay(), std::move(values));
    }

    Vector rhs(const Stage& st) const {
        Vector out = Vector::Zero(sys_.dim());
        for (const auto& term : sys_.terms()) {
            if (term.lag == 0.0)
                out += term.coeff(st.tau) * (*st.y);
            else
                out += term.coeff(st.tau) * read(st.tau - term.lag, st);
        }
        if (pert_ && !pert_->identically_zero) out += pert_->g(st.tau, stage_segment(st));
        return out;
    }

    const LinearDelaySystem& sys_;
    const Perturbation* pert_;
    Trajectory* traj_ = nullptr;
    double tol_ = 0.0;
};

Trajectory solve_linear(const LinearDelaySystem& sys, double s, const C0Segment& phi,
                        double t_end, double step) {
    return MethodOfSteps(sys, nullptr).run(s, phi, t_end, step);
}

Trajectory solve_perturbed(const LinearDelaySystem& sys, const Perturbation& pert, double s,
                           const C0Segment& phi, double t_end, double step) {
    return MethodOfSteps(sys, &pert).run(s, phi, t_end, step);
}

Segment solution_op_T(const LinearDelaySystem& sys, double t, double s, const Segment& phi,
                      double step) {
    if (t < s) throw TimeOrder("T(t, s) needs t >= s");
    if (t == s) return phi;
    return solve_linear(sys, s, phi, t, step).segment_at(t);
}

C0Segment fundamental_jump(const LinearDelaySystem& sys, double t, double s, const Vector& p,
                           int resolution, double step) {
    if (t < s) throw TimeOrder("T0(t, s) needs t >= s");
    JumpSegment x0(sys.delay(), resolution, p);
    if (t == s) return C0Segment(x0);
    return C0Segment(solve_linear(sys, s, C0Segment(x0), t, step).segment_at(t));
}

Segment solve_perturbed_R(const LinearDelaySystem& sys, const Perturbation& pert, double t,
                          double s, const Segment& phi, double step) {
    if (t < s) throw TimeOrder("R(t, s) needs t >= s");
    if (t == s) return phi;
    return solve_perturbed(sys, pert, s, phi, t, step).segment_at(t);
}

} // namespace mulab
