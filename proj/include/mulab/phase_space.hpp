#pragma once

#include "mulab/growth_rate.hpp"

#include <Eigen/Dense>

#include <functional>

namespace mulab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A sampled element of C([-r, 0], R^n): m + 1 vectors on the uniform grid
/// omega_j = -r + j r/m. Column j of `values()` is the sample at omega_j.
class Segment {
public:
    Segment() = default;
    Segment(double delay, int dim, int resolution);
    Segment(double delay, Matrix values);

    static Segment constant(double delay, int resolution, const Vector& v);
    static Segment from_function(double delay, int dim, int resolution,
                                 const std::function<Vector(double)>& f);
    /// Rebuild a segment from its flattened samples (component index fastest).
    static Segment from_flat(double delay, int dim, const Vector& flat);

    double delay() const noexcept { return r_; }
    int dim() const noexcept { return static_cast<int>(values_.rows()); }
    int resolution() const noexcept { return static_cast<int>(values_.cols()) - 1; }
    double spacing() const noexcept { return r_ / resolution(); }
    double omega(int j) const noexcept { return -r_ + j * spacing(); }
    std::size_t flat_size() const noexcept { return static_cast<std::size_t>(values_.size()); }

    const Matrix& values() const noexcept { return values_; }
    Vector sample(int j) const { return values_.col(j); }
    Vector at_zero() const { return values_.col(resolution()); }
    Vector flat() const;

    bool same_shape(const Segment& o) const noexcept;

    Segment& operator+=(const Segment& o);
    Segment& operator-=(const Segment& o);
    Segment& operator*=(double c);

private:
    double r_ = 1.0;
    Matrix values_;
};

Segment operator+(Segment a, const Segment& b);
Segment operator-(Segment a, const Segment& b);
Segment operator*(double c, Segment a);

/// Max over samples of the max-norm of each sample.
double sup_norm(const Segment& s);

/// sup_norm(s) * mu(t)^{-sgn(t)(xi + eps)}.
double mu_norm(const Segment& s, double t, const GrowthRate& g, double xi, double eps);

/// The weight mu(t)^{-sgn(t)(xi + eps)} applied by mu_norm.
double mu_weight(double t, const GrowthRate& g, double xi, double eps);

/// Piecewise-linear value at omega in [-r, 0]. Throws OutOfDomain otherwise.
Vector interpolate(const Segment& s, double omega);

/// Left node index and weight of the right node for omega on the grid of
/// (delay, resolution); exact nodes give weight 0.
std::pair<int, double> interpolation_cell(double delay, int resolution, double omega);

/// X0 p: zero on [-r, 0) with value p at omega = 0.
class JumpSegment {
public:
    JumpSegment(double delay, int resolution, Vector jump);

    double delay() const noexcept { return r_; }
    int resolution() const noexcept { return m_; }
    int dim() const noexcept { return static_cast<int>(jump_.size()); }
    const Vector& jump() const noexcept { return jump_; }
    Segment base() const { return Segment(r_, dim(), m_); }

private:
    double r_;
    int m_;
    Vector jump_;
};

/// Element of C0: a continuous body plus a jump at omega = 0. The value at 0
/// is body(0) + jump, the left limit is body(0).
struct C0Segment {
    Segment body;
    Vector jump;

    C0Segment(Segment b, Vector j) : body(std::move(b)), jump(std::move(j)) {}
    C0Segment(const Segment& s) : body(s), jump(Vector::Zero(s.dim())) {}          // NOLINT
    C0Segment(const JumpSegment& x) : body(x.base()), jump(x.jump()) {}            // NOLINT

    double delay() const noexcept { return body.delay(); }
    int dim() const noexcept { return body.dim(); }
    int resolution() const noexcept { return body.resolution(); }
    Vector value_at_zero() const { return body.at_zero() + jump; }
};

double sup_norm(const C0Segment& s);

} // namespace mulab
