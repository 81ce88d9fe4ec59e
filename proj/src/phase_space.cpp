#include "mulab/phase_space.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mulab {

Segment::Segment(double delay, int dim, int resolution)
    : r_(delay), values_(Matrix::Zero(dim, resolution + 1)) {
    if (!(delay > 0.0)) throw NonPositiveDelay("segment delay must be positive");
    if (dim < 1 || resolution < 1) throw InvalidArgument("segment needs n >= 1 and m >= 1");
}

Segment::Segment(double delay, Matrix values) : r_(delay), values_(std::move(values)) {
    if (!(delay > 0.0)) throw NonPositiveDelay("segment delay must be positive");
    if (values_.rows() < 1 || values_.cols() < 2)
        throw InvalidArgument("segment needs n >= 1 and m + 1 >= 2 samples");
}

Segment Segment::constant(double delay, int resolution, const Vector& v) {
    Segment s(delay, static_cast<int>(v.size()), resolution);
    s.values_.colwise() = v;
    return s;
}

Segment Segment::from_function(double delay, int dim, int resolution,
                               const std::function<Vector(double)>& f) {
    Segment s(delay, dim, resolution);
    for (int j = 0; j <= resolution; ++j) s.values_.col(j) = f(s.omega(j));
    return s;
}

Segment Segment::from_flat(double delay, int dim, const Vector& flat) {
    if (flat.size() % dim != 0) throw InvalidArgument("flat segment size is not a multiple of n");
    Matrix v = Eigen::Map<const Matrix>(flat.data(), dim, flat.size() / dim);
    return Segment(delay, std::move(v));
}

Vector Segment::flat() const { return Eigen::Map<const Vector>(values_.data(), values_.size()); }

bool Segment::same_shape(const Segment& o) const noexcept {
    return values_.rows() == o.values_.rows() && values_.cols() == o.values_.cols() &&
           std::abs(r_ - o.r_) <= 1e-12 * r_;
}

Segment& Segment::operator+=(const Segment& o) {
    if (!same_shape(o)) throw InvalidArgument("segment shapes differ");
    values_ += o.values_;
    return *this;
}

Segment& Segment::operator-=(const Segment& o) {
    if (!same_shape(o)) throw InvalidArgument("segment shapes differ");
    values_ -= o.values_;
    return *this;
}

Segment& Segment::operator*=(double c) {
    values_ *= c;
    return *this;
}

Segment operator+(Segment a, const Segment& b) { return a += b; }
Segment operator-(Segment a, const Segment& b) { return a -= b; }
Segment operator*(double c, Segment a) { return a *= c; }

double sup_norm(const Segment& s) { return s.values().cwiseAbs().maxCoeff(); }

double mu_weight(double t, const GrowthRate& g, double xi, double eps) {
    return g.signed_power(t, -(xi + eps));
}

double mu_norm(const Segment& s, double t, const GrowthRate& g, double xi, double eps) {
    return sup_norm(s) * mu_weight(t, g, xi, eps);
}

std::pair<int, double> interpolation_cell(double delay, int resolution, double omega) {
    const double slack = 1e-12 * delay;
    if (omega < -delay - slack || omega > slack)
        throw OutOfDomain("omega = " + std::to_string(omega) + " outside [-r, 0]");
    const double x = (std::clamp(omega, -delay, 0.0) + delay) / delay * resolution;
    int j = static_cast<int>(std::floor(x));
    if (j >= resolution) return {resolution - 1, 1.0};
    if (j < 0) j = 0;
    return {j, x - j};
}

Vector interpolate(const Segment& s, double omega) {
    const auto [j, w] = interpolation_cell(s.delay(), s.resolution(), omega);
    if (w == 0.0) return s.values().col(j);
    return (1.0 - w) * s.values().col(j) + w * s.values().col(j + 1);
}

JumpSegment::JumpSegment(double delay, int resolution, Vector jump)
    : r_(delay), m_(resolution), jump_(std::move(jump)) {
    if (!(delay > 0.0)) throw NonPositiveDelay("segment delay must be positive");
    if (resolution < 1 || jump_.size() < 1) throw InvalidArgument("jump segment needs m, n >= 1");
}

double sup_norm(const C0Segment& s) {
    const double left = sup_norm(s.body);
    const double at0 = s.value_at_zero().cwiseAbs().maxCoeff();
    return std::max(left, at0);
}

} // namespace mulab
