#pragma once

#include "mulab/dde.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mulab {

/// Reads weight * phi_component(-lag).
struct PointTap {
    int component = 0;
    double lag = 0.0;
    double weight = 1.0;
};

/// g(t, phi) = E(t) c(t) v h(rho(t) l(phi)) with h(x) = x^2/(1 + x^2),
/// E(t) = mu'(t) mu(t)^{-sgn(t)(gamma + eps) - 1}, rho(t) = mu(t)^{-sgn(t)(xi + eps)},
/// c(t) = min{delta, (lambda/2) mu(t)^{-sgn(t)(xi - eps)}}, |v|_max <= 1 and
/// l a sum of point taps with total weight <= 1.
struct SaturationSpec {
    Vector direction;
    std::vector<PointTap> taps;
};

/// mu'(t) mu(t)^{-sgn(t)(gamma + eps) - 1}.
double envelope_E(const GrowthRate& g, double gamma, double eps, double t);

Perturbation saturation_perturbation(const GrowthRate& g, double delay, int resolution,
                                     const EnvelopeParams& params, const SaturationSpec& spec);

/// Worst measured ratio of one Lipschitz-type envelope.
struct EnvelopeCheck {
    std::string name;
    double worst_ratio = 0.0;
    bool pass = true;
};

/// The Lipschitz envelope with the sup norm, its weighted refinement with ||.||_mu, and the
/// derivative envelope. `binding` names whichever of the first two comes
/// closer to its limit.
struct EnvelopeReport {
    EnvelopeCheck sup_norm;
    EnvelopeCheck mu_norm;
    EnvelopeCheck derivative;
    std::string binding;
    bool zero_at_origin = true;

    bool pass() const { return sup_norm.pass && mu_norm.pass && derivative.pass && zero_at_origin; }
};

EnvelopeReport check_envelopes(const Perturbation& pert, const GrowthRate& g, double delay,
                               int dim, int resolution, std::span<const double> times,
                               int pairs_per_time, std::uint64_t seed);

} // namespace mulab
