#pragma once

#include "mulab/growth_rate.hpp"

#include <span>
#include <utility>
#include <vector>

namespace mulab {

struct QuadratureNode {
    double tau = 0.0;
    double weight = 0.0;
};

/// 16-point Gauss-Legendre nodes and weights on [-1, 1], ascending.
const std::vector<std::pair<double, double>>& gauss_legendre_16();

/// Nodes for the integral over [a, b] in tau after substituting u = mu(tau):
/// Gauss-Legendre on [mu(a), mu(b)] with weights carrying 1/mu'(tau).
std::vector<QuadratureNode> mu_panel(const GrowthRate& g, double a, double b);

/// Sum of weight * f(tau) over nodes.
template <class F>
auto integrate(std::span<const QuadratureNode> nodes, F&& f) {
    auto acc = f(nodes.front().tau) * nodes.front().weight;
    for (std::size_t i = 1; i < nodes.size(); ++i) acc += f(nodes[i].tau) * nodes[i].weight;
    return acc;
}

} // namespace mulab
