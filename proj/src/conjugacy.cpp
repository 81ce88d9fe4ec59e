#include "mulab/conjugacy.hpp"

#include "mulab/errors.hpp"
#include "mulab/parallel.hpp"
#include "mulab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <tuple>
#include <random>

namespace mulab {

namespace {

constexpr int kPanelNodes = 16;

bool is_multiple(double big, double small) {
    const double k = big / small;
    return std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, k) && std::round(k) >= 1.0;
}

void validate(const ConjugacyProblem& p) {
    const auto& gr = p.grid;
    const double r = p.model.delay();
    const double cell = r / p.model.resolution;
    if (!(gr.t_max > gr.t_min) || !(gr.t_step > 0.0))
        throw DegenerateGrid("conjugacy t grid is empty");
    if (!is_multiple(gr.t_max - gr.t_min, gr.t_step))
        throw DegenerateGrid("t_step must divide t_max - t_min");
    if (!is_multiple(gr.t_step, cell))
        throw StepMisaligned("t_step must be a multiple of the segment spacing");
    if (!is_multiple(r, gr.t_step)) throw StepMisaligned("the delay must be a multiple of t_step");
    if (p.model.unstable_dim > 0 && (gr.z_points < 3 || !(gr.z_max > gr.z_min)))
        throw DegenerateGrid("z axis needs at least 3 points on a nonempty interval");
    if (!(p.trunc.tail_tol > 0.0) || !(p.trunc.max_span > 0.0))
        throw InvalidArgument("truncation policy needs positive tail_tol and max_span");
}

// Nonzero vertices of the max-norm unit cube modulo sign.
std::vector<Vector> cube_vertices(int d) {
    std::vector<Vector> out;
    if (d == 0) return out;
    for (int code = 0; code < (1 << (d - 1)); ++code) {
        Vector v = Vector::Ones(d);
        for (int i = 1; i < d; ++i)
            if (code & (1 << (i - 1))) v(i) = -1.0;
        out.push_back(v);
    }
    return out;
}

// Left index and right weight of tau on the t grid, clamped to its ends.
struct TimeCell {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double w = 0.0;
    bool clamped = false;
};

TimeCell locate_time(const std::vector<double>& grid, double tau) {
    const std::size_t last = grid.size() - 1;
    if (tau <= grid.front()) return {0, 0, 0.0, tau < grid.front()};
    if (tau >= grid.back()) return {last, last, 0.0, tau > grid.back()};
    const double h = (grid.back() - grid.front()) / static_cast<double>(last);
    auto i = static_cast<std::size_t>((tau - grid.front()) / h);
    i = std::min(i, last - 1);
    return {i, i + 1, (tau - grid[i]) / (grid[i + 1] - grid[i]), false};
}

// Corners and weights of the multilinear cell holding z, clamped to the axis.
struct ZCell {
    std::vector<std::pair<Eigen::Index, double>> corners;
    bool clamped = false;
};

ZCell locate_z(const std::vector<double>& axis, const Vector& z) {
    ZCell cell;
    cell.corners.emplace_back(0, 1.0);
    Eigen::Index stride = 1;
    const auto count = static_cast<Eigen::Index>(axis.size());
    for (Eigen::Index d = 0; d < z.size(); ++d) {
        double x = z(d);
        if (x < axis.front() || x > axis.back()) cell.clamped = true;
        x = std::clamp(x, axis.front(), axis.back());
        const double h = (axis.back() - axis.front()) / static_cast<double>(count - 1);
        auto k = static_cast<Eigen::Index>((x - axis.front()) / h);
        k = std::min(k, count - 2);
        const double w = std::clamp((x - axis[static_cast<std::size_t>(k)]) / h, 0.0, 1.0);
        std::vector<std::pair<Eigen::Index, double>> next;
        for (const auto& [idx, wt] : cell.corners) {
            next.emplace_back(idx + k * stride, wt * (1.0 - w));
            if (w > 0.0) next.emplace_back(idx + (k + 1) * stride, wt * w);
        }
        cell.corners = std::move(next);
        stride *= count;
    }
    return cell;
}

// Panels [anchor + q w, anchor + (q + 1) w], q in [q_lo, q_hi), with
// kPanelNodes nodes each in the variable u = mu(tau).
struct PanelRow {
    double anchor = 0.0;
    double width = 1.0;
    long q_lo = 0;
    long q_hi = 0;
    std::vector<QuadratureNode> nodes;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t first_node(long q) const {
        return static_cast<std::size_t>(q - q_lo) * kPanelNodes;
    }
};

PanelRow make_row(const GrowthRate& g, double anchor, double width, long q_lo, long q_hi) {
    PanelRow row{anchor, width, q_lo, q_hi, {}};
    row.nodes.reserve(static_cast<std::size_t>(std::max(0L, q_hi - q_lo)) * kPanelNodes);
    for (long q = q_lo; q < q_hi; ++q) {
        const auto panel = mu_panel(g, anchor + static_cast<double>(q) * width,
                                    anchor + static_cast<double>(q + 1) * width);
        row.nodes.insert(row.nodes.end(), panel.begin(), panel.end());
    }
    return row;
}

// Quantities at one node that do not depend on eta.
struct NodeInfo {
    Matrix C;     // d_u x n, Q0(tau) p = realize(tau, C p)
    Matrix B;     // flat x d_u, basis at tau
    Matrix BPhi;  // flat x d_u, realize(tau, Phi(tau) z) = BPhi z
};

std::vector<NodeInfo> node_info(const DichotomyModel& m, const PanelRow& row) {
    std::vector<NodeInfo> out(row.node_count());
    parallel_for(out.size(), [&](std::size_t k) {
        const double tau = row.nodes[k].tau;
        out[k].C = q0_coordinates(m, tau);
        out[k].B = m.basis_matrix(tau);
        out[k].BPhi = out[k].B * transport(m, tau);
    });
    return out;
}

// x_t at the sorted times for the linear flow from C0 data at tau. After each
// full delay the state is replaced by its stable projection: exact for data
// in the range of P0, and it keeps roundoff from growing along U.
std::vector<Segment> projected_orbit(const DichotomyModel& m, double tau, C0Segment data,
                                     const std::vector<double>& times) {
    std::vector<Segment> out;
    out.reserve(times.size());
    double start = tau;
    std::size_t k = 0;
    while (k < times.size()) {
        const double end = std::min(start + m.delay(), times.back());
        const auto traj = solve_linear(m.sys, start, data, end, m.step);
        while (k < times.size() && times[k] <= end + 1e-12)
            out.push_back(traj.segment_at(std::min(times[k++], end)));
        if (k == times.size()) break;
        data = C0Segment(m.P(end, traj.segment_at(end)));
        start = end;
    }
    return out;
}

} // namespace

Eigen::Index EtaField::z_count() const {
    Eigen::Index c = 1;
    for (int d = 0; d < unstable_dim; ++d) c *= static_cast<Eigen::Index>(z_axis.size());
    return c;
}

Vector EtaField::z_point(Eigen::Index j) const {
    Vector z(unstable_dim);
    const auto count = static_cast<Eigen::Index>(z_axis.size());
    for (int d = 0; d < unstable_dim; ++d, j /= count) z(d) = z_axis[static_cast<std::size_t>(j % count)];
    return z;
}

std::vector<Vector> EtaField::b_grid(const DichotomyModel& m, std::size_t i) const {
    const Matrix Phi = transport(m, t_grid[i]);
    std::vector<Vector> out;
    for (Eigen::Index j = 0; j < z_count(); ++j) out.push_back(Phi * z_point(j));
    return out;
}

void EtaField::save(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + file.string());
    auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    auto put_block = [&](const double* p, std::size_t count) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    };
    os.write("MULABETA", 8);
    put(std::int32_t{1});
    put(std::int32_t{unstable_dim});
    put(std::int32_t{dim});
    put(std::int32_t{resolution});
    put(delay);
    put(std::uint64_t{t_grid.size()});
    put(std::uint64_t{z_axis.size()});
    put_block(t_grid.data(), t_grid.size());
    put_block(z_axis.data(), z_axis.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        put_block(values[i].data(), static_cast<std::size_t>(values[i].size()));
        put_block(derivative[i].data(), static_cast<std::size_t>(derivative[i].size()));
    }
    put(norms);
    if (!os) throw InvalidArgument("failed writing " + file.string());
}

EtaField EtaField::load(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InvalidArgument("cannot read " + file.string());
    auto get = [&](auto& v) { is.read(reinterpret_cast<char*>(&v), sizeof(v)); };
    auto get_block = [&](double* p, std::size_t count) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    };
    char magic[8];
    is.read(magic, 8);
    std::int32_t version = 0, du = 0, n = 0, m = 0;
    get(version);
    if (!is || std::memcmp(magic, "MULABETA", 8) != 0 || version != 1)
        throw InvalidArgument(file.string() + " is not an eta field");
    get(du);
    get(n);
    get(m);
    EtaField eta;
    eta.unstable_dim = du;
    eta.dim = n;
    eta.resolution = m;
    get(eta.delay);
    std::uint64_t nt = 0, nz = 0;
    get(nt);
    get(nz);
    if (!is || nt > (1u << 24) || nz > (1u << 24)) throw InvalidArgument("corrupt eta header");
    eta.t_grid.resize(nt);
    eta.z_axis.resize(nz);
    get_block(eta.t_grid.data(), nt);
    get_block(eta.z_axis.data(), nz);
    const Eigen::Index cols = eta.z_count();
    for (std::size_t i = 0; i < nt; ++i) {
        eta.values.emplace_back(eta.flat_size(), cols);
        eta.derivative.emplace_back(eta.flat_size(), cols * du);
        get_block(eta.values.back().data(), static_cast<std::size_t>(eta.values.back().size()));
        get_block(eta.derivative.back().data(),
                  static_cast<std::size_t>(eta.derivative.back().size()));
    }
    get(eta.norms);
    if (!is) throw InvalidArgument("truncated eta field " + file.string());
    return eta;
}

Matrix transport(const DichotomyModel& m, double t) {
    if (m.unstable_dim == 0) return Matrix(0, 0);
    return m.unstable_backward(t, 0.0);
}

EtaField zero_field(const ConjugacyProblem& p) {
    validate(p);
    const auto& gr = p.grid;
    EtaField eta;
    eta.unstable_dim = p.model.unstable_dim;
    eta.dim = p.model.dim();
    eta.resolution = p.model.resolution;
    eta.delay = p.model.delay();
    const auto nt = static_cast<std::size_t>(std::lround((gr.t_max - gr.t_min) / gr.t_step)) + 1;
    eta.t_grid = uniform_grid(gr.t_min, gr.t_max, nt);
    if (eta.unstable_dim > 0)
        eta.z_axis = uniform_grid(gr.z_min, gr.z_max, static_cast<std::size_t>(gr.z_points));
    else
        eta.z_axis = {0.0};
    const Eigen::Index cols = eta.z_count();
    for (std::size_t i = 0; i < nt; ++i) {
        eta.values.push_back(Matrix::Zero(eta.flat_size(), cols));
        eta.derivative.push_back(Matrix::Zero(eta.flat_size(), cols * eta.unstable_dim));
    }
    return eta;
}

namespace {

struct Interpolated {
    Vector value;
    Matrix dz;
    bool clamped = false;
};

Interpolated interpolate_eta(const EtaField& eta, double tau, const Vector& z) {
    const auto tc = locate_time(eta.t_grid, tau);
    const auto zc = locate_z(eta.z_axis, z);
    const int du = eta.unstable_dim;
    Interpolated out{Vector::Zero(eta.flat_size()), Matrix::Zero(eta.flat_size(), du),
                     tc.clamped || zc.clamped};
    for (const auto& [i, wt] : {std::pair{tc.i0, 1.0 - tc.w}, std::pair{tc.i1, tc.w}}) {
        if (wt == 0.0) continue;
        for (const auto& [j, wz] : zc.corners) {
            out.value += (wt * wz) * eta.values[i].col(j);
            if (du > 0) out.dz += (wt * wz) * eta.derivative[i].middleCols(j * du, du);
        }
    }
    return out;
}

Vector to_z(const DichotomyModel& m, double t, const Vector& b) {
    if (b.size() != m.unstable_dim) throw InvalidArgument("b has the wrong dimension");
    if (m.unstable_dim == 0) return Vector(0);
    return transport(m, t).partialPivLu().solve(b);
}

} // namespace

EtaSample eta_at(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b) {
    auto in = interpolate_eta(eta, t, to_z(p.model, t, b));
    return {Segment::from_flat(eta.delay, eta.dim, in.value), std::move(in.dz), in.clamped};
}

Matrix eta_derivative_b(const ConjugacyProblem& p, const EtaField& eta, double t,
                        const Vector& b) {
    const auto in = interpolate_eta(eta, t, to_z(p.model, t, b));
    if (p.model.unstable_dim == 0) return in.dz;
    return in.dz * transport(p.model, t).inverse();
}

namespace {

struct FieldNorm {
    double sup = 0.0;
    double sup_mu = 0.0;
    double derivative_mu = 0.0;
};

// Norms of (values, derivative) given per time; the derivative is converted
// from z to b coordinates and measured as an operator on (U(t), sup).
FieldNorm measure(const ConjugacyProblem& p, const EtaField& shape,
                  const std::vector<Matrix>& values, const std::vector<Matrix>& derivative) {
    const auto& m = p.model;
    const int du = shape.unstable_dim;
    const auto vertices = cube_vertices(du);
    FieldNorm out;
    for (std::size_t i = 0; i < shape.t_grid.size(); ++i) {
        const double t = shape.t_grid[i];
        const double w = mu_weight(t, m.growth, p.params.xi, p.params.eps);
        const double s = values[i].size() ? values[i].cwiseAbs().maxCoeff() : 0.0;
        out.sup = std::max(out.sup, s);
        out.sup_mu = std::max(out.sup_mu, w * s);
        if (du == 0) continue;
        const Matrix Ainv = transport(m, t).inverse();
        const Matrix B = m.basis_matrix(t);
        for (const auto& c : vertices) {
            const double denom = (B * c).cwiseAbs().maxCoeff();
            const Vector v = Ainv * c;
            for (Eigen::Index j = 0; j < shape.z_count(); ++j) {
                const double num = (derivative[i].middleCols(j * du, du) * v).cwiseAbs().maxCoeff();
                out.derivative_mu = std::max(out.derivative_mu, w * num / denom);
            }
        }
    }
    return out;
}

} // namespace

void update_norms(const ConjugacyProblem& p, EtaField& eta) {
    const auto n = measure(p, eta, eta.values, eta.derivative);
    eta.norms = {n.sup, n.sup_mu, n.derivative_mu, n.sup_mu + n.derivative_mu};
}

double distance_one_mu(const ConjugacyProblem& p, const EtaField& a, const EtaField& b) {
    if (a.t_grid.size() != b.t_grid.size() || a.z_count() != b.z_count())
        throw InvalidArgument("fields live on different grids");
    std::vector<Matrix> dv, dd;
    for (std::size_t i = 0; i < a.t_grid.size(); ++i) {
        dv.push_back(a.values[i] - b.values[i]);
        dd.push_back(a.derivative[i] - b.derivative[i]);
    }
    const auto n = measure(p, a, dv, dd);
    return n.sup_mu + n.derivative_mu;
}

std::pair<double, double> truncation_window(const ConjugacyProblem& p, double t) {
    const auto& g = p.model.growth;
    const auto& P = p.params;
    const double r = p.model.delay();
    const double scale = P.D * P.delta;
    const double tol = p.trunc.tail_tol;
    const double span = p.trunc.max_span;
    double lo = t - r, hi = t;
    if (scale <= 0.0) return {lo, hi};

    // Stable tail: (D delta/alpha) (mu(lo)/mu(t))^alpha <= tol.
    const double lo_factor = std::pow(P.alpha * tol / scale, 1.0 / P.alpha);
    if (lo_factor < 1.0) {
        const double target = g(t) * lo_factor;
        if (!(target > 0.0) || g(t - span) > target)
            throw TruncationUnreachable("stable tail of " + g.label() + " at t = " +
                                        std::to_string(t) + " needs more than max_span");
        lo = std::min(lo, g.inverse(target));
    }
    // Unstable tail: (D delta/beta) (mu(t)/mu(hi))^beta <= tol.
    if (p.model.unstable_dim > 0) {
        const double hi_factor = std::pow(scale / (P.beta * tol), 1.0 / P.beta);
        if (hi_factor > 1.0) {
            const double target = g(t) * hi_factor;
            if (!std::isfinite(target) || g(t + span) < target)
                throw TruncationUnreachable("unstable tail of " + g.label() + " at t = " +
                                            std::to_string(t) + " needs more than max_span");
            hi = g.inverse(target);
        }
    }
    return {lo, hi};
}

double F_norm_bound(const ParamSet& p) {
    return p.D * p.delta * (p.alpha + p.beta) / (p.alpha * p.beta);
}

double dF_norm_bound(const ParamSet& p) {
    const double gap = p.alpha + p.beta - 2.0 * p.xi;
    const double sq = (p.xi - p.eps) * (p.xi - p.eps) - (p.a - p.beta) * (p.a - p.beta);
    return p.D * p.lambda * (p.D * sq + 4.0 * p.xi * p.k_growth * gap) / (gap * sq) * (1.0 + p.q);
}

// Kernels for a set of times. Each time t uses
//   fine panels of width r/m covering [t - r, t], aligned with t + omega_j,
//   where the stable kernel has a kink at every sample;
//   coarse panels of width t_step covering [lo(t), t - r] and [t, hi(t)].
struct SweepOperator::Impl {
    struct Slice {
        double t = 0.0;
        long fine_q0 = 0;
        long stable_q0 = 0, stable_q1 = 0;
        long unstable_q0 = 0, unstable_q1 = 0;
        Matrix Kf;  // flat x n (fine nodes), weights folded in
        Matrix Ks;  // flat x n (coarse stable nodes)
        Matrix Uu;  // d_u x n (coarse unstable nodes)
        Matrix B;   // flat x d_u
    };

    const ConjugacyProblem* prob = nullptr;
    PanelRow fine, coarse;
    std::vector<NodeInfo> fine_info, coarse_info;
    std::vector<Slice> slices;
    double clamp_rate = 0.0;

    Impl(const ConjugacyProblem& p, const std::vector<double>& times, double fine_anchor,
         double coarse_anchor, double coarse_width)
        : prob(&p) {
        const auto& m = p.model;
        const double r = m.delay();
        const int mres = m.resolution;
        const double fw = r / mres;
        const int n = m.dim();
        const int du = m.unstable_dim;
        const auto rc = static_cast<long>(std::lround(r / coarse_width));

        for (double t : times) {
            Slice s;
            s.t = t;
            s.fine_q0 = std::lround((t - r - fine_anchor) / fw);
            const auto [lo, hi] = truncation_window(p, t);
            const long at = std::lround((t - coarse_anchor) / coarse_width);
            s.stable_q1 = at - rc;
            s.stable_q0 = std::min(s.stable_q1,
                                   static_cast<long>(std::floor((lo - coarse_anchor) / coarse_width)));
            s.unstable_q0 = at;
            s.unstable_q1 =
                du > 0 ? std::max(at, static_cast<long>(std::ceil((hi - coarse_anchor) / coarse_width - 1e-9)))
                       : at;
            slices.push_back(std::move(s));
        }
        long f_lo = slices.front().fine_q0, f_hi = f_lo + mres;
        long c_lo = slices.front().stable_q0, c_hi = slices.front().unstable_q1;
        for (const auto& s : slices) {
            f_lo = std::min(f_lo, s.fine_q0);
            f_hi = std::max(f_hi, s.fine_q0 + mres);
            c_lo = std::min(c_lo, s.stable_q0);
            c_hi = std::max({c_hi, s.unstable_q1, s.stable_q1});
        }
        fine = make_row(m.growth, fine_anchor, fw, f_lo, f_hi);
        coarse = make_row(m.growth, coarse_anchor, coarse_width, c_lo, c_hi);
        fine_info = node_info(m, fine);
        coarse_info = node_info(m, coarse);

        const Eigen::Index flat = static_cast<Eigen::Index>(n) * (mres + 1);
        for (auto& s : slices) {
            s.Kf = Matrix::Zero(flat, n * kPanelNodes * mres);
            s.Ks = Matrix::Zero(flat, n * kPanelNodes * (s.stable_q1 - s.stable_q0));
            s.Uu = Matrix::Zero(du, n * kPanelNodes * (s.unstable_q1 - s.unstable_q0));
            s.B = m.basis_matrix(s.t);
        }

        fill_stable(fine, fine_info,
                    [mres](const Slice& s) { return std::pair{s.fine_q0, s.fine_q0 + mres}; }, true);
        fill_stable(coarse, coarse_info,
                    [](const Slice& s) { return std::pair{s.stable_q0, s.stable_q1}; }, false);

        if (du > 0) {
            parallel_for(slices.size(), [&](std::size_t i) {
                auto& s = slices[i];
                for (long q = s.unstable_q0; q < s.unstable_q1; ++q) {
                    const std::size_t first = coarse.first_node(q);
                    for (int k = 0; k < kPanelNodes; ++k) {
                        const auto& node = coarse.nodes[first + static_cast<std::size_t>(k)];
                        const auto col = static_cast<Eigen::Index>(
                            ((q - s.unstable_q0) * kPanelNodes + k) * n);
                        s.Uu.middleCols(col, n) = node.weight *
                                                  m.unstable_backward(s.t, node.tau) *
                                                  coarse_info[first + static_cast<std::size_t>(k)].C;
                    }
                }
            });
        }

        const auto& gr = p.grid;
        std::size_t outside = 0;
        for (const auto* row : {&fine, &coarse})
            for (const auto& node : row->nodes)
                if (node.tau < gr.t_min || node.tau > gr.t_max) ++outside;
        clamp_rate = static_cast<double>(outside) /
                     static_cast<double>(fine.node_count() + coarse.node_count());
    }

    // Stable kernels T0(t, tau) P0(tau) for every node of `row` and every slice
    // whose range [q0, q1) holds the node's panel.
    template <class Range>
    void fill_stable(const PanelRow& row, const std::vector<NodeInfo>& info, Range range,
                     bool is_fine) {
        const auto& m = prob->model;
        const int n = m.dim();
        const int mres = m.resolution;
        parallel_for(row.node_count(), [&](std::size_t k) {
            const long q = row.q_lo + static_cast<long>(k / kPanelNodes);
            const int sub = static_cast<int>(k % kPanelNodes);
            std::vector<double> times;
            std::vector<std::size_t> users;
            for (std::size_t i = 0; i < slices.size(); ++i) {
                const auto [q0, q1] = range(slices[i]);
                if (q >= q0 && q < q1) {
                    times.push_back(slices[i].t);
                    users.push_back(i);
                }
            }
            if (times.empty()) return;
            const auto& node = row.nodes[k];
            for (int c = 0; c < n; ++c) {
                const Vector e = Vector::Unit(n, c);
                const Vector coords = info[k].C * e;
                Segment body = m.unstable_dim > 0
                                   ? Segment::from_flat(m.delay(), n, -(info[k].B * coords))
                                   : Segment(m.delay(), n, mres);
                const auto orbit = projected_orbit(m, node.tau, C0Segment(std::move(body), e), times);
                for (std::size_t u = 0; u < users.size(); ++u) {
                    auto& s = slices[users[u]];
                    const long q0 = range(s).first;
                    const auto col =
                        static_cast<Eigen::Index>(((q - q0) * kPanelNodes + sub) * n + c);
                    (is_fine ? s.Kf : s.Ks).col(col) = node.weight * orbit[u].flat();
                }
            }
        });
    }

    // Sources g(tau, x^ + eta) and their z-gradients at every node of a row,
    // one column per z point (z-gradient: d_u columns per z point).
    struct Sources {
        Matrix G;
        Matrix H;
    };

    template <class Lookup>
    Sources sources(const PanelRow& row, const std::vector<NodeInfo>& info, Eigen::Index nz,
                    Lookup&& lookup) const {
        const auto& m = prob->model;
        const auto& pert = prob->pert;
        const int n = m.dim();
        const int du = m.unstable_dim;
        const auto rows = static_cast<Eigen::Index>(row.node_count()) * n;
        Sources out{Matrix::Zero(rows, nz), Matrix::Zero(rows, nz * du)};
        if (pert.identically_zero) return out;
        parallel_for(row.node_count(), [&](std::size_t k) {
            const double tau = row.nodes[k].tau;
            const auto [vals, grads, zs] = lookup(tau);
            const auto r0 = static_cast<Eigen::Index>(k) * n;
            for (Eigen::Index j = 0; j < nz; ++j) {
                const Vector arg = info[k].BPhi * zs.col(j) + vals.col(j);
                const Segment seg = Segment::from_flat(m.delay(), n, arg);
                out.G.block(r0, j, n, 1) = pert.g(tau, seg);
                if (du > 0)
                    out.H.block(r0, j * du, n, du) =
                        pert.d2g(tau, seg) * (info[k].BPhi + grads.middleCols(j * du, du));
            }
        });
        return out;
    }

    // F(eta)(t) and dF(eta)/dz (t) for one slice from row sources.
    std::pair<Matrix, Matrix> combine(const Slice& s, const Sources& f, const Sources& c) const {
        const int n = prob->model.dim();
        const int mres = prob->model.resolution;
        auto block = [n](const Matrix& M, const PanelRow& row, long q0, long q1) {
            return M.middleRows(static_cast<Eigen::Index>(row.first_node(q0)) * n,
                                (q1 - q0) * kPanelNodes * n);
        };
        Matrix val = s.Kf * block(f.G, fine, s.fine_q0, s.fine_q0 + mres);
        Matrix der = s.Kf * block(f.H, fine, s.fine_q0, s.fine_q0 + mres);
        if (s.stable_q1 > s.stable_q0) {
            val.noalias() += s.Ks * block(c.G, coarse, s.stable_q0, s.stable_q1);
            der.noalias() += s.Ks * block(c.H, coarse, s.stable_q0, s.stable_q1);
        }
        if (s.unstable_q1 > s.unstable_q0) {
            val.noalias() -= s.B * (s.Uu * block(c.G, coarse, s.unstable_q0, s.unstable_q1));
            der.noalias() -= s.B * (s.Uu * block(c.H, coarse, s.unstable_q0, s.unstable_q1));
        }
        return {std::move(val), std::move(der)};
    }
};

SweepOperator::SweepOperator(const ConjugacyProblem& p) {
    validate(p);
    const auto nt = static_cast<std::size_t>(std::lround((p.grid.t_max - p.grid.t_min) / p.grid.t_step)) + 1;
    const auto times = uniform_grid(p.grid.t_min, p.grid.t_max, nt);
    impl_ = std::make_unique<Impl>(p, times, p.grid.t_min - p.model.delay(), p.grid.t_min,
                                   p.grid.t_step);
}

SweepOperator::~SweepOperator() = default;
SweepOperator::SweepOperator(SweepOperator&&) noexcept = default;
SweepOperator& SweepOperator::operator=(SweepOperator&&) noexcept = default;

double SweepOperator::t_clamp_rate() const { return impl_->clamp_rate; }

EtaField SweepOperator::apply(const EtaField& eta) const {
    const auto& p = *impl_->prob;
    const int du = eta.unstable_dim;
    const Eigen::Index nz = eta.z_count();
    Matrix Z(du, nz);
    for (Eigen::Index j = 0; j < nz; ++j) Z.col(j) = eta.z_point(j);

    // On grid z points only the t interpolation is needed.
    auto lookup = [&](double tau) {
        const auto tc = locate_time(eta.t_grid, tau);
        Matrix v = (1.0 - tc.w) * eta.values[tc.i0] + tc.w * eta.values[tc.i1];
        Matrix d = (1.0 - tc.w) * eta.derivative[tc.i0] + tc.w * eta.derivative[tc.i1];
        return std::tuple{std::move(v), std::move(d), Z};
    };
    const auto f = impl_->sources(impl_->fine, impl_->fine_info, nz, lookup);
    const auto c = impl_->sources(impl_->coarse, impl_->coarse_info, nz, lookup);

    EtaField next = eta;
    parallel_for(impl_->slices.size(), [&](std::size_t i) {
        auto [val, der] = impl_->combine(impl_->slices[i], f, c);
        next.values[i] = std::move(val);
        next.derivative[i] = std::move(der);
    });
    update_norms(p, next);
    return next;
}

namespace {

// Single-time evaluation of F and its derivative at one b.
std::pair<Vector, Matrix> point_apply(const ConjugacyProblem& p, const EtaField& eta, double t,
                                      const Vector& b) {
    validate(p);
    const auto& m = p.model;
    const Vector z = to_z(m, t, b);
    SweepOperator::Impl op(p, {t}, t - m.delay(), t, p.grid.t_step);
    auto lookup = [&](double tau) {
        auto in = interpolate_eta(eta, tau, z);
        return std::tuple{Matrix(in.value), std::move(in.dz), Matrix(z)};
    };
    const auto f = op.sources(op.fine, op.fine_info, 1, lookup);
    const auto c = op.sources(op.coarse, op.coarse_info, 1, lookup);
    auto [val, der] = op.combine(op.slices.front(), f, c);
    if (m.unstable_dim > 0) der = der * transport(m, t).inverse();
    return {val.col(0), der};
}

} // namespace

Segment F_apply(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b) {
    return Segment::from_flat(p.model.delay(), p.model.dim(), point_apply(p, eta, t, b).first);
}

Matrix dF_db_apply(const ConjugacyProblem& p, const EtaField& eta, double t, const Vector& b) {
    return point_apply(p, eta, t, b).second;
}

ConjugacyResult picard_solve(const ConjugacyProblem& p, const SolverOptions& opts) {
    if (opts.max_sweeps < 1) throw InvalidArgument("max_sweeps must be positive");
    ConjugacyResult res;
    res.contraction_rate_theoretical = p.params.q / (1.0 + p.params.q);
    res.norm_bound = F_norm_bound(p.params) + p.trunc.tail_tol;
    res.eta = zero_field(p);
    update_norms(p, res.eta);

    if (p.pert.identically_zero) {
        // F vanishes identically; the windows are still checked for reachability.
        for (double t : res.eta.t_grid) truncation_window(p, t);
        res.sweeps.push_back({1, 0.0, 0.0});
        res.converged = true;
        return res;
    }

    const SweepOperator op(p);
    res.t_clamp_rate = op.t_clamp_rate();
    double previous = 0.0;
    int rising = 0;
    for (int k = 1; k <= opts.max_sweeps; ++k) {
        EtaField next = op.apply(res.eta);
        const double delta = distance_one_mu(p, next, res.eta);
        const double ratio = k > 1 && previous > 0.0 ? delta / previous : 0.0;
        res.sweeps.push_back({k, delta, ratio});
        res.contraction_rate_measured = std::max(res.contraction_rate_measured, ratio);
        res.eta = std::move(next);
        rising = k > 1 && ratio >= 1.0 ? rising + 1 : 0;
        if (rising >= 2)
            throw NotContracting("sweep " + std::to_string(k) + " ratio " + std::to_string(ratio) +
                                 " after a previous ratio >= 1");
        if (delta <= opts.tol) {
            res.converged = true;
            break;
        }
        previous = delta;
    }
    res.derivative_margin = 1.0 - res.eta.norms.derivative_mu;
    return res;
}

ResidualValue conjugacy_residual(const ConjugacyProblem& p, const EtaField& eta, double t,
                                 double s, const Vector& b) {
    if (t < s) throw TimeOrder("conjugacy residual needs t >= s");
    const auto& m = p.model;
    const Segment bhat = m.realize(s, b);
    const Vector bt = m.unstable_dim > 0 ? Vector(m.unstable_backward(t, s) * b) : Vector(0);
    const Segment lhs = solution_op_T(m.sys, t, s, bhat, m.step) + eta_at(p, eta, t, bt).value;
    const Segment rhs =
        solve_perturbed_R(m.sys, p.pert, t, s, bhat + eta_at(p, eta, s, b).value, m.step);
    const double raw = sup_norm(lhs - rhs);
    return {raw, raw * mu_weight(t, m.growth, p.params.xi, p.params.eps)};
}

void sample_residuals(const ConjugacyProblem& p, ConjugacyResult& result, int samples,
                      double max_gap, std::uint64_t seed) {
    const auto& gr = p.grid;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pick_s(gr.t_min, gr.t_max), pick_gap(0.0, max_gap),
        pick_z(gr.z_min, gr.z_max);
    const int du = p.model.unstable_dim;
    std::vector<ResidualSample> batch(static_cast<std::size_t>(samples));
    for (auto& smp : batch) {
        smp.s = pick_s(rng);
        smp.t = std::min(smp.s + pick_gap(rng), gr.t_max);
        Vector z(du);
        for (int d = 0; d < du; ++d) z(d) = pick_z(rng);
        smp.b = du > 0 ? Vector(transport(p.model, smp.s) * z) : Vector(0);
    }
    parallel_for(batch.size(), [&](std::size_t i) {
        auto& smp = batch[i];
        const auto v = conjugacy_residual(p, result.eta, smp.t, smp.s, smp.b);
        smp.raw = v.raw;
        smp.weighted = v.weighted;
    });
    result.residual_grid.insert(result.residual_grid.end(), batch.begin(), batch.end());
}

InvertibilityReport invertibility_check(const ConjugacyProblem& p, const EtaField& eta) {
    InvertibilityReport rep;
    rep.derivative_norm = eta.norms.derivative_mu;
    rep.margin = 1.0 - rep.derivative_norm;
    rep.margin_ok = rep.margin > 0.0;
    const auto& m = p.model;
    if (eta.unstable_dim != 1) return rep;
    rep.monotone_checked = true;
    rep.min_increment = std::numeric_limits<double>::infinity();
    const double dz = eta.z_axis[1] - eta.z_axis[0];
    for (std::size_t i = 0; i < eta.t_grid.size(); ++i) {
        const double t = eta.t_grid[i];
        const double phi = transport(m, t)(0, 0);
        double prev = 0.0;
        for (Eigen::Index j = 0; j < eta.z_count(); ++j) {
            const Segment e = Segment::from_flat(eta.delay, eta.dim, eta.values[i].col(j));
            const double c = phi * eta.z_axis[static_cast<std::size_t>(j)] +
                             m.unstable_coordinates(t, m.Q(t, e))(0);
            if (j > 0) {
                // Increment relative to that of the identity.
                const double inc = (c - prev) / (phi * dz);
                rep.min_increment = std::min(rep.min_increment, inc);
                if (!(c > prev)) rep.monotone = false;
            }
            prev = c;
        }
    }
    return rep;
}

double derivative_fd_error(const EtaField& eta) {
    const int du = eta.unstable_dim;
    if (du == 0) return 0.0;
    const auto count = static_cast<Eigen::Index>(eta.z_axis.size());
    const double h = eta.z_axis[1] - eta.z_axis[0];
    double worst = 0.0;
    for (std::size_t i = 0; i < eta.t_grid.size(); ++i) {
        const Matrix& V = eta.values[i];
        const Matrix& D = eta.derivative[i];
        const double scale = D.size() ? D.cwiseAbs().maxCoeff() : 0.0;
        double err = 0.0;
        for (Eigen::Index j = 0; j < eta.z_count(); ++j) {
            Eigen::Index stride = 1, rest = j;
            for (int d = 0; d < du; ++d, stride *= count, rest /= count) {
                const Eigen::Index k = rest % count;
                if (k == 0 || k == count - 1) continue;
                const Vector fd = (V.col(j + stride) - V.col(j - stride)) / (2.0 * h);
                err = std::max(err, (fd - D.col(j * du + d)).cwiseAbs().maxCoeff());
            }
        }
        if (scale > 0.0) worst = std::max(worst, err / scale);
        else if (err > 0.0) worst = std::numeric_limits<double>::infinity();
    }
    return worst;
}

} // namespace mulab
