#include "pbcert/kl_inverse.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pbcert/constants.hpp"
#include "pbcert/error.hpp"

namespace pbcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_interior(const SimplexVector& u) {
    if (!u.interior()) {
        throw BoundaryRisk("kl-inverse needs every coordinate of u strictly positive");
    }
}

void require_same_dimension(const SimplexVector& u, const LossVector& l) {
    if (u.size() != l.size()) throw InvalidArgument("u and losses differ in dimension");
}

// phi expressed through the gap g = -mu - max(l) > 0. With T = -mu and
// t_j = T - l_j this is log1p(sum u_j l_j / t_j) + sum u_j log(t_j / T); the
// log T terms of the textbook form cancel analytically, which keeps the value
// accurate both for astronomically negative mu and for mu near -max(l).
double phi_of_gap(double gap, const SimplexVector& u, const LossVector& l) {
    const double top = l.max();
    const double big_t = gap + top;
    double tilt = 0.0;
    double log_ratio = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double t = gap + (top - l[j]);
        tilt += u[j] * l[j] / t;
        const double x = l[j] / big_t;
        log_ratio += u[j] * (x < 0.5 ? std::log1p(-x) : std::log(t / big_t));
    }
    return std::log1p(tilt) + log_ratio;
}

struct GapRoot {
    double gap;
    double residual;
    int iterations;
};

GapRoot solve_gap(const SimplexVector& u, double c, const LossVector& l, double tol) {
    const double scale = 1.0 + l.max();

    // Near end: phi -> +inf as the gap closes.
    double near = std::ldexp(scale, -40);
    double phi_near = phi_of_gap(near, u, l);
    for (int i = 0; phi_near < c; ++i) {
        if (i >= kMaxBisectionIterations || near < std::numeric_limits<double>::min()) {
            throw SolverFailure("cannot bracket phi(mu) = c near -max(l); c = " + std::to_string(c) +
                                " is too large for double precision");
        }
        near *= 0.0625;
        phi_near = phi_of_gap(near, u, l);
    }
    // Far end: phi -> 0 as mu -> -inf.
    double far = scale;
    double phi_far = phi_of_gap(far, u, l);
    for (int k = 0; phi_far > c; ++k) {
        if (k >= kMaxBisectionIterations || !std::isfinite(far * 2.0)) {
            throw SolverFailure("cannot bracket phi(mu) = c far from -max(l); c = " +
                                std::to_string(c) + " is too small");
        }
        far *= 2.0;
        phi_far = phi_of_gap(far, u, l);
    }
    if (phi_near - c <= tol) return {near, std::abs(phi_near - c), 0};
    if (c - phi_far <= tol) return {far, std::abs(phi_far - c), 0};

    // phi is decreasing in the gap; bisect geometrically.
    double lo = near;
    double hi = far;
    GapRoot best{phi_near - c < c - phi_far ? near : far,
                 std::min(phi_near - c, c - phi_far), 0};
    for (int it = 1; it <= kMaxBisectionIterations; ++it) {
        const double mid = std::sqrt(lo) * std::sqrt(hi);
        if (!(mid > lo && mid < hi)) break;
        const double value = phi_of_gap(mid, u, l);
        const double residual = std::abs(value - c);
        if (residual < best.residual) best = {mid, residual, it};
        best.iterations = it;
        if (residual <= tol) break;
        if (value > c) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return best;
}

}  // namespace

double phi(double mu, const SimplexVector& u, const LossVector& l) {
    require_same_dimension(u, l);
    require_interior(u);
    const double gap = -mu - l.max();
    if (!(gap > 0.0)) throw InvalidArgument("phi is only defined for mu < -max(l)");
    if (std::isinf(gap)) return 0.0;
    return phi_of_gap(gap, u, l);
}

double solve_mu_star(const SimplexVector& u, double c, const LossVector& l, double tol) {
    require_same_dimension(u, l);
    require_interior(u);
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("kl budget c must be positive and finite");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    return -l.max() - solve_gap(u, c, l, tol).gap;
}

TiltedSolution kl_inverse_total(const SimplexVector& u, double c, const LossVector& l, double tol) {
    require_same_dimension(u, l);
    require_interior(u);
    if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("kl budget c must be nonnegative and finite");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");

    if (c == 0.0) {
        return TiltedSolution{
            .mu_star = -kInf,
            .lambda_star = -kInf,
            .v_star = u,
            .f_star = total_risk(l, u),
            .grad_u = l.vec(),
            .grad_c = kInf,
            .phi_residual = 0.0,
            .iterations = 0,
            .one_sided_limit = true,
        };
    }

    const GapRoot root = solve_gap(u, c, l, tol);
    const double top = l.max();
    const double big_t = root.gap + top;

    // v_j = u_j (1 + l_j/t_j) / (1 + sum_k u_k l_k / t_k), lambda = -T / (1 + sum ...)
    std::vector<double> weight(u.size());
    double tilt = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double ratio = l[j] / (root.gap + (top - l[j]));
        weight[j] = u[j] * (1.0 + ratio);
        tilt += u[j] * ratio;
    }
    const double norm = 1.0 + tilt;
    for (double& w : weight) w /= norm;

    TiltedSolution sol{
        .mu_star = -top - root.gap,
        .lambda_star = -big_t / norm,
        .v_star = SimplexVector(std::move(weight)),
        .f_star = 0.0,
        .grad_u = {},
        .grad_c = 0.0,
        .phi_residual = root.residual,
        .iterations = root.iterations,
        .one_sided_limit = false,
    };
    sol.f_star = total_risk(l, sol.v_star);
    EnvelopeGradient grad = grad_f_star(sol, u);
    sol.grad_u = std::move(grad.grad_u);
    sol.grad_c = grad.grad_c;
    return sol;
}

EnvelopeGradient grad_f_star(const TiltedSolution& sol, const SimplexVector& u) {
    if (sol.v_star.size() != u.size()) throw InvalidArgument("solution and u differ in dimension");
    if (sol.one_sided_limit) return {sol.grad_u, sol.grad_c};
    if (!(sol.lambda_star < 0.0)) throw InvalidArgument("solution has a nonnegative lambda*");
    EnvelopeGradient g{std::vector<double>(u.size()), -sol.lambda_star};
    for (std::size_t j = 0; j < u.size(); ++j) {
        g.grad_u[j] = sol.lambda_star * (1.0 + std::log(u[j] / sol.v_star[j]));
    }
    return g;
}

namespace {

void check_scalar_args(double q, double budget, double tol) {
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("q must lie in [0,1]");
    if (std::isnan(budget) || budget < 0.0) throw InvalidArgument("budget must be nonnegative");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
}

// Bisection on [lo, hi] where kl(q||.) - budget changes sign; `feasible_low`
// says which end satisfies the constraint. Returns the infeasible-side end
// unless a midpoint already meets the tolerance, so the result never
// understates the interval.
double bisect_scalar(double q, double budget, double tol, double lo, double hi, bool feasible_low) {
    for (int it = 0; it < kMaxBisectionIterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const double value = scalar_kl(q, mid);
        if (std::abs(value - budget) <= tol) return mid;
        const bool mid_feasible = value <= budget;
        if (mid_feasible == feasible_low) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return feasible_low ? hi : lo;
}

}  // namespace

double scalar_kl_inverse_upper(double q, double budget, double tol) {
    check_scalar_args(q, budget, tol);
    if (budget == 0.0) return q;
    if (std::isinf(budget) || scalar_kl(q, 1.0) <= budget) return 1.0;
    return bisect_scalar(q, budget, tol, q, 1.0, /*feasible_low=*/true);
}

double scalar_kl_inverse_lower(double q, double budget, double tol) {
    check_scalar_args(q, budget, tol);
    if (budget == 0.0) return q;
    if (std::isinf(budget) || scalar_kl(q, 0.0) <= budget) return 0.0;
    return bisect_scalar(q, budget, tol, 0.0, q, /*feasible_low=*/false);
}

double brute_force_kl_inverse(const SimplexVector& u, double c, const LossVector& l, double grid_step) {
    require_same_dimension(u, l);
    const int M = static_cast<int>(u.size());
    if (M > 4) throw InvalidArgument("brute_force_kl_inverse supports M <= 4");
    if (!(grid_step > 0.0 && grid_step <= 0.5)) throw InvalidArgument("grid step must lie in (0, 0.5]");
    const int n = static_cast<int>(std::lround(1.0 / grid_step));
    if (n < M) throw InvalidArgument("grid too coarse for an interior lattice point");
    if (composition_count(n - M, M) > 200'000'000ULL) throw InvalidArgument("lattice too large");

    // log(i/n) for the lattice coordinates.
    std::vector<double> log_v(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) log_v[i] = std::log(static_cast<double>(i) / n);

    double best = -kInf;
    CompositionStream stream(n - M, M);
    do {
        const auto& k = stream.current().counts;
        double kl = 0.0;
        double value = 0.0;
        for (int j = 0; j < M; ++j) {
            const int count = k[j] + 1;
            if (u[j] > 0.0) kl += u[j] * (std::log(u[j]) - log_v[count]);
            value += l[j] * (static_cast<double>(count) / n);
        }
        // Rounding slack so that lattice points with kl(u||v) = c exactly are kept.
        if (kl <= c + 1e-13 && value > best) best = value;
    } while (stream.next());

    if (best == -kInf) throw InvalidArgument("no lattice point satisfies the kl constraint");
    return best;
}

}  // namespace pbcert
