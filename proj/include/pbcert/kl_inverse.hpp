#pragma once

#include <vector>

#include "pbcert/simplex.hpp"

namespace pbcert {

/// Default root tolerance on |phi(mu) - c|.
inline constexpr double kDefaultKlInverseTol = 1e-12;
inline constexpr int kMaxBisectionIterations = 200;

/// Maximiser of l.v over {v in simplex : kl(u||v) <= c} together with its
/// Lagrange multipliers and envelope gradients.
///
/// For c > 0 and interior u, v*_j = lambda* u_j / (mu* + l_j) with
/// lambda* = (sum_j u_j / (mu* + l_j))^{-1} < 0 and mu* < -max_j l_j.
/// For c = 0 the solution is v* = u and the gradients are the one-sided
/// c -> 0+ limits: grad_c = +inf, grad_u = l (which is the directional
/// derivative along the simplex; lambda* and mu* are -inf).
struct TiltedSolution {
    double mu_star = 0.0;
    double lambda_star = 0.0;
    SimplexVector v_star;
    double f_star = 0.0;
    std::vector<double> grad_u;
    double grad_c = 0.0;
    double phi_residual = 0.0;  ///< achieved |phi(mu*) - c|
    int iterations = 0;
    bool one_sided_limit = false;
};

/// phi_l(mu) = log(-sum_j u_j/(mu+l_j)) + sum_j u_j log(-(mu+l_j)),
/// defined for mu < -max l and interior u. Strictly increasing from 0 to +inf.
double phi(double mu, const SimplexVector& u, const LossVector& l);

/// Unique root of phi_l(mu) = c on (-inf, -max l).
double solve_mu_star(const SimplexVector& u, double c, const LossVector& l,
                     double tol = kDefaultKlInverseTol);

/// Solves max l.v s.t. kl(u||v) <= c. Requires interior u and c >= 0.
TiltedSolution kl_inverse_total(const SimplexVector& u, double c, const LossVector& l,
                                double tol = kDefaultKlInverseTol);

struct EnvelopeGradient {
    std::vector<double> grad_u;  ///< lambda* (1 + log(u_j / v*_j))
    double grad_c;               ///< -lambda*
};

/// Envelope-theorem derivatives of f* = l.v* with respect to u and c.
EnvelopeGradient grad_f_star(const TiltedSolution& sol, const SimplexVector& u);

/// sup{p in [q,1] : kl(q||p) <= B}.
double scalar_kl_inverse_upper(double q, double budget, double tol = kDefaultKlInverseTol);

/// inf{p in [0,q] : kl(q||p) <= B}.
double scalar_kl_inverse_lower(double q, double budget, double tol = kDefaultKlInverseTol);

/// Lattice search for max l.v over interior v with coordinates in
/// grid_step * Z and kl(u||v) <= c. Reference oracle; M <= 4.
double brute_force_kl_inverse(const SimplexVector& u, double c, const LossVector& l,
                              double grid_step);

}  // namespace pbcert
