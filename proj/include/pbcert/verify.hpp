#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pbcert/constants.hpp"
#include "pbcert/json_format.hpp"
#include "pbcert/simplex.hpp"
#include "pbcert/training.hpp"

namespace pbcert {

/// A data distribution over a finite feature alphabet together with a finite
/// set of soft hypotheses and prior/posterior weights over them, so that the
/// true risk vector of Q is available in closed form.
struct SyntheticWorld {
    int num_features;                           ///< X
    int num_classes;                            ///< C
    std::vector<double> class_priors;           ///< pi_y, length C
    std::vector<double> feature_given_class;    ///< P(x | y), row-major C x X
    std::vector<std::vector<double>> hypotheses;  ///< h(x)[yhat], each row-major X x C
    std::vector<double> prior_weights;          ///< P over hypotheses
    std::vector<double> posterior_weights;      ///< Q over hypotheses
    ErrorPartition partition;

    void validate() const;
    int num_types() const { return partition.num_types(); }

    /// KL(Q||P) over the hypothesis set.
    double kl_qp() const;

    /// R_D(Q).
    SimplexVector true_risk() const;

    /// R_S(Q) on m fresh i.i.d. draws from D.
    SimplexVector sample_empirical_risk(int m, std::mt19937_64& rng) const;
};

/// Two classes, four feature values, three fixed soft hypotheses with Q = P
/// uniform, partition {correct, incorrect}.
SyntheticWorld reference_world();

/// One class and one feature value; every hypothesis is deterministic, so
/// R_S(Q) = R_D(Q) for every sample.
SyntheticWorld deterministic_world();

struct ViolationResult {
    int trials;
    int violations;
    double fraction;
    double budget;
    SimplexVector true_risk;
};

/// Fraction of trials with kl(R_S(Q) || R_D(Q)) > B.
ViolationResult mc_bound_violation(const SyntheticWorld& world, int m, double delta, int trials,
                                   ConstantMode mode, std::uint64_t seed);

enum class InnerLawKind { Multinomial, PointMass, Dirichlet };

/// A simplex-valued law with mean mu. For Dirichlet the parameters are
/// concentration * mu.
struct InnerLaw {
    InnerLawKind kind;
    double concentration = 1.0;
};

std::string describe(const InnerLaw& law);

/// Closed-form mean of the law.
std::vector<double> inner_law_mean(const InnerLaw& law, const SimplexVector& mu);

struct DominationResult {
    double lhs;      ///< E exp(m kl(mean of X_i || mu)), X_i from the inner law
    double rhs;      ///< same with X'_i ~ Mult(1, mu)
    double lhs_se;
    double rhs_se;
    double diff_se;  ///< standard error of the paired difference lhs - rhs
    bool pass;       ///< lhs <= rhs + 3 diff_se
};

/// Paired Monte Carlo check of the multinomial domination inequality. Each
/// X'_i is drawn as a one-hot categorical with parameter X_i, which has law
/// Mult(1, mu) because E X_i = mu.
DominationResult mc_maurer_domination(const SimplexVector& mu, int m, int samples, const InnerLaw& law,
                                      std::uint64_t seed);

struct Prop8Witness {
    SimplexVector p;
    double kl_joint;     ///< kl(q || p)
    double kl_marginal;  ///< kl(q_j || p_j)
};

/// Builds p with p_j given and p_i = (1 - p_j) / (1 - q_j) q_i elsewhere.
Prop8Witness prop8_equality_witness(const SimplexVector& q, std::size_t j, double p_j);

/// Smallest kl(q||p) - kl(q_j||p_j) over `trials` random p sharing p_j.
double prop8_min_gap(const SimplexVector& q, std::size_t j, double p_j, int trials, std::mt19937_64& rng);

struct Lemma7Row {
    int m;
    int M;
    double exact_sum;
    double bound;
    bool pass;
};

/// All (m, M) with 1 <= M <= max_M and M <= m <= max_m.
std::vector<Lemma7Row> lemma7_sweep(int max_m, int max_M);

/// Named suite report: budget, lemma5, lemma7, prop8 or all. Carries a
/// top-level "pass" flag.
Json verification_report(const std::string& suite, std::uint64_t seed = 0);

}  // namespace pbcert
