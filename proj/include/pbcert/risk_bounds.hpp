#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbcert/constants.hpp"
#include "pbcert/json_format.hpp"
#include "pbcert/kl_inverse.hpp"
#include "pbcert/simplex.hpp"

namespace pbcert {

/// Everything the multinomial PAC-Bayes-kl budget depends on.
struct PacBayesInputs {
    int m;                         ///< number of samples the bound is evaluated on
    double delta;                  ///< confidence parameter in (0, 1]
    double kl_qp;                  ///< KL(Q||P) in nats
    SimplexVector empirical_risk;  ///< R_S(Q)

    int num_types() const noexcept { return static_cast<int>(empirical_risk.size()); }
    void validate() const;
};

struct Interval {
    double lower;
    double upper;
};

/// The bound constant actually used, with enough detail to audit it.
struct ConstantRecord {
    ConstantMode mode;
    double log_constant;
    std::uint64_t enumeration_size = 0;  ///< compositions enumerated (exact mode only)
};

struct SmoothingRecord {
    double alpha;
    bool applied;                                ///< false when R_S(Q) was already interior
    std::optional<SimplexVector> smoothed_risk;  ///< the vector the total-risk bound certifies
};

struct SolverResiduals {
    double tolerance;
    double per_type;                    ///< max |kl(q_j||endpoint) - B| over the interval ends
    std::optional<double> total_risk;   ///< |phi(mu*) - B| of the total-risk solve
};

struct CertificateOptions {
    std::optional<LossVector> losses;
    std::optional<double> smoothing_alpha;  ///< pseudo-count for boundary risks; unset = refuse
    double tol = kDefaultKlInverseTol;
};

struct BoundCertificate {
    PacBayesInputs inputs;
    ConstantRecord constant;
    double budget;
    std::vector<Interval> per_type;
    std::optional<LossVector> losses;
    std::optional<double> total_risk_bound;
    double tv_bound;
    double hellinger_bound;
    SolverResiduals residuals;
    std::optional<SmoothingRecord> smoothing;
};

/// ln I_kl in the requested form plus audit data.
ConstantRecord bound_constant(int m, int M, ConstantMode mode);

/// B = (KL(Q||P) + ln(I_kl / delta)) / m.
double bound_budget(const PacBayesInputs& inputs, ConstantMode mode);

/// [L_j, U_j] = tightest interval on R_D^j implied by kl(R_S||R_D) <= B.
std::vector<Interval> per_type_intervals(const SimplexVector& empirical_risk, double budget,
                                         double tol = kDefaultKlInverseTol);

/// sup{l.r : kl(R_S||r) <= B}. Needs interior R_S when B > 0.
double total_risk_bound(const SimplexVector& empirical_risk, double budget, const LossVector& l,
                        double tol = kDefaultKlInverseTol);

/// Pseudo-count smoothing (q m + alpha) / (m + M alpha).
SimplexVector smooth_risk(const SimplexVector& q, int m, double alpha);

/// Assembles every bound implied by one budget.
BoundCertificate build_certificate(const PacBayesInputs& inputs, ConstantMode mode,
                                   const CertificateOptions& options = {});

/// Same, for a budget computed elsewhere.
BoundCertificate certificate_from_budget(const PacBayesInputs& inputs, const ConstantRecord& constant,
                                         double budget, const CertificateOptions& options = {});

Json certificate_to_json(const BoundCertificate& cert);
std::string certificate_to_string(const BoundCertificate& cert);

/// Recomputes a serialised certificate from its recorded inputs and checks
/// that the result serialises to exactly the same text.
bool revalidate_certificate(const std::string& text);

}  // namespace pbcert
