#include "pbcert/risk_bounds.hpp"

#include <algorithm>
#include <cmath>

#include "pbcert/error.hpp"

namespace pbcert {

void PacBayesInputs::validate() const {
    if (m < 1) throw InvalidArgument("sample count m must be >= 1");
    if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in (0, 1]");
    if (!(kl_qp >= 0.0) || !std::isfinite(kl_qp)) throw InvalidArgument("KL(Q||P) must be finite and >= 0");
}

ConstantRecord bound_constant(int m, int M, ConstantMode mode) {
    if (mode == ConstantMode::Exact) {
        return {mode, log_I_kl_exact(m, M), composition_count(m, M)};
    }
    return {mode, log_I_kl_stirling(m, M), 0};
}

double bound_budget(const PacBayesInputs& inputs, ConstantMode mode) {
    inputs.validate();
    const double log_constant = log_I_kl(inputs.m, inputs.num_types(), mode);
    return (inputs.kl_qp + log_constant - std::log(inputs.delta)) / inputs.m;
}

std::vector<Interval> per_type_intervals(const SimplexVector& empirical_risk, double budget, double tol) {
    std::vector<Interval> out;
    out.reserve(empirical_risk.size());
    for (double q : empirical_risk.values()) {
        out.push_back({scalar_kl_inverse_lower(q, budget, tol), scalar_kl_inverse_upper(q, budget, tol)});
    }
    return out;
}

double total_risk_bound(const SimplexVector& empirical_risk, double budget, const LossVector& l, double tol) {
    if (budget == 0.0) return total_risk(l, empirical_risk);
    return kl_inverse_total(empirical_risk, budget, l, tol).f_star;
}

SimplexVector smooth_risk(const SimplexVector& q, int m, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("smoothing alpha must be positive");
    if (m < 1) throw InvalidArgument("smoothing needs m >= 1");
    const double denom = m + static_cast<double>(q.size()) * alpha;
    std::vector<double> out(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) out[j] = (q[j] * m + alpha) / denom;
    return SimplexVector(std::move(out));
}

namespace {

double interval_residual(const SimplexVector& q, const std::vector<Interval>& intervals, double budget) {
    double worst = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        // Ends clamped at 0 or 1 (or the degenerate B = 0 case) are exact.
        if (budget == 0.0) continue;
        if (intervals[j].upper < 1.0) {
            worst = std::max(worst, std::abs(scalar_kl(q[j], intervals[j].upper) - budget));
        }
        if (intervals[j].lower > 0.0) {
            worst = std::max(worst, std::abs(scalar_kl(q[j], intervals[j].lower) - budget));
        }
    }
    return worst;
}

}  // namespace

BoundCertificate certificate_from_budget(const PacBayesInputs& inputs, const ConstantRecord& constant,
                                         double budget, const CertificateOptions& options) {
    inputs.validate();
    if (!(budget >= 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be finite and >= 0");
    const SimplexVector& q = inputs.empirical_risk;

    BoundCertificate cert{
        .inputs = inputs,
        .constant = constant,
        .budget = budget,
        .per_type = per_type_intervals(q, budget, options.tol),
        .losses = options.losses,
        .total_risk_bound = std::nullopt,
        .tv_bound = 0.0,
        .hellinger_bound = 0.0,
        .residuals = {options.tol, 0.0, std::nullopt},
        .smoothing = std::nullopt,
    };
    cert.residuals.per_type = interval_residual(q, cert.per_type, budget);
    cert.tv_bound = tv_bound_from_kl_budget(budget);
    cert.hellinger_bound = hellinger_bound_from_tv(cert.tv_bound);

    if (options.losses) {
        const LossVector& l = *options.losses;
        if (l.size() != q.size()) throw InvalidArgument("loss vector and risk vector differ in dimension");
        SimplexVector target = q;
        if (options.smoothing_alpha) {
            SmoothingRecord record{*options.smoothing_alpha, false, std::nullopt};
            if (!q.interior()) {
                target = smooth_risk(q, inputs.m, *options.smoothing_alpha);
                record.applied = true;
                record.smoothed_risk = target;
            }
            cert.smoothing = record;
        }
        if (budget == 0.0) {
            cert.total_risk_bound = total_risk(l, target);
            cert.residuals.total_risk = 0.0;
        } else {
            const TiltedSolution sol = kl_inverse_total(target, budget, l, options.tol);
            cert.total_risk_bound = sol.f_star;
            cert.residuals.total_risk = sol.phi_residual;
        }
    } else if (options.smoothing_alpha) {
        cert.smoothing = SmoothingRecord{*options.smoothing_alpha, false, std::nullopt};
    }
    return cert;
}

BoundCertificate build_certificate(const PacBayesInputs& inputs, ConstantMode mode,
                                   const CertificateOptions& options) {
    inputs.validate();
    const ConstantRecord constant = bound_constant(inputs.m, inputs.num_types(), mode);
    const double budget = (inputs.kl_qp + constant.log_constant - std::log(inputs.delta)) / inputs.m;
    return certificate_from_budget(inputs, constant, budget, options);
}

Json certificate_to_json(const BoundCertificate& cert) {
    Json j;
    j["m"] = cert.inputs.m;
    j["M"] = cert.inputs.num_types();
    j["delta"] = cert.inputs.delta;
    j["kl_qp"] = cert.inputs.kl_qp;
    j["empirical_risk"] = cert.inputs.empirical_risk.vec();
    j["mode"] = std::string(to_string(cert.constant.mode));

    Json constant;
    constant["log_I_kl"] = cert.constant.log_constant;
    if (cert.constant.mode == ConstantMode::Exact) {
        constant["enumeration_size"] = cert.constant.enumeration_size;
    } else {
        constant["stirling_m"] = cert.inputs.m;
        constant["stirling_M"] = cert.inputs.num_types();
    }
    j["constant"] = constant;

    j["budget_nats"] = cert.budget;
    Json intervals = Json::array();
    for (const Interval& iv : cert.per_type) intervals.push_back({iv.lower, iv.upper});
    j["per_type_intervals"] = intervals;
    j["loss_vector"] = cert.losses ? Json(cert.losses->vec()) : Json(nullptr);
    j["total_risk_bound"] = cert.total_risk_bound ? Json(*cert.total_risk_bound) : Json(nullptr);
    j["tv_bound"] = cert.tv_bound;
    j["hellinger_bound"] = cert.hellinger_bound;

    Json residuals;
    residuals["tolerance"] = cert.residuals.tolerance;
    residuals["per_type"] = cert.residuals.per_type;
    residuals["total_risk"] = cert.residuals.total_risk ? Json(*cert.residuals.total_risk) : Json(nullptr);
    j["solver_residuals"] = residuals;

    if (cert.smoothing) {
        Json s;
        s["alpha"] = cert.smoothing->alpha;
        s["applied"] = cert.smoothing->applied;
        s["heuristic"] = true;
        s["smoothed_risk"] =
            cert.smoothing->smoothed_risk ? Json(cert.smoothing->smoothed_risk->vec()) : Json(nullptr);
        j["smoothing"] = s;
    } else {
        j["smoothing"] = nullptr;
    }
    return j;
}

std::string certificate_to_string(const BoundCertificate& cert) { return dump_json(certificate_to_json(cert)); }

bool revalidate_certificate(const std::string& text) {
    const Json j = Json::parse(text);
    PacBayesInputs inputs{
        .m = j.at("m").get<int>(),
        .delta = j.at("delta").get<double>(),
        .kl_qp = j.at("kl_qp").get<double>(),
        .empirical_risk = SimplexVector(j.at("empirical_risk").get<std::vector<double>>()),
    };
    if (j.at("M").get<int>() != inputs.num_types()) return false;
    const ConstantMode mode = constant_mode_from_string(j.at("mode").get<std::string>());

    CertificateOptions options;
    if (!j.at("loss_vector").is_null()) options.losses = LossVector(j["loss_vector"].get<std::vector<double>>());
    if (!j.at("smoothing").is_null()) options.smoothing_alpha = j["smoothing"].at("alpha").get<double>();
    options.tol = j.at("solver_residuals").at("tolerance").get<double>();

    // Extra display-only fields (e.g. budget_bits) are not part of the recomputation.
    Json recorded = j;
    recorded.erase("budget_bits");
    return certificate_to_string(build_certificate(inputs, mode, options)) == dump_json(recorded);
}

}  // namespace pbcert
