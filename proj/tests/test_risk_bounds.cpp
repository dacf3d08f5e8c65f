#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pbcert/error.hpp"
#include "pbcert/risk_bounds.hpp"

using namespace pbcert;

namespace {

SimplexVector random_interior(std::mt19937_64& rng, std::size_t M) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(M);
    double s = 0.0;
    for (double& x : v) s += x = e(rng) + 0.01;
    for (double& x : v) x /= s;
    return SimplexVector(v);
}

PacBayesInputs inputs_for(int m, double delta, double kl, std::vector<double> q) {
    return PacBayesInputs{.m = m, .delta = delta, .kl_qp = kl, .empirical_risk = SimplexVector(std::move(q))};
}

}  // namespace

TEST_CASE("budget") {
    CHECK(bound_budget(inputs_for(1, 1.0, 0.0, {0.5, 0.5}), ConstantMode::Exact) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    const auto base = inputs_for(200, 0.05, 1.5, {0.3, 0.7});
    const auto doubled = inputs_for(200, 0.05, 3.0, {0.3, 0.7});
    for (ConstantMode mode : {ConstantMode::Exact, ConstantMode::Stirling}) {
        CHECK(bound_budget(doubled, mode) - bound_budget(base, mode) == doctest::Approx(1.5 / 200).epsilon(1e-12));
        CHECK(bound_budget(inputs_for(200, 0.1, 1.5, {0.3, 0.7}), mode) < bound_budget(base, mode));
        CHECK(bound_budget(inputs_for(400, 0.05, 1.5, {0.3, 0.7}), mode) < bound_budget(base, mode));
    }
    CHECK_THROWS_AS(bound_budget(inputs_for(0, 0.05, 0.0, {0.5, 0.5}), ConstantMode::Stirling), InvalidArgument);
    CHECK_THROWS_AS(bound_budget(inputs_for(10, 0.0, 0.0, {0.5, 0.5}), ConstantMode::Stirling), InvalidArgument);
    CHECK_THROWS_AS(bound_budget(inputs_for(10, 0.5, -1.0, {0.5, 0.5}), ConstantMode::Stirling), InvalidArgument);
    CHECK_THROWS_AS(bound_budget(inputs_for(2, 0.5, 0.0, {0.2, 0.3, 0.5}), ConstantMode::Stirling), InfeasibleMode);
    CHECK_THROWS_AS(bound_budget(inputs_for(1000, 0.5, 0.0, {0.1, 0.1, 0.2, 0.2, 0.2, 0.2}), ConstantMode::Exact),
                    InfeasibleMode);
}

TEST_CASE("two-type budgets: exact, closed form and the ln(2 sqrt m) constant") {
    for (int m : {100, 200, 500, 1000, 2000}) {
        const auto in = inputs_for(m, 1.0, 0.0, {0.5, 0.5});
        const double exact = bound_budget(in, ConstantMode::Exact);
        const double stirling = bound_budget(in, ConstantMode::Stirling);
        const double maurer = std::log(2.0 * std::sqrt(static_cast<double>(m))) / m;
        CHECK(exact <= stirling);
        CHECK(stirling <= maurer);
        CHECK(stirling <= 1.1 * exact);
    }
}

TEST_CASE("per-type intervals") {
    const SimplexVector q({0.0, 0.25, 0.75});
    const auto collapsed = per_type_intervals(q, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(collapsed[j].lower == q[j]);
        CHECK(collapsed[j].upper == q[j]);
    }
    const double B = 0.2;
    const auto iv = per_type_intervals(q, B);
    CHECK(iv[0].lower == 0.0);
    CHECK(iv[0].upper == doctest::Approx(1.0 - std::exp(-B)).epsilon(1e-10));

    std::mt19937_64 rng(1);
    for (int t = 0; t < 30; ++t) {
        const SimplexVector r = random_interior(rng, 4);
        const double budget = 0.01 + 0.3 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto ivs = per_type_intervals(r, budget);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(ivs[j].lower <= r[j]);
            CHECK(r[j] <= ivs[j].upper);
            for (int i = 0; i <= 2000; ++i) {
                const double p = i / 2000.0;
                if (scalar_kl(r[j], p) <= budget) {
                    CHECK(p >= ivs[j].lower - 1e-12);
                    CHECK(p <= ivs[j].upper + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("total-risk bound") {
    const SimplexVector q({0.2, 0.5, 0.3});
    const LossVector l({0.0, 1.0, 2.0});
    CHECK(total_risk_bound(q, 0.0, l) == total_risk(l, q));
    CHECK(std::abs(total_risk_bound(q, 1e-12, l) - total_risk(l, q)) <= 1e-5);
    CHECK(total_risk_bound(SimplexVector({0.7, 0.3}), 0.1, LossVector({0.0, 1.0})) ==
          doctest::Approx(scalar_kl_inverse_upper(0.3, 0.1)).epsilon(1e-9));
    CHECK_THROWS_AS(total_risk_bound(SimplexVector({0.0, 1.0}), 0.1, LossVector({0.0, 1.0})), BoundaryRisk);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t M = 2 + t % 4;
        const SimplexVector r = random_interior(rng, M);
        std::vector<double> lv(M);
        for (std::size_t j = 0; j < M; ++j) lv[j] = static_cast<double>(j) + unif(rng);
        const LossVector ll(lv);
        const double B = 0.5 * unif(rng) + 1e-4;
        const double f = total_risk_bound(r, B, ll);
        const auto ivs = per_type_intervals(r, B);
        double sum_upper = 0.0;
        for (std::size_t j = 0; j < M; ++j) sum_upper += ll[j] * ivs[j].upper;
        CHECK(f <= sum_upper + 1e-12);
        CHECK(f >= total_risk(ll, r) - 1e-12);
    }
}

TEST_CASE("marginal equality witness inside the intervals") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t M = 2 + t % 5;
        const SimplexVector q = random_interior(rng, M);
        const std::size_t j = t % M;
        const auto iv = per_type_intervals(q, 0.1);
        const double p_j = iv[j].lower + (iv[j].upper - iv[j].lower) * (0.001 + 0.999 * unif(rng));
        if (p_j >= 1.0) continue;
        std::vector<double> p(M);
        for (std::size_t i = 0; i < M; ++i) p[i] = i == j ? p_j : (1.0 - p_j) / (1.0 - q[j]) * q[i];
        CHECK(std::abs(kl_div(q, SimplexVector(p)) - scalar_kl(q[j], p_j)) <= 1e-12);
    }
}

TEST_CASE("certificates") {
    const auto in = inputs_for(500, 0.05, 2.0, {0.6, 0.25, 0.15});
    CertificateOptions opt;
    opt.losses = LossVector({0.0, 1.0, 3.0});
    const BoundCertificate cert = build_certificate(in, ConstantMode::Exact, opt);

    CHECK(cert.budget == doctest::Approx((2.0 + log_I_kl_exact(500, 3) - std::log(0.05)) / 500).epsilon(1e-15));
    CHECK(cert.constant.enumeration_size == composition_count(500, 3));
    CHECK(cert.tv_bound == tv_bound_from_kl_budget(cert.budget));
    CHECK(cert.hellinger_bound == hellinger_bound_from_tv(cert.tv_bound));
    REQUIRE(cert.total_risk_bound);
    CHECK(*cert.total_risk_bound == kl_inverse_total(in.empirical_risk, cert.budget, *opt.losses).f_star);
    CHECK(*cert.residuals.total_risk <= opt.tol);
    CHECK(cert.residuals.per_type <= 1e-10);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(cert.per_type[j].lower <= in.empirical_risk[j]);
        CHECK(in.empirical_risk[j] <= cert.per_type[j].upper);
    }

    const std::string text = certificate_to_string(cert);
    CHECK(text == certificate_to_string(build_certificate(in, ConstantMode::Exact, opt)));
    CHECK(revalidate_certificate(text));

    const Json j = Json::parse(text);
    std::vector<std::string> keys;
    for (const auto& [k, _] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"m", "M", "delta", "kl_qp", "empirical_risk", "mode", "constant",
                                           "budget_nats", "per_type_intervals", "loss_vector", "total_risk_bound",
                                           "tv_bound", "hellinger_bound", "solver_residuals", "smoothing"});
    CHECK(j["mode"] == "exact");

    Json tampered = j;
    tampered["total_risk_bound"] = j["total_risk_bound"].get<double>() * (1.0 - 1e-9);
    CHECK_FALSE(revalidate_certificate(dump_json(tampered)));
    Json with_bits = j;
    with_bits["budget_bits"] = 1.0;
    CHECK(revalidate_certificate(dump_json(with_bits)));

    const BoundCertificate stirling = build_certificate(in, ConstantMode::Stirling);
    CHECK_FALSE(stirling.total_risk_bound);
    CHECK(revalidate_certificate(certificate_to_string(stirling)));
    CHECK(Json::parse(certificate_to_string(stirling))["constant"].contains("stirling_m"));
}

TEST_CASE("degenerate zero budget") {
    const auto in = inputs_for(10, 1.0, 0.0, {0.3, 0.7});
    const ConstantRecord none{ConstantMode::Exact, 0.0, 0};
    CertificateOptions opt;
    opt.losses = LossVector({0.0, 1.0});
    const BoundCertificate cert = certificate_from_budget(in, none, 0.0, opt);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(cert.per_type[j].lower == in.empirical_risk[j]);
        CHECK(cert.per_type[j].upper == in.empirical_risk[j]);
    }
    CHECK(cert.tv_bound == 0.0);
    CHECK(cert.hellinger_bound == 0.0);
    CHECK(*cert.total_risk_bound == total_risk(*opt.losses, in.empirical_risk));
}

TEST_CASE("boundary risks and smoothing") {
    const auto in = inputs_for(100, 0.05, 0.0, {0.0, 0.9, 0.1});
    CertificateOptions opt;
    opt.losses = LossVector({3.0, 1.0, 0.0});
    CHECK_THROWS_AS(build_certificate(in, ConstantMode::Exact, opt), BoundaryRisk);

    opt.smoothing_alpha = 1.0;
    const BoundCertificate cert = build_certificate(in, ConstantMode::Exact, opt);
    REQUIRE(cert.smoothing);
    CHECK(cert.smoothing->applied);
    const SimplexVector& s = *cert.smoothing->smoothed_risk;
    CHECK(s[0] == doctest::Approx(1.0 / 103).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(91.0 / 103).epsilon(1e-15));
    CHECK(s[2] == doctest::Approx(11.0 / 103).epsilon(1e-15));
    CHECK(*cert.total_risk_bound == kl_inverse_total(s, cert.budget, *opt.losses).f_star);
    CHECK(revalidate_certificate(certificate_to_string(cert)));

    const Json j = Json::parse(certificate_to_string(cert));
    CHECK(j["smoothing"]["heuristic"] == true);
    CHECK(j["empirical_risk"][0] == 0.0);

    const BoundCertificate interior = build_certificate(inputs_for(100, 0.05, 0.0, {0.1, 0.8, 0.1}),
                                                        ConstantMode::Exact, opt);
    CHECK_FALSE(interior.smoothing->applied);
    CHECK_THROWS_AS(smooth_risk(SimplexVector({0.5, 0.5}), 10, 0.0), InvalidArgument);
}
