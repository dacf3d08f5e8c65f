#include "pbcert/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pbcert/error.hpp"
#include "pbcert/risk_bounds.hpp"

namespace pbcert {

namespace {

void require(bool ok, const char* message) {
    if (!ok) throw InvalidArgument(message);
}

bool is_distribution(std::span<const double> p) {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= 1e-9;
}

// Risk vector under Q contributed by one (x, y) cell.
std::vector<double> cell_risk(const SyntheticWorld& w, int x, int y) {
    std::vector<double> r(static_cast<std::size_t>(w.num_types()), 0.0);
    for (std::size_t h = 0; h < w.hypotheses.size(); ++h) {
        const double qh = w.posterior_weights[h];
        if (qh == 0.0) continue;
        for (int yhat = 0; yhat < w.num_classes; ++yhat) {
            r[w.partition.type_of(yhat, y)] += qh * w.hypotheses[h][x * w.num_classes + yhat];
        }
    }
    return r;
}

double cell_probability(const SyntheticWorld& w, int x, int y) {
    return w.class_priors[y] * w.feature_given_class[static_cast<std::size_t>(y) * w.num_features + x];
}

}  // namespace

void SyntheticWorld::validate() const {
    require(num_features >= 1, "world needs at least one feature value");
    require(num_classes == partition.num_classes(), "world and partition disagree on the class count");
    require(class_priors.size() == static_cast<std::size_t>(num_classes) && is_distribution(class_priors),
            "class priors must be a distribution over the classes");
    require(feature_given_class.size() == static_cast<std::size_t>(num_classes) * num_features,
            "feature table has the wrong size");
    for (int y = 0; y < num_classes; ++y) {
        require(is_distribution(std::span(feature_given_class).subspan(static_cast<std::size_t>(y) * num_features,
                                                                       num_features)),
                "each P(x | y) row must be a distribution");
    }
    require(!hypotheses.empty(), "world needs at least one hypothesis");
    for (const auto& h : hypotheses) {
        require(h.size() == static_cast<std::size_t>(num_features) * num_classes, "hypothesis table has the wrong size");
        for (int x = 0; x < num_features; ++x) {
            require(is_distribution(std::span(h).subspan(static_cast<std::size_t>(x) * num_classes, num_classes)),
                    "each hypothesis row must be a distribution");
        }
    }
    require(prior_weights.size() == hypotheses.size() && is_distribution(prior_weights),
            "prior weights must be a distribution over the hypotheses");
    require(posterior_weights.size() == hypotheses.size() && is_distribution(posterior_weights),
            "posterior weights must be a distribution over the hypotheses");
}

double SyntheticWorld::kl_qp() const {
    double kl = 0.0;
    for (std::size_t h = 0; h < hypotheses.size(); ++h) {
        const double q = posterior_weights[h];
        if (q == 0.0) continue;
        require(prior_weights[h] > 0.0, "posterior support must lie inside the prior support");
        kl += q * std::log(q / prior_weights[h]);
    }
    return std::max(kl, 0.0);
}

SimplexVector SyntheticWorld::true_risk() const {
    validate();
    std::vector<double> r(static_cast<std::size_t>(num_types()), 0.0);
    for (int y = 0; y < num_classes; ++y) {
        for (int x = 0; x < num_features; ++x) {
            const double p = cell_probability(*this, x, y);
            if (p == 0.0) continue;
            const auto c = cell_risk(*this, x, y);
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += p * c[j];
        }
    }
    return SimplexVector(std::move(r));
}

SimplexVector SyntheticWorld::sample_empirical_risk(int m, std::mt19937_64& rng) const {
    require(m >= 1, "sample size must be >= 1");
    std::vector<double> weights;
    std::vector<std::vector<double>> risks;
    for (int y = 0; y < num_classes; ++y) {
        for (int x = 0; x < num_features; ++x) {
            weights.push_back(cell_probability(*this, x, y));
            risks.push_back(cell_risk(*this, x, y));
        }
    }
    std::discrete_distribution<std::size_t> cell(weights.begin(), weights.end());
    std::vector<double> r(static_cast<std::size_t>(num_types()), 0.0);
    for (int i = 0; i < m; ++i) {
        const auto& c = risks[cell(rng)];
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += c[j];
    }
    for (double& x : r) x /= m;
    return SimplexVector(std::move(r));
}

SyntheticWorld reference_world() {
    // clang-format off
    SyntheticWorld w{
        .num_features = 4,
        .num_classes = 2,
        .class_priors = {0.6, 0.4},
        .feature_given_class = {0.4, 0.3, 0.2, 0.1,
                                0.1, 0.2, 0.3, 0.4},
        .hypotheses = {
            {0.8, 0.2,  0.8, 0.2,  0.3, 0.7,  0.3, 0.7},
            {0.5, 0.5,  0.5, 0.5,  0.5, 0.5,  0.5, 0.5},
            {0.6, 0.4,  0.55, 0.45, 0.35, 0.65, 0.2, 0.8},
        },
        .prior_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3},
        .posterior_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3},
        .partition = ErrorPartition(2, {0, 1, 1, 0}, LossVector({0.0, 1.0})),
    };
    // clang-format on
    w.validate();
    return w;
}

SyntheticWorld deterministic_world() {
    SyntheticWorld w{
        .num_features = 1,
        .num_classes = 2,
        .class_priors = {1.0, 0.0},
        .feature_given_class = {1.0, 1.0},
        .hypotheses = {{1.0, 0.0}, {0.0, 1.0}},
        .prior_weights = {0.5, 0.5},
        .posterior_weights = {0.5, 0.5},
        .partition = ErrorPartition(2, {0, 1, 1, 0}, LossVector({0.0, 1.0})),
    };
    w.validate();
    return w;
}

ViolationResult mc_bound_violation(const SyntheticWorld& world, int m, double delta, int trials,
                                   ConstantMode mode, std::uint64_t seed) {
    require(trials >= 1, "need at least one trial");
    world.validate();
    const SimplexVector truth = world.true_risk();
    const PacBayesInputs inputs{.m = m, .delta = delta, .kl_qp = world.kl_qp(), .empirical_risk = truth};
    const double budget = bound_budget(inputs, mode);

    std::mt19937_64 rng(seed);
    int violations = 0;
    for (int t = 0; t < trials; ++t) {
        if (kl_div(world.sample_empirical_risk(m, rng), truth) > budget) ++violations;
    }
    return {trials, violations, static_cast<double>(violations) / trials, budget, truth};
}

std::string describe(const InnerLaw& law) {
    switch (law.kind) {
        case InnerLawKind::Multinomial: return "multinomial";
        case InnerLawKind::PointMass: return "point-mass";
        case InnerLawKind::Dirichlet: break;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "dirichlet(kappa=%g)", law.concentration);
    return buf;
}

std::vector<double> inner_law_mean(const InnerLaw& law, const SimplexVector& mu) {
    if (law.kind != InnerLawKind::Dirichlet) return mu.vec();
    std::vector<double> alpha(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) alpha[j] = law.concentration * mu[j];
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (double& a : alpha) a /= total;
    return alpha;
}

namespace {

struct MeanAndSe {
    double mean;
    double se;
};

MeanAndSe summarise(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double var = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

// kl(xbar || mu) for interior mu.
double kl_to_mean(const std::vector<double>& xbar, const SimplexVector& mu) {
    double kl = 0.0;
    for (std::size_t j = 0; j < xbar.size(); ++j) {
        if (xbar[j] > 0.0) kl += xbar[j] * std::log(xbar[j] / mu[j]);
    }
    return std::max(kl, 0.0);
}

}  // namespace

DominationResult mc_maurer_domination(const SimplexVector& mu, int m, int samples, const InnerLaw& law,
                                      std::uint64_t seed) {
    require(m >= 1, "m must be >= 1");
    require(samples >= 2, "need at least two samples");
    require(mu.interior(), "mu must be interior");
    if (law.kind == InnerLawKind::Dirichlet) {
        require(law.concentration > 0.0 && std::isfinite(law.concentration), "concentration must be positive");
    }
    const std::vector<double> mean = inner_law_mean(law, mu);
    for (std::size_t j = 0; j < mu.size(); ++j) {
        if (std::abs(mean[j] - mu[j]) > 1e-9) throw InvalidArgument("inner law does not have mean mu");
    }

    const std::size_t M = mu.size();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> mult(mu.values().begin(), mu.values().end());
    std::vector<std::gamma_distribution<double>> gammas;
    for (std::size_t j = 0; j < M; ++j) gammas.emplace_back(law.concentration * mu[j], 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> x(M);
    std::vector<double> xbar(M);
    std::vector<double> xbar_prime(M);
    std::vector<double> lhs(static_cast<std::size_t>(samples));
    std::vector<double> rhs(static_cast<std::size_t>(samples));
    std::vector<double> diff(static_cast<std::size_t>(samples));

    for (int s = 0; s < samples; ++s) {
        std::fill(xbar.begin(), xbar.end(), 0.0);
        std::fill(xbar_prime.begin(), xbar_prime.end(), 0.0);
        for (int i = 0; i < m; ++i) {
            switch (law.kind) {
                case InnerLawKind::Multinomial:
                    std::fill(x.begin(), x.end(), 0.0);
                    x[mult(rng)] = 1.0;
                    break;
                case InnerLawKind::PointMass:
                    std::copy(mu.values().begin(), mu.values().end(), x.begin());
                    break;
                case InnerLawKind::Dirichlet: {
                    double total = 0.0;
                    do {
                        total = 0.0;
                        for (std::size_t j = 0; j < M; ++j) total += x[j] = gammas[j](rng);
                    } while (total == 0.0);
                    for (double& v : x) v /= total;
                    break;
                }
            }
            // X'_i ~ Categorical(X_i); a one-hot X_i maps to itself.
            std::size_t hit = M - 1;
            const double u = unif(rng);
            double acc = 0.0;
            for (std::size_t j = 0; j < M; ++j) {
                acc += x[j];
                if (u < acc) {
                    hit = j;
                    break;
                }
            }
            for (std::size_t j = 0; j < M; ++j) xbar[j] += x[j];
            xbar_prime[hit] += 1.0;
        }
        for (std::size_t j = 0; j < M; ++j) {
            xbar[j] /= m;
            xbar_prime[j] /= m;
        }
        lhs[s] = std::exp(m * kl_to_mean(xbar, mu));
        rhs[s] = std::exp(m * kl_to_mean(xbar_prime, mu));
        diff[s] = lhs[s] - rhs[s];
    }

    const MeanAndSe l = summarise(lhs);
    const MeanAndSe r = summarise(rhs);
    const MeanAndSe d = summarise(diff);
    return {l.mean, r.mean, l.se, r.se, d.se, l.mean <= r.mean + 3.0 * d.se};
}

Prop8Witness prop8_equality_witness(const SimplexVector& q, std::size_t j, double p_j) {
    require(j < q.size(), "type index out of range");
    require(q[j] < 1.0, "q_j must be < 1");
    require(p_j >= 0.0 && p_j < 1.0, "p_j must lie in [0, 1)");
    const double scale = (1.0 - p_j) / (1.0 - q[j]);
    std::vector<double> p(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = i == j ? p_j : scale * q[i];
    SimplexVector pv(std::move(p));
    const double joint = kl_div(q, pv);
    return {pv, joint, scalar_kl(q[j], p_j)};
}

double prop8_min_gap(const SimplexVector& q, std::size_t j, double p_j, int trials, std::mt19937_64& rng) {
    require(j < q.size(), "type index out of range");
    require(p_j >= 0.0 && p_j < 1.0, "p_j must lie in [0, 1)");
    const double marginal = scalar_kl(q[j], p_j);
    std::exponential_distribution<double> expo(1.0);
    double worst = INFINITY;
    std::vector<double> p(q.size());
    for (int t = 0; t < trials; ++t) {
        double total = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (i == j) continue;
            p[i] = expo(rng);
            total += p[i];
        }
        for (std::size_t i = 0; i < q.size(); ++i) p[i] = i == j ? p_j : (1.0 - p_j) * p[i] / total;
        worst = std::min(worst, kl_div(q, SimplexVector(p)) - marginal);
    }
    return worst;
}

std::vector<Lemma7Row> lemma7_sweep(int max_m, int max_M) {
    require(max_M >= 1 && max_m >= 1, "sweep limits must be >= 1");
    std::vector<Lemma7Row> rows;
    for (int M = 1; M <= max_M; ++M) {
        for (int m = M; m <= max_m; ++m) {
            const ReciprocalSqrtSum r = reciprocal_sqrt_sum_check(m, M);
            // (1, 1) is an equality; allow for rounding in the closed form.
            rows.push_back({m, M, r.exact_sum, r.bound, r.exact_sum <= r.bound * (1.0 + 1e-12)});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

Json budget_suite(std::uint64_t seed) {
    const SyntheticWorld world = reference_world();
    Json cases = Json::array();
    bool pass = true;
    auto run = [&](const SyntheticWorld& w, int m, double delta, int trials, ConstantMode mode,
                   const char* name) {
        const ViolationResult r = mc_bound_violation(w, m, delta, trials, mode, seed);
        const bool ok = r.fraction <= delta;
        pass = pass && ok;
        Json c;
        c["case"] = name;
        c["m"] = m;
        c["delta"] = delta;
        c["mode"] = std::string(to_string(mode));
        c["trials"] = r.trials;
        c["violations"] = r.violations;
        c["fraction"] = r.fraction;
        c["budget_nats"] = r.budget;
        c["true_risk"] = r.true_risk.vec();
        c["pass"] = ok;
        cases.push_back(c);
    };
    run(world, 100, 0.05, 2000, ConstantMode::Exact, "reference-exact");
    run(world, 100, 0.05, 2000, ConstantMode::Stirling, "reference-stirling");
    run(world, 100, 1.0, 2000, ConstantMode::Exact, "reference-delta-one");
    run(deterministic_world(), 1, 0.05, 100, ConstantMode::Exact, "deterministic-m1");
    Json out;
    out["pass"] = pass;
    out["cases"] = cases;
    return out;
}

Json lemma5_suite(std::uint64_t seed) {
    const SimplexVector mu({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::vector<InnerLaw> laws = {
        {InnerLawKind::Dirichlet, 0.5},
        {InnerLawKind::Dirichlet, 2.0},
        {InnerLawKind::Dirichlet, 10.0},
        {InnerLawKind::Multinomial, 1.0},
        {InnerLawKind::PointMass, 1.0},
    };
    Json cases = Json::array();
    bool pass = true;
    for (const InnerLaw& law : laws) {
        const DominationResult r = mc_maurer_domination(mu, 5, 100000, law, seed);
        pass = pass && r.pass;
        Json c;
        c["law"] = describe(law);
        c["m"] = 5;
        c["samples"] = 100000;
        c["lhs"] = r.lhs;
        c["rhs"] = r.rhs;
        c["lhs_se"] = r.lhs_se;
        c["rhs_se"] = r.rhs_se;
        c["diff_se"] = r.diff_se;
        c["pass"] = r.pass;
        cases.push_back(c);
    }
    Json out;
    out["pass"] = pass;
    out["mu"] = mu.vec();
    out["cases"] = cases;
    return out;
}

Json lemma7_suite() {
    const auto rows = lemma7_sweep(14, 5);
    Json table = Json::array();
    bool pass = true;
    for (const Lemma7Row& r : rows) {
        pass = pass && r.pass;
        table.push_back({{"m", r.m}, {"M", r.M}, {"exact_sum", r.exact_sum}, {"bound", r.bound}, {"pass", r.pass}});
    }
    const ReciprocalSqrtSum unit = reciprocal_sqrt_sum_check(1, 1);
    const bool tie = std::abs(unit.exact_sum - unit.bound) <= 1e-12;
    Json out;
    out["pass"] = pass && tie;
    out["equality_at_1_1"] = tie;
    out["rows"] = table;
    return out;
}

Json prop8_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dim(2, 6);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst_equality = 0.0;
    double worst_gap = INFINITY;
    const int cases = 100;
    for (int t = 0; t < cases; ++t) {
        const int M = dim(rng);
        std::vector<double> q(static_cast<std::size_t>(M));
        double total = 0.0;
        for (double& x : q) total += x = expo(rng) + 1e-3;
        for (double& x : q) x /= total;
        const SimplexVector qv(q);
        const auto j = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, M - 1)(rng));
        const double p_j = 0.01 + 0.98 * unif(rng);
        const Prop8Witness w = prop8_equality_witness(qv, j, p_j);
        worst_equality = std::max(worst_equality, std::abs(w.kl_joint - w.kl_marginal));
        worst_gap = std::min(worst_gap, prop8_min_gap(qv, j, p_j, 20, rng));
    }
    const bool equality_ok = worst_equality <= 1e-12;
    const bool gap_ok = worst_gap >= -1e-12;
    Json out;
    out["pass"] = equality_ok && gap_ok;
    out["cases"] = cases;
    out["max_equality_error"] = worst_equality;
    out["min_perturbation_gap"] = worst_gap;
    return out;
}

}  // namespace

Json verification_report(const std::string& suite, std::uint64_t seed) {
    const bool all = suite == "all";
    if (!all && suite != "budget" && suite != "lemma5" && suite != "lemma7" && suite != "prop8") {
        throw InvalidArgument("unknown verification suite '" + suite + "'");
    }
    Json report;
    report["suite"] = suite;
    report["seed"] = seed;
    Json suites;
    if (all || suite == "budget") suites["budget"] = budget_suite(seed);
    if (all || suite == "lemma5") suites["lemma5"] = lemma5_suite(seed);
    if (all || suite == "lemma7") suites["lemma7"] = lemma7_suite();
    if (all || suite == "prop8") suites["prop8"] = prop8_suite(seed);
    bool pass = true;
    for (const auto& [_, s] : suites.items()) pass = pass && s.at("pass").get<bool>();
    report["pass"] = pass;
    report["suites"] = suites;
    return report;
}

}  // namespace pbcert
