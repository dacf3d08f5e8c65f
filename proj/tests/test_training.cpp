#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pbcert/error.hpp"
#include "pbcert/training.hpp"
#include "pbcert/training_io.hpp"

using namespace pbcert;

namespace {

// Point mass on class round(x[0]) (clamped); ignores theta apart from its size.
class LookupModel final : public SoftClassifier {
public:
    LookupModel(int C, std::size_t params) : C_(C), params_(params) {}
    std::size_t num_params() const override { return params_; }
    std::size_t input_dim() const override { return 1; }
    int num_classes() const override { return C_; }
    void forward(std::span<const double>, std::span<const double> x, std::span<double> probs) const override {
        std::fill(probs.begin(), probs.end(), 0.0);
        const int c = std::clamp(static_cast<int>(std::lround(x[0])), 0, C_ - 1);
        probs[c] = 1.0;
    }

private:
    int C_;
    std::size_t params_;
};

// Affine-softmax whose Jacobian is poisoned.
class PoisonedJacobian final : public SoftClassifier {
public:
    PoisonedJacobian(std::size_t d, int C) : inner_(d, C) {}
    std::size_t num_params() const override { return inner_.num_params(); }
    std::size_t input_dim() const override { return inner_.input_dim(); }
    int num_classes() const override { return inner_.num_classes(); }
    void forward(std::span<const double> theta, std::span<const double> x, std::span<double> probs) const override {
        inner_.forward(theta, x, probs);
    }
    void jacobian(std::span<const double>, std::span<const double>, std::span<double> jac) const override {
        std::fill(jac.begin(), jac.end(), std::nan(""));
    }

private:
    AffineSoftmax inner_;
};

ErrorPartition correct_incorrect(int C) {
    std::vector<int> table(static_cast<std::size_t>(C) * C, 1);
    for (int c = 0; c < C; ++c) table[static_cast<std::size_t>(c) * C + c] = 0;
    return ErrorPartition(C, table, LossVector({0.0, 1.0}));
}

ErrorPartition weighted_refined(int C) {
    std::vector<double> losses(static_cast<std::size_t>(C) * C, 1.0);
    for (int c = 0; c < C; ++c) losses[static_cast<std::size_t>(c) * C + c] = 0.0;
    losses[1] = 2.0;  // predicted 0, true 1
    return ErrorPartition::fully_refined(C, LossVector(losses));
}

GaussianPosterior random_posterior(std::mt19937_64& rng, std::size_t N, double log_var) {
    std::normal_distribution<double> n(0.0, 0.5);
    GaussianPosterior q{std::vector<double>(N), std::vector<double>(N)};
    for (std::size_t i = 0; i < N; ++i) {
        q.mean[i] = n(rng);
        q.log_var[i] = log_var + 0.3 * n(rng);
    }
    return q;
}

long double kl_oracle(const GaussianPosterior& q, const PriorSpec& p) {
    long double s = 0.0L;
    for (std::size_t n = 0; n < q.size(); ++n) {
        const long double sv = std::exp(static_cast<long double>(q.log_var[n]));
        const long double r = p.var[n];
        const long double d = static_cast<long double>(q.mean[n]) - p.mean[n];
        s += sv / r + d * d / r + std::log(r / sv);
    }
    return 0.5L * (s - q.size());
}

}  // namespace

TEST_CASE("gaussian kl") {
    const PriorSpec p{{0.0, 1.0}, {1.0, 2.0}, PriorProvenance::Fixed};
    CHECK(gaussian_kl(GaussianPosterior{{0.0, 1.0}, {0.0, std::log(2.0)}}, p) <= 1e-16);
    CHECK(gaussian_kl(GaussianPosterior{{1.0}, {0.0}}, PriorSpec{{0.0}, {1.0}, PriorProvenance::Fixed}) == 0.5);
    CHECK_THROWS_AS(gaussian_kl(GaussianPosterior{{1.0}, {0.0}}, p), InvalidArgument);
    CHECK_THROWS_AS(gaussian_kl(GaussianPosterior{{1.0}, {0.0}}, PriorSpec{{0.0}, {0.0}, PriorProvenance::Fixed}),
                    InvalidArgument);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    for (int t = 0; t < 50; ++t) {
        const std::size_t N = 1 + t;
        const GaussianPosterior q = random_posterior(rng, N, -1.0);
        PriorSpec pr{std::vector<double>(N), std::vector<double>(N), PriorProvenance::Fixed};
        for (std::size_t i = 0; i < N; ++i) {
            pr.mean[i] = unif(rng) - 1.0;
            pr.var[i] = unif(rng);
        }
        const double oracle = static_cast<double>(kl_oracle(q, pr));
        CHECK(std::abs(gaussian_kl(q, pr) - oracle) <= 1e-12 * std::max(1.0, oracle));
    }
}

TEST_CASE("pathwise sampling") {
    const GaussianPosterior q{{0.5, -1.0, 2.0}, {0.0, std::log(4.0), -1.0}};
    CHECK(pathwise_sample(q, std::vector<double>(3, 0.0)) == q.mean);
    const GaussianPosterior frozen{{0.5, -1.0}, {-800.0, -800.0}};
    CHECK(pathwise_sample(frozen, std::vector<double>{3.0, -2.0}) == frozen.mean);
    CHECK_THROWS_AS(pathwise_sample(q, std::vector<double>(2, 0.0)), InvalidArgument);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 100000;
    std::vector<double> sum(3, 0.0);
    for (int i = 0; i < n; ++i) {
        const std::vector<double> eps = {normal(rng), normal(rng), normal(rng)};
        const auto theta = pathwise_sample(q, eps);
        for (std::size_t k = 0; k < 3; ++k) sum[k] += theta[k];
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double sigma = std::exp(0.5 * q.log_var[k]);
        CHECK(std::abs(sum[k] / n - q.mean[k]) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("soft risk vectors") {
    LabelledDataset data(1, 3);
    for (int y : {0, 1, 2, 2, 1, 0, 0, 2, 1, 1}) data.add_row(std::vector<double>{static_cast<double>(y)}, y);

    const LookupModel perfect(3, 4);
    const SimplexVector r = soft_risk_vector(std::vector<double>(4, 0.0), data, correct_incorrect(3), perfect);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);

    LabelledDataset blobs = make_gaussian_blobs(30, 3, 2, 3.0, 1);
    const AffineSoftmax model(2, 3);
    const SimplexVector uniform = soft_risk_vector(std::vector<double>(9, 0.0), blobs, correct_incorrect(3), model);
    CHECK(uniform[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(uniform[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));

    // Fully refined: summing over predictions recovers label frequencies.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    LabelledDataset ten(2, 3);
    std::vector<double> counts(3, 0.0);
    for (int i = 0; i < 10; ++i) {
        const int y = static_cast<int>(rng() % 3);
        counts[y] += 1.0;
        ten.add_row(std::vector<double>{n(rng), n(rng)}, y);
    }
    std::vector<double> theta(9);
    for (double& v : theta) v = n(rng);
    const ErrorPartition refined = weighted_refined(3);
    const SimplexVector fr = soft_risk_vector(theta, ten, refined, model);
    for (int truth = 0; truth < 3; ++truth) {
        double marginal = 0.0;
        for (int pred = 0; pred < 3; ++pred) marginal += fr[refined.type_of(pred, truth)];
        CHECK(marginal == doctest::Approx(counts[truth] / 10.0).epsilon(1e-14));
    }
    double total = 0.0;
    for (double v : fr.values()) total += v;
    CHECK(std::abs(total - 1.0) <= 1e-12);

    CHECK_THROWS_AS(soft_risk_vector(theta, LabelledDataset(2, 3), refined, model), InvalidArgument);
    CHECK_THROWS_AS(soft_risk_vector(std::vector<double>(5), ten, refined, model), InvalidArgument);

    const RiskJacobian rj = soft_risk_jacobian(theta, ten, refined, model);
    REQUIRE(rj.risks.size() == fr.size());
    for (std::size_t j = 0; j < fr.size(); ++j) CHECK(std::abs(rj.risks[j] - fr[j]) <= 1e-15);
    CHECK(rj.jacobian.size() == 9 * 9);
}

TEST_CASE("budget derivatives") {
    const LabelledDataset data = make_gaussian_blobs(60, 3, 2, 2.0, 4);
    const AffineSoftmax model(2, 3);
    const ErrorPartition part = weighted_refined(3);
    const std::size_t N = model.num_params();
    const PriorSpec prior{std::vector<double>(N, 0.1), std::vector<double>(N, 0.7), PriorProvenance::Fixed};
    TrainConfig cfg;
    const TrainingContext ctx{model, part, prior, 60, cfg};

    std::mt19937_64 rng(5);
    const GaussianPosterior q = random_posterior(rng, N, -2.0);
    const std::vector<double> eps(N, 0.3);
    const ObjectiveEvaluation e = evaluate_bound_objective(q, eps, data, ctx, true);
    const std::size_t cols = 10;
    REQUIRE(e.jacobian.size() == 2 * N * cols);

    const double h = 1e-6;
    for (std::size_t i = 0; i < 2 * N; ++i) {
        GaussianPosterior plus = q;
        GaussianPosterior minus = q;
        (i < N ? plus.mean[i] : plus.log_var[i - N]) += h;
        (i < N ? minus.mean[i] : minus.log_var[i - N]) -= h;
        const double fd = (gaussian_kl(plus, prior) - gaussian_kl(minus, prior)) / (2 * h * 60);
        const double analytic = e.jacobian[i * cols + 9];
        CHECK(std::abs(fd - analytic) <= 1e-5 * std::max(std::abs(analytic), 1e-6));
    }
}

TEST_CASE("gradient chain against finite differences") {
    const LabelledDataset data = make_gaussian_blobs(90, 3, 2, 2.0, 6);
    const AffineSoftmax model(2, 3);
    const ErrorPartition part = weighted_refined(3);
    const std::size_t N = model.num_params();
    TrainConfig cfg;
    cfg.mc_draws = 2;
    const PriorSpec prior{std::vector<double>(N, 0.0), std::vector<double>(N, 1.0), PriorProvenance::Fixed};
    const TrainingContext analytic{model, part, prior, 90, cfg};
    cfg.gradient_mode = GradientMode::FiniteDifference;
    const TrainingContext numeric{model, part, prior, 90, cfg};

    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 3; ++t) {
        const GaussianPosterior q = random_posterior(rng, N, -1.5);
        std::vector<double> eps(2 * N);
        for (double& v : eps) v = n(rng);
        const auto a = evaluate_bound_objective(q, eps, data, analytic, true);
        const auto f = evaluate_bound_objective(q, eps, data, numeric, true);
        CHECK(a.diagnostics.f_star == doctest::Approx(f.diagnostics.f_star).epsilon(1e-14));
        double scale = 0.0;
        for (double g : a.gradient) scale = std::max(scale, std::abs(g));
        for (std::size_t i = 0; i < 2 * N; ++i) CHECK(std::abs(a.gradient[i] - f.gradient[i]) <= 1e-3 * scale);
    }
}

TEST_CASE("single step: analytic and finite-difference modes agree") {
    const LabelledDataset data = make_gaussian_blobs(80, 4, 4, 2.5, 8);
    const AffineSoftmax model(4, 4);
    REQUIRE(model.num_params() == 20);
    std::vector<double> losses(16, 1.0);
    for (int c = 0; c < 4; ++c) losses[c * 4 + c] = 0.0;
    const ErrorPartition part = ErrorPartition::fully_refined(4, LossVector(losses));
    const PriorSpec prior{std::vector<double>(20, 0.0), std::vector<double>(20, 1.0), PriorProvenance::Fixed};
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    const TrainingContext a_ctx{model, part, prior, 80, cfg};
    cfg.gradient_mode = GradientMode::FiniteDifference;
    const TrainingContext f_ctx{model, part, prior, 80, cfg};

    std::mt19937_64 rng(9);
    const GaussianPosterior q0 = random_posterior(rng, 20, -2.0);
    TrainState a{q0, std::mt19937_64(42)};
    TrainState f{q0, std::mt19937_64(42)};
    training_step(a, data, a_ctx);
    training_step(f, data, f_ctx);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(std::abs(a.posterior.mean[i] - f.posterior.mean[i]) <= 1e-4);
        CHECK(std::abs(a.posterior.log_var[i] - f.posterior.log_var[i]) <= 1e-4);
    }

    cfg.gradient_mode = GradientMode::Analytic;
    cfg.learning_rate = 0.0;
    const TrainingContext frozen{model, part, prior, 80, cfg};
    TrainState z{q0, std::mt19937_64(1)};
    const StepDiagnostics d = training_step(z, data, frozen);
    CHECK(z.posterior.mean == q0.mean);
    CHECK(z.posterior.log_var == q0.log_var);
    CHECK(d.grad_norm > 0.0);
    CHECK(std::isfinite(d.f_star));
    CHECK(std::abs(std::accumulate(d.u.begin(), d.u.end(), 0.0) - 1.0) <= 1e-12);
}

TEST_CASE("boundary risks and non-finite gradients") {
    LabelledDataset data(1, 2);
    for (int i = 0; i < 10; ++i) data.add_row(std::vector<double>{static_cast<double>(i % 2)}, i % 2);
    const LookupModel perfect(2, 3);
    const ErrorPartition part = correct_incorrect(2);
    const PriorSpec prior{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0), PriorProvenance::Fixed};
    TrainConfig cfg;
    const GaussianPosterior q{std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
    const std::vector<double> eps(3, 0.0);

    const TrainingContext skip{perfect, part, prior, 10, cfg};
    const auto skipped = evaluate_bound_objective(q, eps, data, skip, true);
    CHECK(skipped.diagnostics.skipped);
    TrainState s{q, std::mt19937_64(0)};
    CHECK(training_step(s, data, skip).skipped);
    CHECK(s.posterior.mean == q.mean);

    cfg.smoothing_alpha = 1.0;
    const TrainingContext smooth{perfect, part, prior, 10, cfg};
    const auto smoothed = evaluate_bound_objective(q, eps, data, smooth, true);
    CHECK(smoothed.diagnostics.smoothed);
    CHECK(smoothed.diagnostics.u[1] == doctest::Approx(1.0 / 12).epsilon(1e-15));
    CHECK(std::isfinite(smoothed.diagnostics.f_star));

    const PoisonedJacobian poisoned(1, 2);
    const TrainingContext bad{poisoned, part, PriorSpec{std::vector<double>(4, 0.0), std::vector<double>(4, 1.0),
                                                        PriorProvenance::Fixed},
                              10, TrainConfig{}};
    TrainState b{GaussianPosterior{std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)}, std::mt19937_64(0)};
    CHECK_THROWS_AS(training_step(b, data, bad), TrainingFailure);
}

TEST_CASE("training loop") {
    const LabelledDataset data = make_gaussian_blobs(150, 3, 2, 3.0, 10);
    const ErrorPartition part = weighted_refined(3);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 3;
    const TrainResult none = train(data, part, cfg);
    CHECK(none.history.empty());
    CHECK(certificate_to_string(none.certificate) == certificate_to_string(none.initial_certificate));
    CHECK(none.posterior.mean == none.prior.mean);
    CHECK(none.bound_rows.size() == 150);

    cfg.epochs = 30;
    const TrainResult a = train(data, part, cfg);
    const TrainResult b = train(data, part, cfg);
    CHECK(history_to_jsonl(a.history) == history_to_jsonl(b.history));
    CHECK(certificate_to_string(a.certificate) == certificate_to_string(b.certificate));
    CHECK(a.history.size() == 30);
    CHECK(revalidate_certificate(certificate_to_string(a.certificate)));
    CHECK(*a.certificate.total_risk_bound < *a.initial_certificate.total_risk_bound);

    cfg.batch_size = 32;
    cfg.epochs = 3;
    const TrainResult mini = train(data, part, cfg);
    CHECK(mini.history[0].steps == 5);
    CHECK(mini.certificate.inputs.m == 150);
}

TEST_CASE("prior isolation") {
    LabelledDataset data = make_gaussian_blobs(120, 3, 2, 3.0, 11);
    const ErrorPartition part = weighted_refined(3);
    TrainConfig cfg;
    cfg.prior_policy = PriorPolicy::TrainedOnPriorSplit;
    cfg.prior_split = 0.4;
    cfg.epochs = 2;
    cfg.seed = 21;
    const TrainResult clean = train(data, part, cfg);
    CHECK(clean.prior.provenance == PriorProvenance::TrainedOnPriorSplit);
    CHECK(clean.prior_rows.size() == 48);
    CHECK(clean.bound_rows.size() == 72);
    CHECK(clean.certificate.inputs.m == 72);

    // Replace every S_Bound row with a sentinel; the prior must not move.
    const auto [prior_rows, bound_rows] = split_rows(data.size(), 0.4, 21);
    CHECK(prior_rows == clean.prior_rows);
    LabelledDataset tainted(2, 3);
    std::size_t next_bound = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (next_bound < bound_rows.size() && bound_rows[next_bound] == r) {
            tainted.add_row(std::vector<double>{4.0, -4.0}, data.label(r));
            ++next_bound;
        } else {
            tainted.add_row(data.features(r), data.label(r));
        }
    }
    const TrainResult dirty = train(tainted, part, cfg);
    CHECK(dirty.prior.mean == clean.prior.mean);
    CHECK(dirty.prior.var == clean.prior.var);
    CHECK_FALSE(dirty.posterior.mean == clean.posterior.mean);

    CHECK_THROWS_AS(split_rows(10, 0.0, 1), InvalidArgument);
    CHECK_THROWS_AS(split_rows(1, 0.5, 1), InvalidArgument);
}

TEST_CASE("csv, partition and config parsing") {
    const LabelledDataset d = parse_csv_dataset("x1,x2,label\n0.5,1.5,0\n-1,2e-3,2\n\n3,4,1\n");
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.num_classes() == 3);
    CHECK(d.features(1)[1] == 2e-3);
    CHECK(d.label(2) == 1);
    CHECK_THROWS_AS(parse_csv_dataset("x,label\n1,2,3\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_csv_dataset("x,label\n1,a\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_csv_dataset("x,label\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_csv_dataset("x,label\n1,5\n", 3), InvalidArgument);

    const ErrorPartition p = parse_partition(Json::parse(R"({
        "num_classes": 3,
        "cells": [{"type": 0, "cells": "diagonal"},
                  {"type": 1, "cells": "off-diagonal"},
                  {"type": 2, "cells": [[0, 1], [0, 2]]}],
        "losses": [0, 1, 2]})"));
    CHECK(p.type_of(1, 1) == 0);
    CHECK(p.type_of(2, 0) == 1);
    CHECK(p.type_of(0, 2) == 2);
    CHECK(parse_partition(Json::parse(R"({"num_classes": 2, "fully_refined": true, "losses": [0,1,1,0]})"))
              .num_types() == 4);
    CHECK_THROWS_AS(parse_partition(Json::parse(R"({"num_classes": 2, "cells": [{"type": 0, "cells": "diagonal"}],
                                                    "losses": [0, 1]})")),
                    InvalidArgument);
    CHECK_THROWS_AS(parse_partition(Json::parse(R"({"num_classes": 2, "cells": [{"type": 0, "cells": "diagonal"},
                                                    {"type": 2, "cells": "off-diagonal"}], "losses": [0, 1]})")),
                    InvalidArgument);
    CHECK_THROWS_AS(parse_partition(Json::parse(R"({"num_classes": 2, "cells": [{"type": 0, "cells": "all"}],
                                                    "losses": [0, 1]})")),
                    InvalidArgument);

    const TrainConfig c = parse_train_config(Json::parse(
        R"({"epochs": 7, "mode": "exact", "gradient_mode": "finite-difference",
            "prior_policy": "trained-on-prior-split", "smoothing_alpha": 0.5, "seed": 9})"));
    CHECK(c.epochs == 7);
    CHECK(c.mode == ConstantMode::Exact);
    CHECK(c.gradient_mode == GradientMode::FiniteDifference);
    CHECK(c.prior_policy == PriorPolicy::TrainedOnPriorSplit);
    CHECK(*c.smoothing_alpha == 0.5);
    CHECK(c.seed == 9);
    CHECK_THROWS_AS(parse_train_config(Json::parse(R"({"epoch": 7})")), InvalidArgument);
    CHECK_THROWS_AS(parse_train_config(Json::parse(R"({"epochs": "many"})")), InvalidArgument);
}
