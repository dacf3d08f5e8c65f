#include "pbcert/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>

#include "pbcert/error.hpp"
#include "pbcert/kl_inverse.hpp"

namespace pbcert {

namespace {

// Offsets that decorrelate the auxiliary streams from the step noise stream.
constexpr std::uint64_t kBatchStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kCertificateStream = 0xd1b54a32d192ed03ULL;

void require(bool ok, const char* message) {
    if (!ok) throw InvalidArgument(message);
}

std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(n);
    for (double& x : out) x = normal(rng);
    return out;
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain types

void GaussianPosterior::validate() const {
    require(!mean.empty(), "posterior has no parameters");
    require(mean.size() == log_var.size(), "posterior mean and log-variance differ in length");
    for (std::size_t n = 0; n < mean.size(); ++n) {
        require(std::isfinite(mean[n]) && std::isfinite(log_var[n]), "posterior parameters must be finite");
    }
}

void PriorSpec::validate() const {
    require(!mean.empty(), "prior has no parameters");
    require(mean.size() == var.size(), "prior mean and variance differ in length");
    for (std::size_t n = 0; n < mean.size(); ++n) {
        require(std::isfinite(mean[n]), "prior mean must be finite");
        require(var[n] > 0.0 && std::isfinite(var[n]), "prior variances must be positive");
    }
}

LabelledDataset::LabelledDataset(std::size_t dim, int num_classes) : dim_(dim), classes_(num_classes) {
    require(dim >= 1, "dataset needs at least one feature");
    require(num_classes >= 2, "dataset needs at least two classes");
}

LabelledDataset::LabelledDataset(std::size_t dim, int num_classes, std::vector<double> features,
                                 std::vector<int> labels)
    : LabelledDataset(dim, num_classes) {
    require(features.size() == labels.size() * dim, "feature matrix does not match label count");
    for (int y : labels) require(y >= 0 && y < num_classes, "label out of range");
    features_ = std::move(features);
    labels_ = std::move(labels);
}

void LabelledDataset::add_row(std::span<const double> x, int label) {
    require(x.size() == dim_, "row has the wrong feature dimension");
    require(label >= 0 && label < classes_, "label out of range");
    features_.insert(features_.end(), x.begin(), x.end());
    labels_.push_back(label);
}

LabelledDataset LabelledDataset::subset(std::span<const std::size_t> rows) const {
    LabelledDataset out(dim_, classes_);
    out.features_.reserve(rows.size() * dim_);
    out.labels_.reserve(rows.size());
    for (std::size_t r : rows) {
        require(r < size(), "subset row out of range");
        out.add_row(features(r), label(r));
    }
    return out;
}

ErrorPartition::ErrorPartition(int num_classes, std::vector<int> table, LossVector losses)
    : classes_(num_classes), table_(std::move(table)), losses_(std::move(losses)) {
    require(num_classes >= 2, "partition needs at least two classes");
    require(table_.size() == static_cast<std::size_t>(num_classes) * num_classes,
            "partition table must cover every (predicted, true) pair");
    std::vector<bool> used(losses_.size(), false);
    for (int j : table_) {
        require(j >= 0 && j < num_types(), "partition maps a cell to an unknown error type");
        used[j] = true;
    }
    require(std::all_of(used.begin(), used.end(), [](bool b) { return b; }),
            "every error type must own at least one cell");
}

ErrorPartition ErrorPartition::fully_refined(int num_classes, LossVector losses) {
    std::vector<int> table(static_cast<std::size_t>(num_classes) * num_classes);
    std::iota(table.begin(), table.end(), 0);
    return ErrorPartition(num_classes, std::move(table), std::move(losses));
}

// ---------------------------------------------------------------------------
// Gaussian pieces

double gaussian_kl(const GaussianPosterior& q, const PriorSpec& p) {
    q.validate();
    p.validate();
    require(q.size() == p.size(), "posterior and prior differ in dimension");
    double sum = 0.0;
    for (std::size_t n = 0; n < q.size(); ++n) {
        const double s = std::exp(q.log_var[n]);
        const double d = q.mean[n] - p.mean[n];
        sum += s / p.var[n] + d * d / p.var[n] + std::log(p.var[n]) - q.log_var[n] - 1.0;
    }
    return std::max(0.5 * sum, 0.0);
}

std::vector<double> pathwise_sample(const GaussianPosterior& q, std::span<const double> eps) {
    require(eps.size() == q.size(), "noise vector has the wrong length");
    std::vector<double> theta(q.size());
    for (std::size_t n = 0; n < q.size(); ++n) {
        theta[n] = q.mean[n] + eps[n] * std::exp(0.5 * q.log_var[n]);
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Risks

namespace {

void check_model(const LabelledDataset& data, const ErrorPartition& part, const SoftClassifier& model,
                 std::size_t theta_size) {
    require(!data.empty(), "dataset is empty");
    require(model.num_params() == theta_size, "theta does not match the model size");
    require(model.input_dim() == data.dim(), "model input dimension does not match the data");
    require(model.num_classes() == data.num_classes(), "model class count does not match the data");
    require(part.num_classes() == data.num_classes(), "partition class count does not match the data");
}

}  // namespace

SimplexVector soft_risk_vector(std::span<const double> theta, const LabelledDataset& data,
                               const ErrorPartition& part, const SoftClassifier& model) {
    check_model(data, part, model, theta.size());
    const int C = data.num_classes();
    std::vector<double> risks(static_cast<std::size_t>(part.num_types()), 0.0);
    std::vector<double> probs(static_cast<std::size_t>(C));
    for (std::size_t r = 0; r < data.size(); ++r) {
        model.forward(theta, data.features(r), probs);
        const int y = data.label(r);
        for (int pred = 0; pred < C; ++pred) risks[part.type_of(pred, y)] += probs[pred];
    }
    for (double& x : risks) x /= static_cast<double>(data.size());
    return SimplexVector(std::move(risks));
}

RiskJacobian soft_risk_jacobian(std::span<const double> theta, const LabelledDataset& data,
                                const ErrorPartition& part, const SoftClassifier& model) {
    check_model(data, part, model, theta.size());
    const int C = data.num_classes();
    const std::size_t N = theta.size();
    const auto M = static_cast<std::size_t>(part.num_types());
    RiskJacobian out{std::vector<double>(M, 0.0), std::vector<double>(M * N, 0.0)};
    std::vector<double> probs(static_cast<std::size_t>(C));
    std::vector<double> jac(static_cast<std::size_t>(C) * N);
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto x = data.features(r);
        model.forward(theta, x, probs);
        model.jacobian(theta, x, jac);
        const int y = data.label(r);
        for (int pred = 0; pred < C; ++pred) {
            const auto j = static_cast<std::size_t>(part.type_of(pred, y));
            out.risks[j] += probs[pred];
            const double* src = jac.data() + static_cast<std::size_t>(pred) * N;
            double* dst = out.jacobian.data() + j * N;
            for (std::size_t n = 0; n < N; ++n) dst[n] += src[n];
        }
    }
    const double inv_m = 1.0 / static_cast<double>(data.size());
    for (double& x : out.risks) x *= inv_m;
    for (double& x : out.jacobian) x *= inv_m;
    return out;
}

// ---------------------------------------------------------------------------
// Objective and its gradient

namespace {

struct RiskPoint {
    std::vector<double> u;
    std::vector<double> du;  // M x 2N, d u_j / d p_i (empty if not requested)
};

// Empirical risk of h_{w + eps (.) sqrt(exp(zeta))}, averaged over the draws in eps.
RiskPoint stochastic_risk(const GaussianPosterior& q, std::span<const double> eps, const LabelledDataset& batch,
                          const TrainingContext& ctx, bool with_jacobian) {
    const std::size_t N = q.size();
    const auto M = static_cast<std::size_t>(ctx.partition.num_types());
    const std::size_t draws = eps.size() / N;
    RiskPoint out{std::vector<double>(M, 0.0), {}};
    if (with_jacobian) out.du.assign(M * 2 * N, 0.0);

    for (std::size_t k = 0; k < draws; ++k) {
        const auto e = eps.subspan(k * N, N);
        const std::vector<double> theta = pathwise_sample(q, e);
        if (!with_jacobian) {
            const SimplexVector r = soft_risk_vector(theta, batch, ctx.partition, ctx.model);
            for (std::size_t j = 0; j < M; ++j) out.u[j] += r[j];
            continue;
        }
        const RiskJacobian rj = soft_risk_jacobian(theta, batch, ctx.partition, ctx.model);
        for (std::size_t j = 0; j < M; ++j) {
            out.u[j] += rj.risks[j];
            for (std::size_t n = 0; n < N; ++n) {
                const double d_theta = rj.jacobian[j * N + n];
                // d theta_n / d w_n = 1, d theta_n / d zeta_n = eps_n * exp(zeta_n / 2) / 2
                out.du[j * 2 * N + n] += d_theta;
                out.du[j * 2 * N + N + n] += d_theta * e[n] * 0.5 * std::exp(0.5 * q.log_var[n]);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(draws);
    for (double& x : out.u) x *= inv;
    for (double& x : out.du) x *= inv;
    return out;
}

double log_constant_for(const TrainingContext& ctx) {
    return log_I_kl(ctx.bound_sample_size, ctx.partition.num_types(), ctx.config.mode);
}

// Bound objective at fixed noise; jacobian/gradient filled when requested.
ObjectiveEvaluation analytic_objective(const GaussianPosterior& q, std::span<const double> eps,
                                       const LabelledDataset& batch, const TrainingContext& ctx,
                                       bool with_gradient) {
    const std::size_t N = q.size();
    const auto M = static_cast<std::size_t>(ctx.partition.num_types());
    const double m_bound = ctx.bound_sample_size;

    RiskPoint risk = stochastic_risk(q, eps, batch, ctx, with_gradient);
    ObjectiveEvaluation out;
    StepDiagnostics& diag = out.diagnostics;

    diag.kl_qp = gaussian_kl(q, ctx.prior);
    diag.budget = (diag.kl_qp + log_constant_for(ctx) - std::log(ctx.config.delta)) / m_bound;

    SimplexVector u(risk.u);
    if (!u.interior()) {
        if (!ctx.config.smoothing_alpha) {
            diag.u = u.vec();
            diag.skipped = true;
            diag.f_star = std::numeric_limits<double>::quiet_NaN();
            if (with_gradient) out.gradient.assign(2 * N, 0.0);
            return out;
        }
        const double alpha = *ctx.config.smoothing_alpha;
        const auto batch_m = static_cast<int>(batch.size());
        u = smooth_risk(u, batch_m, alpha);
        const double shrink = batch_m / (batch_m + static_cast<double>(M) * alpha);
        for (double& x : risk.du) x *= shrink;
        diag.smoothed = true;
    }
    diag.u = u.vec();

    const TiltedSolution sol = kl_inverse_total(u, diag.budget, ctx.partition.losses());
    diag.f_star = sol.f_star;
    diag.lambda_star = sol.lambda_star;
    if (!with_gradient) return out;

    // F = (d f*/d u_1 .. d f*/d u_M, d f*/d B)
    std::vector<double> F(sol.grad_u);
    F.push_back(sol.grad_c);

    // G[i][j] = d u~_j / d p_i, p = w (+) zeta, u~ = (u, B)
    const std::size_t cols = M + 1;
    out.jacobian.assign(2 * N * cols, 0.0);
    for (std::size_t i = 0; i < 2 * N; ++i) {
        for (std::size_t j = 0; j < M; ++j) out.jacobian[i * cols + j] = risk.du[j * 2 * N + i];
    }
    for (std::size_t n = 0; n < N; ++n) {
        const double r = ctx.prior.var[n];
        out.jacobian[n * cols + M] = (q.mean[n] - ctx.prior.mean[n]) / (r * m_bound);
        out.jacobian[(N + n) * cols + M] = 0.5 * (std::exp(q.log_var[n]) / r - 1.0) / m_bound;
    }

    out.gradient.assign(2 * N, 0.0);
    for (std::size_t i = 0; i < 2 * N; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < cols; ++j) h += out.jacobian[i * cols + j] * F[j];
        out.gradient[i] = h;
    }
    diag.grad_norm = norm2(out.gradient);
    return out;
}

}  // namespace

ObjectiveEvaluation evaluate_bound_objective(const GaussianPosterior& q, std::span<const double> eps,
                                             const LabelledDataset& batch, const TrainingContext& ctx,
                                             bool with_gradient) {
    q.validate();
    require(q.size() == ctx.model.num_params(), "posterior size does not match the model");
    require(!eps.empty() && eps.size() % q.size() == 0, "noise must hold a whole number of draws");
    require(ctx.bound_sample_size >= 1, "bound sample size must be >= 1");

    if (!with_gradient || ctx.config.gradient_mode == GradientMode::Analytic) {
        return analytic_objective(q, eps, batch, ctx, with_gradient);
    }

    ObjectiveEvaluation out = analytic_objective(q, eps, batch, ctx, false);
    const std::size_t N = q.size();
    out.gradient.assign(2 * N, 0.0);
    if (out.diagnostics.skipped) return out;

    const double h = ctx.config.fd_step;
    GaussianPosterior shifted = q;
    auto value_at = [&](std::size_t i, double delta) {
        double& slot = i < N ? shifted.mean[i] : shifted.log_var[i - N];
        const double saved = slot;
        slot = saved + delta;
        const ObjectiveEvaluation e = analytic_objective(shifted, eps, batch, ctx, false);
        slot = saved;
        if (e.diagnostics.skipped) throw BoundaryRisk("finite-difference probe hit a boundary risk vector");
        return e.diagnostics.f_star;
    };
    for (std::size_t i = 0; i < 2 * N; ++i) {
        out.gradient[i] = (value_at(i, h) - value_at(i, -h)) / (2.0 * h);
    }
    out.diagnostics.grad_norm = norm2(out.gradient);
    return out;
}

StepDiagnostics training_step(TrainState& state, const LabelledDataset& batch, const TrainingContext& ctx) {
    const std::size_t N = state.posterior.size();
    const auto draws = static_cast<std::size_t>(std::max(1, ctx.config.mc_draws));
    const std::vector<double> eps = standard_normal(state.rng, N * draws);

    ObjectiveEvaluation eval = evaluate_bound_objective(state.posterior, eps, batch, ctx, true);
    if (eval.diagnostics.skipped) return eval.diagnostics;

    const bool finite = std::isfinite(eval.diagnostics.f_star) &&
                        std::all_of(eval.gradient.begin(), eval.gradient.end(),
                                    [](double g) { return std::isfinite(g); });
    if (!finite) {
        std::ostringstream msg;
        msg << "non-finite bound gradient: f*=" << eval.diagnostics.f_star << " B=" << eval.diagnostics.budget
            << " lambda*=" << eval.diagnostics.lambda_star << " KL=" << eval.diagnostics.kl_qp;
        throw TrainingFailure(msg.str());
    }

    const double lr = ctx.config.learning_rate;
    for (std::size_t n = 0; n < N; ++n) {
        state.posterior.mean[n] -= lr * eval.gradient[n];
        state.posterior.log_var[n] -= lr * eval.gradient[N + n];
    }
    return eval.diagnostics;
}

// ---------------------------------------------------------------------------
// Training loop

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t rows, double prior_fraction,
                                                                         std::uint64_t seed) {
    require(prior_fraction > 0.0 && prior_fraction < 1.0, "prior split fraction must lie in (0,1)");
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_prior = static_cast<std::size_t>(std::floor(prior_fraction * static_cast<double>(rows)));
    require(n_prior >= 1 && n_prior < rows, "split leaves S_Prior or S_Bound empty");
    std::vector<std::size_t> prior(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_prior));
    std::vector<std::size_t> bound(order.begin() + static_cast<std::ptrdiff_t>(n_prior), order.end());
    std::sort(prior.begin(), prior.end());
    std::sort(bound.begin(), bound.end());
    return {std::move(prior), std::move(bound)};
}

PriorSpec train_prior(const LabelledDataset& prior_data, const SoftClassifier& model, const TrainConfig& config) {
    require(!prior_data.empty(), "prior sample is empty");
    const std::size_t N = model.num_params();
    const auto C = static_cast<std::size_t>(model.num_classes());
    std::vector<double> theta(N, 0.0);
    std::vector<double> jac(C * N);
    std::vector<double> grad(N);
    const double inv_m = 1.0 / static_cast<double>(prior_data.size());
    for (int epoch = 0; epoch < config.prior_epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        // d/dtheta of mean(1 - h(x)[y])
        for (std::size_t r = 0; r < prior_data.size(); ++r) {
            model.jacobian(theta, prior_data.features(r), jac);
            const auto y = static_cast<std::size_t>(prior_data.label(r));
            for (std::size_t n = 0; n < N; ++n) grad[n] -= jac[y * N + n] * inv_m;
        }
        for (std::size_t n = 0; n < N; ++n) theta[n] -= config.prior_learning_rate * grad[n];
    }
    return PriorSpec{std::move(theta), std::vector<double>(N, config.prior_var), PriorProvenance::TrainedOnPriorSplit};
}

SimplexVector estimate_posterior_risk(const GaussianPosterior& q, const LabelledDataset& data,
                                      const ErrorPartition& part, const SoftClassifier& model, int draws,
                                      std::uint64_t seed) {
    require(draws >= 1, "need at least one posterior draw");
    std::mt19937_64 rng(seed);
    std::vector<double> acc(static_cast<std::size_t>(part.num_types()), 0.0);
    for (int k = 0; k < draws; ++k) {
        const std::vector<double> eps = standard_normal(rng, q.size());
        const SimplexVector r = soft_risk_vector(pathwise_sample(q, eps), data, part, model);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r[j];
    }
    for (double& x : acc) x /= draws;
    return SimplexVector(std::move(acc));
}

BoundCertificate posterior_certificate(const GaussianPosterior& q, const LabelledDataset& bound_data,
                                       const TrainingContext& ctx) {
    const PacBayesInputs inputs{
        .m = static_cast<int>(bound_data.size()),
        .delta = ctx.config.delta,
        .kl_qp = gaussian_kl(q, ctx.prior),
        .empirical_risk = estimate_posterior_risk(q, bound_data, ctx.partition, ctx.model,
                                                  ctx.config.certificate_samples,
                                                  ctx.config.seed ^ kCertificateStream),
    };
    CertificateOptions options;
    options.losses = ctx.partition.losses();
    options.smoothing_alpha = ctx.config.smoothing_alpha;
    return build_certificate(inputs, ctx.config.mode, options);
}

TrainResult train(const LabelledDataset& data, const ErrorPartition& part, const TrainConfig& config) {
    const AffineSoftmax model(data.dim(), data.num_classes());
    return train(data, part, config, model);
}

TrainResult train(const LabelledDataset& data, const ErrorPartition& part, const TrainConfig& config,
                  const SoftClassifier& model) {
    require(!data.empty(), "dataset is empty");
    require(config.epochs >= 0, "epochs must be >= 0");
    require(config.learning_rate >= 0.0 && std::isfinite(config.learning_rate), "learning rate must be >= 0");
    require(config.delta > 0.0 && config.delta <= 1.0, "delta must lie in (0, 1]");
    require(config.prior_var > 0.0, "prior variance must be positive");
    require(!config.init_var || *config.init_var > 0.0, "initial posterior variance must be positive");
    require(part.num_classes() == data.num_classes(), "partition class count does not match the data");

    const std::size_t N = model.num_params();
    PriorSpec prior;
    std::vector<std::size_t> prior_rows;
    std::vector<std::size_t> bound_rows;
    if (config.prior_policy == PriorPolicy::TrainedOnPriorSplit) {
        std::tie(prior_rows, bound_rows) = split_rows(data.size(), config.prior_split, config.seed);
        prior = train_prior(data.subset(prior_rows), model, config);
    } else {
        prior = PriorSpec{std::vector<double>(N, 0.0), std::vector<double>(N, config.prior_var),
                          PriorProvenance::Fixed};
        bound_rows.resize(data.size());
        std::iota(bound_rows.begin(), bound_rows.end(), std::size_t{0});
    }
    const LabelledDataset bound_data = data.subset(bound_rows);

    const TrainingContext ctx{model, part, prior, static_cast<int>(bound_data.size()), config};
    TrainState state{
        GaussianPosterior{prior.mean, std::vector<double>(N, std::log(config.init_var.value_or(config.prior_var)))},
        std::mt19937_64(config.seed),
    };
    BoundCertificate initial = posterior_certificate(state.posterior, bound_data, ctx);

    std::mt19937_64 batch_rng(config.seed ^ kBatchStream);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = (config.batch_size == 0 || config.batch_size >= data.size()) ? data.size()
                                                                                          : config.batch_size;

    std::vector<EpochRecord> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord record{epoch, 0, {}};
        if (batch == data.size()) {
            record.last = training_step(state, data, ctx);
            record.steps = 1;
        } else {
            std::shuffle(order.begin(), order.end(), batch_rng);
            for (std::size_t start = 0; start < order.size(); start += batch) {
                const std::size_t stop = std::min(order.size(), start + batch);
                const LabelledDataset mini =
                    data.subset(std::span<const std::size_t>(order.data() + start, stop - start));
                record.last = training_step(state, mini, ctx);
                ++record.steps;
            }
        }
        history.push_back(std::move(record));
    }

    BoundCertificate final_cert = posterior_certificate(state.posterior, bound_data, ctx);
    return TrainResult{
        .posterior = std::move(state.posterior),
        .prior = std::move(prior),
        .initial_certificate = std::move(initial),
        .certificate = std::move(final_cert),
        .history = std::move(history),
        .prior_rows = std::move(prior_rows),
        .bound_rows = std::move(bound_rows),
    };
}

LabelledDataset make_gaussian_blobs(std::size_t rows, int num_classes, std::size_t dim, double separation,
                                    std::uint64_t seed) {
    LabelledDataset data(dim, num_classes);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        const int y = static_cast<int>(r % static_cast<std::size_t>(num_classes));
        const double angle = 2.0 * std::numbers::pi * y / num_classes;
        for (std::size_t i = 0; i < dim; ++i) {
            double centre = 0.0;
            if (dim == 1) {
                centre = separation * y;
            } else if (i == 0) {
                centre = separation * std::cos(angle);
            } else if (i == 1) {
                centre = separation * std::sin(angle);
            }
            x[i] = centre + noise(rng);
        }
        data.add_row(x, y);
    }
    return data;
}

}  // namespace pbcert
