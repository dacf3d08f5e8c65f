#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pbcert/constants.hpp"
#include "pbcert/model.hpp"
#include "pbcert/risk_bounds.hpp"
#include "pbcert/simplex.hpp"

namespace pbcert {

/// Q = N(mean, diag(exp(log_var))).
struct GaussianPosterior {
    std::vector<double> mean;
    std::vector<double> log_var;

    std::size_t size() const noexcept { return mean.size(); }
    void validate() const;
};

enum class PriorProvenance { Fixed, TrainedOnPriorSplit };

/// P = N(mean, diag(var)).
struct PriorSpec {
    std::vector<double> mean;
    std::vector<double> var;
    PriorProvenance provenance = PriorProvenance::Fixed;

    std::size_t size() const noexcept { return mean.size(); }
    void validate() const;
};

/// Rows of (feature vector, class label), stored row-major.
class LabelledDataset {
public:
    LabelledDataset(std::size_t dim, int num_classes);
    LabelledDataset(std::size_t dim, int num_classes, std::vector<double> features, std::vector<int> labels);

    void add_row(std::span<const double> x, int label);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    int num_classes() const noexcept { return classes_; }

    std::span<const double> features(std::size_t row) const noexcept {
        return {features_.data() + row * dim_, dim_};
    }
    int label(std::size_t row) const noexcept { return labels_[row]; }

    LabelledDataset subset(std::span<const std::size_t> rows) const;

private:
    std::size_t dim_;
    int classes_;
    std::vector<double> features_;
    std::vector<int> labels_;
};

/// Map from (predicted, true) label pairs to error types, plus their losses.
class ErrorPartition {
public:
    /// `table[pred * C + truth]` is the error type of that cell.
    ErrorPartition(int num_classes, std::vector<int> table, LossVector losses);

    /// Every cell its own type: type = pred * C + truth.
    static ErrorPartition fully_refined(int num_classes, LossVector losses);

    int num_classes() const noexcept { return classes_; }
    int num_types() const noexcept { return static_cast<int>(losses_.size()); }
    int type_of(int predicted, int truth) const noexcept { return table_[predicted * classes_ + truth]; }
    const LossVector& losses() const noexcept { return losses_; }
    const std::vector<int>& table() const noexcept { return table_; }

private:
    int classes_;
    std::vector<int> table_;
    LossVector losses_;
};

enum class GradientMode { Analytic, FiniteDifference };
enum class PriorPolicy { Fixed, TrainedOnPriorSplit };

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 0.05;
    double delta = 0.05;
    ConstantMode mode = ConstantMode::Stirling;
    std::uint64_t seed = 0;
    GradientMode gradient_mode = GradientMode::Analytic;
    double fd_step = 1e-6;

    PriorPolicy prior_policy = PriorPolicy::Fixed;
    double prior_split = 0.5;       ///< fraction of rows in S_Prior when the prior is trained
    double prior_var = 1.0;
    int prior_epochs = 100;
    double prior_learning_rate = 0.5;

    std::optional<double> init_var;  ///< initial posterior variance; defaults to prior_var
    std::size_t batch_size = 0;      ///< 0 = full batch
    int mc_draws = 1;                ///< epsilon draws averaged per step
    std::optional<double> smoothing_alpha;  ///< boundary risk policy; unset = skip the step
    int certificate_samples = 100;   ///< draws used to estimate R_S(Q) for certificates
};

double gaussian_kl(const GaussianPosterior& q, const PriorSpec& p);

/// theta = mean + eps * sqrt(exp(log_var)).
std::vector<double> pathwise_sample(const GaussianPosterior& q, std::span<const double> eps);

/// R_S^j(h_theta): mean mass h_theta puts on predictions of error type j.
SimplexVector soft_risk_vector(std::span<const double> theta, const LabelledDataset& data,
                               const ErrorPartition& part, const SoftClassifier& model);

/// Same risks plus d R^j / d theta (row-major M x N).
struct RiskJacobian {
    std::vector<double> risks;
    std::vector<double> jacobian;
};
RiskJacobian soft_risk_jacobian(std::span<const double> theta, const LabelledDataset& data,
                                const ErrorPartition& part, const SoftClassifier& model);

/// Fixed ingredients of one training run.
struct TrainingContext {
    const SoftClassifier& model;
    const ErrorPartition& partition;
    PriorSpec prior;
    int bound_sample_size;  ///< m in the budget: |S_Bound|
    TrainConfig config;
};

struct StepDiagnostics {
    std::vector<double> u;
    double kl_qp = 0.0;
    double budget = 0.0;
    double f_star = 0.0;
    double lambda_star = 0.0;
    double grad_norm = 0.0;
    bool skipped = false;
    bool smoothed = false;
};

/// Objective f*(u(p), B(p)) and, when requested, its gradient H = G F with
/// respect to p = mean (+) log_var, for fixed noise `eps` (mc_draws * N values).
struct ObjectiveEvaluation {
    StepDiagnostics diagnostics;
    std::vector<double> gradient;  ///< empty unless requested
    std::vector<double> jacobian;  ///< G, row-major 2N x (M+1); analytic mode only
};

ObjectiveEvaluation evaluate_bound_objective(const GaussianPosterior& q, std::span<const double> eps,
                                             const LabelledDataset& batch, const TrainingContext& ctx,
                                             bool with_gradient = true);

struct TrainState {
    GaussianPosterior posterior;
    std::mt19937_64 rng;
};

/// One loop body: draw eps, evaluate the bound and its gradient, step.
StepDiagnostics training_step(TrainState& state, const LabelledDataset& batch, const TrainingContext& ctx);

struct EpochRecord {
    int epoch;
    int steps;
    StepDiagnostics last;
};

struct TrainResult {
    GaussianPosterior posterior;
    PriorSpec prior;
    BoundCertificate initial_certificate;
    BoundCertificate certificate;
    std::vector<EpochRecord> history;
    std::vector<std::size_t> prior_rows;
    std::vector<std::size_t> bound_rows;
};

/// Deterministic shuffled split of row indices into (S_Prior, S_Bound).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t rows, double prior_fraction,
                                                                         std::uint64_t seed);

/// Prior mean by gradient descent on the soft misclassification risk over
/// `prior_data`; variances fixed at config.prior_var.
PriorSpec train_prior(const LabelledDataset& prior_data, const SoftClassifier& model, const TrainConfig& config);

/// Monte Carlo estimate of R_S(Q) with `draws` pathwise samples.
SimplexVector estimate_posterior_risk(const GaussianPosterior& q, const LabelledDataset& data,
                                      const ErrorPartition& part, const SoftClassifier& model, int draws,
                                      std::uint64_t seed);

/// Certificate for Q evaluated on S_Bound.
BoundCertificate posterior_certificate(const GaussianPosterior& q, const LabelledDataset& bound_data,
                                       const TrainingContext& ctx);

/// Full training loop with the affine-softmax reference model.
TrainResult train(const LabelledDataset& data, const ErrorPartition& part, const TrainConfig& config);
TrainResult train(const LabelledDataset& data, const ErrorPartition& part, const TrainConfig& config,
                  const SoftClassifier& model);

/// Isotropic Gaussian clusters, one per class, centres on a circle of radius
/// `separation`.
LabelledDataset make_gaussian_blobs(std::size_t rows, int num_classes, std::size_t dim, double separation,
                                    std::uint64_t seed);

}  // namespace pbcert
