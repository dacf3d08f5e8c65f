#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pbcert {

/// A parametric soft hypothesis h_theta : R^d -> distributions over C classes.
class SoftClassifier {
public:
    virtual ~SoftClassifier() = default;

    virtual std::size_t num_params() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual int num_classes() const = 0;

    /// Writes h_theta(x) into `probs` (length num_classes()).
    virtual void forward(std::span<const double> theta, std::span<const double> x,
                         std::span<double> probs) const = 0;

    /// d probs[c] / d theta[n], row-major C x N. The default uses central
    /// finite differences; models with an analytic Jacobian override it.
    virtual void jacobian(std::span<const double> theta, std::span<const double> x,
                          std::span<double> jac) const;

    /// Step used by the finite-difference Jacobian.
    double fd_step = 1e-6;
};

/// softmax(W x + b) with theta = (W row-major [C x d], b [C]).
class AffineSoftmax final : public SoftClassifier {
public:
    AffineSoftmax(std::size_t input_dim, int num_classes);

    std::size_t num_params() const override { return static_cast<std::size_t>(classes_) * (dim_ + 1); }
    std::size_t input_dim() const override { return dim_; }
    int num_classes() const override { return classes_; }

    void forward(std::span<const double> theta, std::span<const double> x,
                 std::span<double> probs) const override;
    void jacobian(std::span<const double> theta, std::span<const double> x,
                  std::span<double> jac) const override;

private:
    std::size_t dim_;
    int classes_;
};

/// Convenience wrapper around AffineSoftmax::forward; the class count is
/// inferred from theta.size() = C (d + 1).
std::vector<double> reference_model_forward(std::span<const double> theta, std::span<const double> x);

}  // namespace pbcert
