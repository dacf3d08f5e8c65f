#include "pbcert/model.hpp"

#include <algorithm>
#include <cmath>

#include "pbcert/error.hpp"

namespace pbcert {

void SoftClassifier::jacobian(std::span<const double> theta, std::span<const double> x,
                              std::span<double> jac) const {
    const std::size_t n_params = num_params();
    const auto n_classes = static_cast<std::size_t>(num_classes());
    if (theta.size() != n_params || jac.size() != n_classes * n_params) {
        throw InvalidArgument("jacobian: buffer sizes do not match the model");
    }
    std::vector<double> shifted(theta.begin(), theta.end());
    std::vector<double> plus(n_classes);
    std::vector<double> minus(n_classes);
    for (std::size_t n = 0; n < n_params; ++n) {
        shifted[n] = theta[n] + fd_step;
        forward(shifted, x, plus);
        shifted[n] = theta[n] - fd_step;
        forward(shifted, x, minus);
        shifted[n] = theta[n];
        for (std::size_t c = 0; c < n_classes; ++c) {
            jac[c * n_params + n] = (plus[c] - minus[c]) / (2.0 * fd_step);
        }
    }
}

AffineSoftmax::AffineSoftmax(std::size_t input_dim, int num_classes)
    : dim_(input_dim), classes_(num_classes) {
    if (input_dim == 0 || num_classes < 2) {
        throw InvalidArgument("affine-softmax model needs d >= 1 and at least two classes");
    }
}

void AffineSoftmax::forward(std::span<const double> theta, std::span<const double> x,
                            std::span<double> probs) const {
    if (theta.size() != num_params() || x.size() != dim_ || probs.size() != static_cast<std::size_t>(classes_)) {
        throw InvalidArgument("affine-softmax: argument sizes do not match the model");
    }
    const std::size_t bias = static_cast<std::size_t>(classes_) * dim_;
    double top = -INFINITY;
    for (int c = 0; c < classes_; ++c) {
        double z = theta[bias + c];
        const double* row = theta.data() + static_cast<std::size_t>(c) * dim_;
        for (std::size_t i = 0; i < dim_; ++i) z += row[i] * x[i];
        probs[c] = z;
        top = std::max(top, z);
    }
    double total = 0.0;
    for (double& p : probs) {
        p = std::exp(p - top);
        total += p;
    }
    for (double& p : probs) p /= total;
}

void AffineSoftmax::jacobian(std::span<const double> theta, std::span<const double> x,
                             std::span<double> jac) const {
    const std::size_t n_params = num_params();
    const auto n_classes = static_cast<std::size_t>(classes_);
    if (jac.size() != n_classes * n_params) throw InvalidArgument("affine-softmax: jacobian buffer size");
    std::vector<double> p(n_classes);
    forward(theta, x, p);
    const std::size_t bias = n_classes * dim_;
    std::fill(jac.begin(), jac.end(), 0.0);
    // d p_c / d z_k = p_c (delta_ck - p_k); z_k depends on row k of W and b_k.
    for (std::size_t c = 0; c < n_classes; ++c) {
        double* out = jac.data() + c * n_params;
        for (std::size_t k = 0; k < n_classes; ++k) {
            const double dz = p[c] * ((c == k ? 1.0 : 0.0) - p[k]);
            for (std::size_t i = 0; i < dim_; ++i) out[k * dim_ + i] = dz * x[i];
            out[bias + k] = dz;
        }
    }
}

std::vector<double> reference_model_forward(std::span<const double> theta, std::span<const double> x) {
    const std::size_t stride = x.size() + 1;
    if (x.empty() || theta.size() % stride != 0) {
        throw InvalidArgument("theta size must be a multiple of (d + 1)");
    }
    const AffineSoftmax model(x.size(), static_cast<int>(theta.size() / stride));
    std::vector<double> probs(static_cast<std::size_t>(model.num_classes()));
    model.forward(theta, x, probs);
    return probs;
}

}  // namespace pbcert
