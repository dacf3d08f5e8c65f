#include "pbcert/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pbcert/error.hpp"

namespace pbcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_dimension(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                              " vs " + std::to_string(b) + ")");
    }
}

// One summand q log(q/p) with both conventions spelled out.
double kl_term(double q, double p) {
    if (q == 0.0) return 0.0;
    if (p == 0.0) return kInf;
    return q * std::log(q / p);
}

}  // namespace

SimplexVector::SimplexVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
        throw InvalidArgument("simplex vector needs dimension >= 2");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0) {
            throw InvalidArgument("simplex entry must be finite and nonnegative");
        }
        sum += p;
    }
    const double deviation = std::abs(sum - 1.0);
    if (deviation > kRenormaliseTolerance) {
        throw InvalidArgument("simplex entries sum to " + std::to_string(sum) + ", not 1");
    }
    if (deviation > kSumTolerance) {
        for (double& p : probs_) p /= sum;
    }
    for (double& p : probs_) {
        if (p > 1.0) p = 1.0;
    }
}

bool SimplexVector::interior() const noexcept {
    return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; });
}

LossVector::LossVector(std::vector<double> losses) : losses_(std::move(losses)) {
    if (losses_.empty()) throw InvalidArgument("loss vector is empty");
    for (double l : losses_) {
        if (!std::isfinite(l) || l < 0.0) {
            throw InvalidArgument("losses must be finite and nonnegative");
        }
    }
    if (std::all_of(losses_.begin(), losses_.end(), [&](double l) { return l == losses_[0]; })) {
        throw InvalidArgument("losses must not all be equal");
    }
}

double LossVector::max() const noexcept { return *std::max_element(losses_.begin(), losses_.end()); }

double LossVector::min() const noexcept { return *std::min_element(losses_.begin(), losses_.end()); }

double kl_div(const SimplexVector& q, const SimplexVector& p) {
    require_same_dimension(q.size(), p.size(), "kl_div");
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        sum += kl_term(q[j], p[j]);
    }
    // Rounding can push a near-zero sum slightly negative.
    return std::max(sum, 0.0);
}

double scalar_kl(double q, double p) {
    if (!(q >= 0.0 && q <= 1.0) || !(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("scalar_kl arguments must lie in [0,1]");
    }
    double sum = 0.0;
    sum += kl_term(q, p);
    sum += kl_term(1.0 - q, 1.0 - p);
    return std::max(sum, 0.0);
}

double total_risk(const LossVector& l, const SimplexVector& r) {
    require_same_dimension(l.size(), r.size(), "total_risk");
    double sum = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) sum += l[j] * r[j];
    return sum;
}

double total_variation(const SimplexVector& q, const SimplexVector& p) {
    require_same_dimension(q.size(), p.size(), "total_variation");
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) sum += std::abs(q[j] - p[j]);
    return std::clamp(0.5 * sum, 0.0, 1.0);
}

double hellinger(const SimplexVector& q, const SimplexVector& p) {
    require_same_dimension(q.size(), p.size(), "hellinger");
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = std::sqrt(q[j]) - std::sqrt(p[j]);
        sum += d * d;
    }
    return std::clamp(std::sqrt(0.5 * sum), 0.0, 1.0);
}

double tv_bound_from_kl_budget(double budget) {
    if (std::isnan(budget) || budget < 0.0) {
        throw InvalidArgument("kl budget must be nonnegative");
    }
    if (std::isinf(budget)) return 1.0;
    const double pinsker = std::sqrt(0.5 * budget);
    const double bretagnolle_huber = std::sqrt(-std::expm1(-budget));
    return std::min({pinsker, bretagnolle_huber, 1.0});
}

double hellinger_bound_from_tv(double tv) {
    if (!(tv >= 0.0 && tv <= 1.0)) {
        throw InvalidArgument("total variation must lie in [0,1]");
    }
    return std::sqrt(tv);
}

}  // namespace pbcert
