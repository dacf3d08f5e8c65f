#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pbcert {

/// A point of the probability simplex: M >= 2 nonnegative entries summing to 1.
///
/// Inputs whose sum is within 1e-9 of one are renormalised; anything further
/// off is rejected. Renormalisation only happens when the sum misses one by
/// more than 1e-12, so constructing from an already-normalised vector is the
/// identity (which keeps serialised certificates bit-stable).
class SimplexVector {
public:
    static constexpr double kRenormaliseTolerance = 1e-9;
    static constexpr double kSumTolerance = 1e-12;

    explicit SimplexVector(std::vector<double> probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t j) const noexcept { return probs_[j]; }
    std::span<const double> values() const noexcept { return probs_; }
    const std::vector<double>& vec() const noexcept { return probs_; }

    /// True when every coordinate is strictly positive.
    bool interior() const noexcept;

    friend bool operator==(const SimplexVector&, const SimplexVector&) = default;

private:
    std::vector<double> probs_;
};

/// Per-error-type losses: finite, nonnegative, not all equal.
class LossVector {
public:
    explicit LossVector(std::vector<double> losses);

    std::size_t size() const noexcept { return losses_.size(); }
    double operator[](std::size_t j) const noexcept { return losses_[j]; }
    std::span<const double> values() const noexcept { return losses_; }
    const std::vector<double>& vec() const noexcept { return losses_; }

    double max() const noexcept;
    double min() const noexcept;

private:
    std::vector<double> losses_;
};

/// kl(q||p) in nats with 0 log(0/x) = 0 and x log(x/0) = +inf.
double kl_div(const SimplexVector& q, const SimplexVector& p);

/// Binary kl(q||p) := kl((q,1-q) || (p,1-p)).
double scalar_kl(double q, double p);

/// Sum_j l_j r_j.
double total_risk(const LossVector& l, const SimplexVector& r);

/// Half the l1 distance.
double total_variation(const SimplexVector& q, const SimplexVector& p);

/// (1/sqrt 2) * || sqrt q - sqrt p ||_2.
double hellinger(const SimplexVector& q, const SimplexVector& p);

/// Best of Pinsker and Bretagnolle-Huber, capped at 1:
/// min(sqrt(B/2), sqrt(1 - e^{-B}), 1).
double tv_bound_from_kl_budget(double budget);

/// H <= sqrt(TV).
double hellinger_bound_from_tv(double tv);

}  // namespace pbcert
