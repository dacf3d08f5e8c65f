#include "pbcert/constants.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "pbcert/error.hpp"

namespace pbcert {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streaming log-sum-exp with a running maximum.
class LogSumExp {
public:
    void add(double x) {
        if (x == kNegInf) return;
        if (x > max_) {
            scaled_ = (max_ == kNegInf) ? 1.0 : scaled_ * std::exp(max_ - x) + 1.0;
            max_ = x;
        } else {
            scaled_ += std::exp(x - max_);
        }
    }
    double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(scaled_); }

private:
    double max_ = kNegInf;
    double scaled_ = 0.0;
};

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

double log_binomial(int n, int k) { return log_factorial(n) - log_factorial(k) - log_factorial(n - k); }

void check_exact_size(std::uint64_t count, const char* what) {
    if (count > kMaxExactCompositions) {
        throw InfeasibleMode(std::string(what) + ": enumeration of " + std::to_string(count) +
                             " compositions exceeds the limit of " +
                             std::to_string(kMaxExactCompositions));
    }
}

}  // namespace

int Composition::total() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0); }

std::string_view to_string(ConstantMode mode) {
    return mode == ConstantMode::Exact ? "exact" : "stirling";
}

ConstantMode constant_mode_from_string(std::string_view name) {
    if (name == "exact") return ConstantMode::Exact;
    if (name == "stirling") return ConstantMode::Stirling;
    throw InvalidArgument("unknown constant mode '" + std::string(name) + "'");
}

std::uint64_t composition_count(int m, int M) {
    if (m < 0 || M < 1) throw InvalidArgument("composition_count needs m >= 0, M >= 1");
    // C(n, k) with n = m + M - 1, k = min(M - 1, m); each partial product is itself
    // a binomial coefficient so the division is exact.
    const std::uint64_t n = static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(M) - 1;
    const std::uint64_t k = std::min<std::uint64_t>(static_cast<std::uint64_t>(M) - 1, m);
    constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t factor = n - k + i;
        const std::uint64_t g = std::gcd(result, i);
        const std::uint64_t reduced = result / g;
        const std::uint64_t rest = factor / (i / g);
        if (reduced != 0 && rest > kMax / reduced) return kMax;
        result = reduced * rest;
    }
    return result;
}

bool exact_feasible(int m, int M) {
    return m >= 1 && M >= 2 && composition_count(m, M) <= kMaxExactCompositions;
}

CompositionStream::CompositionStream(int m, int M) {
    if (m < 0 || M < 1) throw InvalidArgument("compositions need m >= 0 and M >= 1");
    current_.counts.assign(static_cast<std::size_t>(M), 0);
    current_.counts[0] = m;
}

bool CompositionStream::next() {
    if (done_) return false;
    auto& k = current_.counts;
    std::size_t i = 0;
    while (i < k.size() && k[i] == 0) ++i;
    if (i + 1 >= k.size()) {
        done_ = true;
        return false;
    }
    const int head = k[i];
    k[i] = 0;
    k[0] = head - 1;
    k[i + 1] += 1;
    return true;
}

std::vector<Composition> enumerate_compositions(int m, int M) {
    std::vector<Composition> out;
    CompositionStream stream(m, M);
    do {
        out.push_back(stream.current());
    } while (stream.next());
    return out;
}

double log_multinomial_pmf(const Composition& k, const SimplexVector& r) {
    if (k.size() != r.size()) throw InvalidArgument("log_multinomial_pmf: dimension mismatch");
    double log_p = log_factorial(k.total());
    for (std::size_t j = 0; j < k.size(); ++j) {
        const int kj = k.counts[j];
        if (kj < 0) throw InvalidArgument("composition counts must be nonnegative");
        log_p -= log_factorial(kj);
        if (kj == 0) continue;  // 0^0 = 1
        if (r[j] == 0.0) return kNegInf;
        log_p += kj * std::log(r[j]);
    }
    return log_p;
}

double log_I_kl_exact(int m, int M) {
    if (m < 1 || M < 2) throw InvalidArgument("log_I_kl_exact needs m >= 1 and M >= 2");
    check_exact_size(composition_count(m, M), "log_I_kl_exact");

    // term[k] = k ln k - ln k!, with 0 ln 0 = 0
    std::vector<double> term(static_cast<std::size_t>(m) + 1);
    for (int k = 0; k <= m; ++k) {
        term[k] = (k == 0 ? 0.0 : k * std::log(static_cast<double>(k))) - log_factorial(k);
    }

    LogSumExp acc;
    CompositionStream stream(m, M);
    do {
        double s = 0.0;
        for (int kj : stream.current().counts) s += term[kj];
        acc.add(s);
    } while (stream.next());

    return log_factorial(m) - m * std::log(static_cast<double>(m)) + acc.value();
}

double log_I_kl_stirling(int m, int M) {
    if (M < 2) throw InvalidArgument("log_I_kl_stirling needs M >= 2");
    if (m < M) {
        throw InfeasibleMode("Stirling form of the constant requires m >= M (m=" +
                             std::to_string(m) + ", M=" + std::to_string(M) + ")");
    }
    const double md = m;
    const double log_pi_m = std::log(std::numbers::pi * md);
    LogSumExp inner;
    for (int z = 0; z < M; ++z) {
        inner.add(log_binomial(M, z) - 0.5 * z * log_pi_m - std::lgamma(0.5 * (M - z)));
    }
    return 0.5 * std::log(std::numbers::pi) + 1.0 / (12.0 * md) +
           0.5 * (M - 1) * std::log(0.5 * md) + inner.value();
}

double log_I_kl(int m, int M, ConstantMode mode) {
    return mode == ConstantMode::Exact ? log_I_kl_exact(m, M) : log_I_kl_stirling(m, M);
}

ReciprocalSqrtSum reciprocal_sqrt_sum_check(int m, int M) {
    if (M < 1 || m < M) throw InvalidArgument("reciprocal_sqrt_sum_check needs m >= M >= 1");
    // Strictly positive compositions of m are compositions of m - M shifted by one.
    const int slack = m - M;
    check_exact_size(composition_count(slack, M), "reciprocal_sqrt_sum_check");

    std::vector<double> inv_sqrt(static_cast<std::size_t>(m) + 1, 0.0);
    for (int k = 1; k <= m; ++k) inv_sqrt[k] = 1.0 / std::sqrt(static_cast<double>(k));

    double sum = 0.0;
    CompositionStream stream(slack, M);
    do {
        double prod = 1.0;
        for (int kj : stream.current().counts) prod *= inv_sqrt[kj + 1];
        sum += prod;
    } while (stream.next());

    const double bound = std::exp(0.5 * M * std::log(std::numbers::pi) +
                                  0.5 * (M - 2) * std::log(static_cast<double>(m)) -
                                  std::lgamma(0.5 * M));
    return {sum, bound};
}

}  // namespace pbcert
