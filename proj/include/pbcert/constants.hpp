#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pbcert/simplex.hpp"

namespace pbcert {

/// k in S_{m,M}: M nonnegative counts summing to m.
struct Composition {
    std::vector<int> counts;

    int total() const noexcept;
    std::size_t size() const noexcept { return counts.size(); }
};

/// Which form of the multinomial kl constant produced a budget.
enum class ConstantMode { Exact, Stirling };

std::string_view to_string(ConstantMode mode);
ConstantMode constant_mode_from_string(std::string_view name);

/// Largest enumeration the exact constant will attempt.
inline constexpr std::uint64_t kMaxExactCompositions = 10'000'000;

/// C(m+M-1, M-1), saturating at UINT64_MAX.
std::uint64_t composition_count(int m, int M);

/// True when the exact constant is within the enumeration limit.
bool exact_feasible(int m, int M);

/// Lazily walks S_{m,M} in colex order, starting at (m,0,...,0) and ending at
/// (0,...,0,m).
///
///   CompositionStream s(2, 3);
///   do { use(s.current()); } while (s.next());
class CompositionStream {
public:
    CompositionStream(int m, int M);

    const Composition& current() const noexcept { return current_; }

    /// Advances to the next composition; false once the stream is exhausted.
    bool next();

private:
    Composition current_;
    bool done_ = false;
};

/// Materialises every element of S_{m,M}. Meant for small (m, M).
std::vector<Composition> enumerate_compositions(int m, int M);

/// ln Mult(k; m, M, r). Returns -inf when some r_j = 0 carries k_j > 0.
double log_multinomial_pmf(const Composition& k, const SimplexVector& r);

/// ln[(m!/m^m) * sum_{k in S_{m,M}} prod_j k_j^{k_j}/k_j!], by enumeration.
/// Throws InfeasibleMode beyond kMaxExactCompositions.
double log_I_kl_exact(int m, int M);

/// ln of the closed-form upper bound on the constant, valid for m >= M >= 2:
/// sqrt(pi) e^{1/(12m)} (m/2)^{(M-1)/2} sum_{z<M} C(M,z) (pi m)^{-z/2} / Gamma((M-z)/2).
double log_I_kl_stirling(int m, int M);

/// ln of the constant in the requested form.
double log_I_kl(int m, int M, ConstantMode mode);

struct ReciprocalSqrtSum {
    double exact_sum;  ///< sum over strictly positive compositions of prod 1/sqrt(k_j)
    double bound;      ///< pi^{M/2} m^{(M-2)/2} / Gamma(M/2)
};

/// Both sides of the reciprocal-square-root inequality, for m >= M >= 1.
ReciprocalSqrtSum reciprocal_sqrt_sum_check(int m, int M);

}  // namespace pbcert
