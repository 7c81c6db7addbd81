#pragma once

#include <cstdint>
#include <numeric>
#include <string>

namespace thinkstop {

/// Exact non-negative rational kept in lowest terms. den == 0 never escapes a
/// public computation.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  Fraction() = default;
  Fraction(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
    if (const auto g = std::gcd(num, den); g > 1) {
      num /= g;
      den /= g;
    }
  }

  double value() const noexcept { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

  bool operator==(const Fraction& o) const noexcept {
    return static_cast<unsigned __int128>(num) * o.den == static_cast<unsigned __int128>(o.num) * den;
  }
  bool operator<(const Fraction& o) const noexcept {
    return static_cast<unsigned __int128>(num) * o.den < static_cast<unsigned __int128>(o.num) * den;
  }
  bool operator<=(const Fraction& o) const noexcept { return !(o < *this); }
};

/// Decimal rendering with `decimals` places, rounded half to even, computed exactly.
/// percent_string(Fraction{49, 75}) == "65.33%".
std::string decimal_string(const Fraction& f, int decimals, std::uint64_t scale = 1);
inline std::string percent_string(const Fraction& f) { return decimal_string(f, 2, 100) + "%"; }

}  // namespace thinkstop
