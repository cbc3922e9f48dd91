#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace homogamy {

// Raised when a parameter set or configuration violates a documented constraint.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation produces a value the model forbids (for example a
// materially negative birth rate). Indicates a programming error, not a state.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Haploid two-locus genotypes. Locus 1 (A/a) is the phenotype, locus 2 (P/p)
// the mating preference. The enumerator value is the storage index everywhere.
enum class Genotype : std::size_t { AP = 0, Ap = 1, aP = 2, ap = 3 };

inline constexpr std::array<Genotype, 4> kGenotypes = {Genotype::AP, Genotype::Ap,
                                                       Genotype::aP, Genotype::ap};

constexpr std::size_t index(Genotype g) { return static_cast<std::size_t>(g); }

constexpr std::string_view name(Genotype g) {
  switch (g) {
    case Genotype::AP: return "AP";
    case Genotype::Ap: return "Ap";
    case Genotype::aP: return "aP";
    case Genotype::ap: return "ap";
  }
  return "?";
}

constexpr bool carries_P(Genotype g) { return g == Genotype::AP || g == Genotype::aP; }
constexpr bool carries_A(Genotype g) { return g == Genotype::AP || g == Genotype::Ap; }

// A <-> a relabelling: AP <-> aP, Ap <-> ap.
constexpr Genotype swap_allele(Genotype g) {
  switch (g) {
    case Genotype::AP: return Genotype::aP;
    case Genotype::Ap: return Genotype::ap;
    case Genotype::aP: return Genotype::AP;
    case Genotype::ap: return Genotype::Ap;
  }
  return g;
}

template <class T>
constexpr std::array<T, 4> swap_alleles(const std::array<T, 4>& v) {
  return {v[2], v[3], v[0], v[1]};
}

// Allele at locus 1.
enum class Allele { A, a };

constexpr std::string_view name(Allele a) { return a == Allele::A ? "A" : "a"; }

/// Model constants. `validate()` enforces b > d, beta1 >= 0, 0 <= beta2 <= 1,
/// c > 0 and K > 0; every public entry point that consumes a ModelParams from
/// outside the library calls it.
struct ModelParams {
  double b = 1.0;      // birth-rate constant
  double d = 0.0;      // natural death rate
  double c = 1.0;      // competition coefficient
  double K = 1000.0;   // carrying-capacity scale
  double beta1 = 0.0;  // homogamy benefit
  double beta2 = 0.0;  // heterogamy penalty

  void validate() const {
    auto fail = [](std::string_view key, std::string_view constraint, double v) {
      std::ostringstream os;
      os.precision(17);
      os << "invalid parameter " << key << " = " << v << ": requires " << constraint;
      throw ValidationError(os.str());
    };
    if (!std::isfinite(b) || !std::isfinite(d) || !(b > d)) fail("b", "b > d", b);
    if (!(d >= 0.0)) fail("d", "d ≥ 0", d);
    if (!std::isfinite(c) || !(c > 0.0)) fail("c", "c > 0", c);
    if (!std::isfinite(K) || !(K > 0.0)) fail("K", "K > 0", K);
    if (!std::isfinite(beta1) || !(beta1 >= 0.0)) fail("beta1", "β₁ ≥ 0", beta1);
    if (!(beta2 >= 0.0 && beta2 <= 1.0)) fail("beta2", "0 ≤ β₂ ≤ 1", beta2);
  }

  // Equilibrium density of a randomly mating (all-p) population, (b-d)/c.
  double resident_density() const { return (b - d) / c; }
  // Density of the AP-monomorphic equilibrium chi_AP, (b(1+beta1)-d)/c.
  double fixation_density() const { return (b * (1.0 + beta1) - d) / c; }
};

/// Genotype counts of the population CTMC.
struct PopState {
  std::array<std::int64_t, 4> n{};

  PopState() = default;
  PopState(std::int64_t AP, std::int64_t Ap, std::int64_t aP, std::int64_t ap)
      : n{AP, Ap, aP, ap} {}

  std::int64_t& operator[](Genotype g) { return n[index(g)]; }
  std::int64_t operator[](Genotype g) const { return n[index(g)]; }

  std::int64_t AP() const { return n[0]; }
  std::int64_t Ap() const { return n[1]; }
  std::int64_t aP() const { return n[2]; }
  std::int64_t ap() const { return n[3]; }

  std::int64_t total() const { return n[0] + n[1] + n[2] + n[3]; }
  std::int64_t P() const { return n[0] + n[2]; }
  std::int64_t p() const { return n[1] + n[3]; }
  std::int64_t A() const { return n[0] + n[1]; }
  std::int64_t a() const { return n[2] + n[3]; }
  std::int64_t delta_aP() const { return n[2] * n[1] - n[0] * n[3]; }

  bool valid() const { return n[0] >= 0 && n[1] >= 0 && n[2] >= 0 && n[3] >= 0; }

  PopState swapped() const { return PopState(n[2], n[3], n[0], n[1]); }

  std::array<double, 4> as_reals() const {
    return {static_cast<double>(n[0]), static_cast<double>(n[1]), static_cast<double>(n[2]),
            static_cast<double>(n[3])};
  }

  friend bool operator==(const PopState&, const PopState&) = default;
};

}  // namespace homogamy
