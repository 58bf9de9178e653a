#pragma once

#include <string>
#include <vector>

namespace npc {

/// Whether the singular logarithmic part F1 is present. `none` is the smooth
/// polynomial mode used for rate tests, where F reduces to the polynomial F2.
enum class SingularPart { logarithmic, none };

enum class CouplingKind { constant, affine, smooth_concave };

/// g(rho): constant g0; affine g0 + g1*rho; smooth_concave a*rho*(2-rho) + b.
struct CouplingSpec {
  CouplingKind kind = CouplingKind::smooth_concave;
  double g0 = 0.0;
  double g1 = 0.0;
  double a = 1.0;
  double b = 0.0;

  bool operator==(const CouplingSpec&) const = default;
};

/// F = F1 + F2 with F1(r) = c_hat*(r log r + (1-r) log(1-r)) and F2 a
/// polynomial in the centered variable s = r - 1/2:
///   F2(r) = sum_k f2[k] * s^k.
struct PotentialSpec {
  double c_hat = 1.0;
  SingularPart singular = SingularPart::logarithmic;
  std::vector<double> f2{0.0, 0.0, -3.0};
  CouplingSpec g;
  double safeguard_eps = 1e-6;

  bool operator==(const PotentialSpec&) const = default;
};

PotentialSpec default_potential();
/// Quartic double well F(r) = c4*s^4 - c2*s^2 with no singular part.
PotentialSpec smooth_potential(double c4 = 4.0, double c2 = 1.0);

struct Clamped {
  double value;
  bool clamped;
};

class Physics {
 public:
  explicit Physics(PotentialSpec spec);

  const PotentialSpec& spec() const { return spec_; }

  double F(double r) const;
  /// F'(r) evaluated at the clamped argument; the flag reports whether the
  /// clamp moved r. Throws std::domain_error on NaN.
  Clamped F_prime_checked(double r) const;
  double F_prime(double r) const { return F_prime_checked(r).value; }
  double F_second(double r) const;
  double F_third(double r) const;

  double g(double r) const;
  double g_prime(double r) const;
  double g_second(double r) const;

  /// Clamp interval applied to the singular part; the whole real line in
  /// smooth mode.
  double clamp(double r) const;
  bool would_clamp(double r) const { return clamp(r) != r; }

 private:
  double poly(double r, int deriv) const;

  PotentialSpec spec_;
};

struct AuditItem {
  std::string condition;
  bool passed;
  double witness;  // rho where the condition failed, NaN when passed
};

struct AuditReport {
  std::vector<AuditItem> items;
  bool all_passed() const;
};

/// Checks c_hat > 0 and a singular F1, then samples g >= 0, g'' <= 0 and
/// convexity of F1 on 1001 points of [0,1] (open interval for F1).
AuditReport audit_assumptions(const PotentialSpec& spec);

}  // namespace npc
