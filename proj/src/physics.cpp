#include "npc/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npc {

PotentialSpec default_potential() { return PotentialSpec{}; }

PotentialSpec smooth_potential(double c4, double c2) {
  PotentialSpec p;
  p.singular = SingularPart::none;
  p.f2 = {0.0, 0.0, -c2, 0.0, c4};
  return p;
}

Physics::Physics(PotentialSpec spec) : spec_(std::move(spec)) {
  if (spec_.singular == SingularPart::logarithmic && !(spec_.c_hat > 0.0)) {
    throw std::invalid_argument("potential: c_hat must be positive");
  }
  if (!(spec_.safeguard_eps > 0.0 && spec_.safeguard_eps < 0.05)) {
    throw std::invalid_argument("potential: safeguard_eps must lie in (0, 0.05)");
  }
}

double Physics::clamp(double r) const {
  if (spec_.singular == SingularPart::none) return r;
  return std::clamp(r, spec_.safeguard_eps, 1.0 - spec_.safeguard_eps);
}

double Physics::poly(double r, int deriv) const {
  const double s = r - 0.5;
  double acc = 0.0;
  for (int k = static_cast<int>(spec_.f2.size()) - 1; k >= deriv; --k) {
    double c = spec_.f2[k];
    for (int j = 0; j < deriv; ++j) c *= (k - j);
    acc = acc * s + c;
  }
  return acc;
}

double Physics::F(double r) const {
  double v = poly(r, 0);
  if (spec_.singular == SingularPart::logarithmic) {
    const double x = clamp(r);
    v += spec_.c_hat * (x * std::log(x) + (1.0 - x) * std::log(1.0 - x));
  }
  return v;
}

Clamped Physics::F_prime_checked(double r) const {
  if (std::isnan(r)) throw std::domain_error("F_prime: NaN argument");
  const double x = clamp(r);
  double v = poly(x, 1);
  if (spec_.singular == SingularPart::logarithmic) v += spec_.c_hat * std::log(x / (1.0 - x));
  return {v, x != r};
}

double Physics::F_second(double r) const {
  const double x = clamp(r);
  double v = poly(x, 2);
  if (spec_.singular == SingularPart::logarithmic) v += spec_.c_hat * (1.0 / x + 1.0 / (1.0 - x));
  return v;
}

double Physics::F_third(double r) const {
  const double x = clamp(r);
  double v = poly(x, 3);
  if (spec_.singular == SingularPart::logarithmic) {
    v += spec_.c_hat * (-1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x)));
  }
  return v;
}

double Physics::g(double r) const {
  const auto& c = spec_.g;
  switch (c.kind) {
    case CouplingKind::constant: return c.g0;
    case CouplingKind::affine: return c.g0 + c.g1 * r;
    case CouplingKind::smooth_concave: return c.a * r * (2.0 - r) + c.b;
  }
  return 0.0;
}

double Physics::g_prime(double r) const {
  const auto& c = spec_.g;
  switch (c.kind) {
    case CouplingKind::constant: return 0.0;
    case CouplingKind::affine: return c.g1;
    case CouplingKind::smooth_concave: return c.a * (2.0 - 2.0 * r);
  }
  return 0.0;
}

double Physics::g_second(double) const {
  const auto& c = spec_.g;
  return c.kind == CouplingKind::smooth_concave ? -2.0 * c.a : 0.0;
}

bool AuditReport::all_passed() const {
  return std::all_of(items.begin(), items.end(), [](const AuditItem& i) { return i.passed; });
}

AuditReport audit_assumptions(const PotentialSpec& spec) {
  constexpr int samples = 1001;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  AuditReport report;
  const bool log_part = spec.singular == SingularPart::logarithmic;

  report.items.push_back({"c_hat > 0", !log_part || spec.c_hat > 0.0, nan});
  report.items.push_back({"F1 singular at both endpoints", log_part, log_part ? nan : 0.0});

  // Construct with a safe copy so a bad c_hat does not abort the audit.
  PotentialSpec probe = spec;
  if (!(probe.c_hat > 0.0)) probe.c_hat = 1.0;
  if (!(probe.safeguard_eps > 0.0 && probe.safeguard_eps < 0.05)) probe.safeguard_eps = 1e-6;
  const Physics phys(probe);

  auto scan = [&](const std::string& name, auto&& ok, bool open_interval) {
    AuditItem item{name, true, nan};
    for (int i = 0; i < samples; ++i) {
      double r = static_cast<double>(i) / (samples - 1);
      if (open_interval && (i == 0 || i == samples - 1)) continue;
      if (!ok(r)) {
        item.passed = false;
        item.witness = r;
        break;
      }
    }
    report.items.push_back(item);
  };

  scan("g >= 0 on [0,1]", [&](double r) { return phys.g(r) >= 0.0; }, false);
  scan("g'' <= 0 on [0,1]", [&](double r) { return phys.g_second(r) <= 0.0; }, false);
  if (log_part) {
    // Only convexity of F1 is required; F2 may be anything smooth.
    scan("F1 convex on (0,1)", [&](double r) { return spec.c_hat * (1.0 / r + 1.0 / (1.0 - r)) >= 0.0; }, true);
  }
  return report;
}

}  // namespace npc
