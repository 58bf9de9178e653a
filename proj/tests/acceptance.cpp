// Acceptance run: one line per criterion, each backed by harness checks and a
// wall-clock budget. Exit status is nonzero when any criterion fails.

#include "npc/harness.hpp"

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace npc;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> checks;
  double budget_seconds;
};

const std::vector<Criterion> kCriteria = {
    {1, "maximum principle on 20 admissible controls (rho margin 1e-4, mu >= -1e-10)", {"state.max_principle"}, 60},
    {2, "adjoint gradient vs central FD <= 1e-3 on 8x16, error shrinks >= 2x on refinement", {"adjoint.gradient_fd"}, 120},
    {3, "Taylor remainder strictly decreasing, ratios in [1.5, 3]", {"sensitivity.taylor"}, 90},
    {4, "stability ratios vary <= 3x over delta and 5 control pairs, bounded in t", {"state.stability"}, 90},
    {5, "nonlocal duality <= 1e-11 (100 trials, both kernels), DB* = DB <= 1e-12",
     {"nonlocal.duality", "nonlocal.symmetric_adjoint"}, 10},
    {6, "projection vs KKT oracle <= 1e-8 (50 inputs), idempotent, nonexpansive",
     {"optimizer.projection_oracle", "optimizer.projection_idempotent", "optimizer.projection_nonexpansive"}, 30},
    {7, "manufactured tracking: J reduced >= 1e6 within 500 iterations, nonincreasing", {"optimizer.tracking"}, 600},
    {8, "time self-convergence ratios in [1.6, 2.4], Laplacian ratios in [3.5, 4.5]",
     {"state.time_order", "grid.laplacian_order"}, 120},
};

}  // namespace

int main() {
  const HarnessConfig cfg;
  int failed = 0;
  std::printf("acceptance (seed %llu)\n", static_cast<unsigned long long>(cfg.seed));
  for (const auto& c : kCriteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string measured;
    std::vector<CheckReport> reports;
    for (const auto& name : c.checks) {
      reports.push_back(run_check(name, cfg));
      const auto& r = reports.back();
      pass = pass && r.pass;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s%s=%.4g (%s)", measured.empty() ? "" : "; ", name.c_str(), r.measured,
                    r.threshold.c_str());
      measured += buf;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_seconds;
    pass = pass && in_budget;
    if (!pass) ++failed;
    std::printf("criterion %d %s: %s | %s | %.2f s (budget %.0f s%s)\n", c.id, pass ? "PASS" : "FAIL",
                c.title.c_str(), measured.c_str(), secs, c.budget_seconds, in_budget ? "" : ", exceeded");
    for (const auto& r : reports) {
      if (!r.pass) std::printf("    %s failed: %s\n", r.name.c_str(), r.detail.c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(kCriteria.size()) - failed, kCriteria.size());
  return failed == 0 ? 0 : 1;
}
