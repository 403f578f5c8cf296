// Exponent windows, dissipativity gain and the weighted-estimate constants
// for a few values of the coupling constant.
#include "semigroup_lab/constants_lab.hpp"

#include <cstdio>

using namespace sglab;

int main() {
  std::printf("%-6s %-18s %-18s %-16s %-16s\n", "C", "J", "J~", "cond window", "domain window");
  for (const char* c : {"0", "1/10", "1/5", "1/4", "1/2", "1"}) {
    const Real C = Real(Rational(c));
    const auto r = dissipativity_intervals(C);
    std::printf("%-6s %-18s %-18s %-16s %-16s\n", c, r.J.str().c_str(), r.Jtilde.str().c_str(),
                r.cond_p_window.str().c_str(), r.domain_window.str().c_str());
  }

  std::printf("\nlargest gain delta with p in J_delta, C = 1/5\n");
  for (double p : {1.3, 1.5, 2.0, 4.0, 10.0, 26.0})
    std::printf("  p = %-5g delta = %.6f\n", p, max_delta_for(Real(p), Real(Rational(1, 5))).delta);

  std::printf("\nTheta, Lambda_p and the optimal psi2 for v0 = 1, gamma = 0.5, C_gamma = 0.2, C = 0.1\n");
  for (double p : {1.8, 2.0, 2.2, 2.4}) {
    const LambdaInputs in{p, 0.1, 0.0, 0.5, 0.2, 1.0};
    const auto tl = theta_lambda(in);
    const auto sol = appendixB_solve(appendixB_problem_for(in));
    std::printf("  p = %-4g Theta = %.6f Lambda = %.6f sup psi2 = %.6f\n", p, tl.Theta, tl.Lambda, sol.sup);
  }
}
