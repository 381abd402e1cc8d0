// Three conditionings side by side: a Poisson process kept below 3, a stable
// subordinator kept below 1, and a birth-death chain that avoids 0 after time 2.
#include <cstdio>

#include "subcond/conditioning.hpp"
#include "subcond/lastpassage.hpp"

using namespace subcond;

int main() {
  RngStream rng(2024);

  const StripLaw pois{SubordinatorSpec::poisson(1.0), 3.0, 0.0};
  std::vector<int> levels(4, 0);
  for (int i = 0; i < 20000; ++i) ++levels[static_cast<int>(sample_strip(pois, StripMethod::DoobChain, rng).values.back())];
  std::printf("Poisson below 3, killing level frequencies:");
  for (int n : levels) std::printf(" %.3f", n / 20000.0);
  std::printf("\n");

  const StripLaw stab{SubordinatorSpec::stable(0.5), 1.0, 0.0};
  double below_quarter = 0.0;
  for (int i = 0; i < 20000; ++i) below_quarter += *sample_strip(stab, StripMethod::DoobChain, rng).terminal < 0.25;
  std::printf("stable(1/2) below 1, P(X_zeta- < 1/4) = %.3f (exact 0.5)\n", below_quarter / 20000);

  const LastPassageLaw law{CtmcSpec::birth_death(), 2.0};
  const ConditionedAvoidSampler S(law);
  double g = 0.0;
  int never = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto s = S.sample(rng);
    g += s.g;
    never += s.never_visits;
  }
  std::printf("birth-death avoiding 0 after 2: mean last zero %.3f, never returns %d\n", g / 20000, never);
}
