#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>

#include "subcond/suites.hpp"

using namespace subcond;

namespace {

void print_line(const SuiteResult& s, double seconds) {
  std::printf("%s %d %s (%.1fs)\n", s.pass() ? "PASS" : "FAIL", s.criterion, s.title.c_str(), seconds);
  for (const auto& r : s.reports) {
    std::printf("    %-4s %-40s stat=%.6g thr=%.6g", r.status.c_str(), r.name.c_str(), r.statistic, r.threshold);
    if (r.p_value) std::printf(" p=%.4g", *r.p_value);
    std::printf(" n=%zu\n", r.n);
  }
  std::fflush(stdout);
}

}  // namespace

// Usage: acceptance [report.json]
int main(int argc, char** argv) {
  const SuiteOptions opts;  // seed 7, full scale
  std::vector<SuiteResult> results;
  bool ok = true;
  for (const auto& d : statistical_suites()) {
    const auto t0 = std::chrono::steady_clock::now();
    results.push_back(d.run(opts));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    print_line(results.back(), dt);
    ok = ok && results.back().pass();
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto det = suite_determinism(opts, &results);
  print_line(det, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  ok = ok && det.pass();
  results.push_back(det);
  if (argc > 1) std::ofstream(argv[1]) << suites_json(results, opts).dump(2) << "\n";
  std::printf("%s\n", ok ? "ALL PASS" : "SOME CRITERIA FAILED");
  return ok ? 0 : 1;
}
