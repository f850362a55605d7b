// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <CLI11.hpp>

#include <cstdio>
#include <thread>

#include "qtraj/acceptance.hpp"

int main(int argc, char** argv) {
  qtraj::AcceptanceOptions opt;
  opt.threads = std::max(1u, std::thread::hardware_concurrency());
  CLI::App app{"acceptance suite"};
  app.add_option("--seed", opt.seed, "master seed");
  app.add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--only", opt.only, "criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  bool ok = true;
  qtraj::run_acceptance(opt, [&](const qtraj::CriterionResult& r) {
    std::printf("%s\n", qtraj::format_result(r).c_str());
    std::fflush(stdout);
    ok = ok && r.pass;
  });
  return ok ? 0 : 1;
}
