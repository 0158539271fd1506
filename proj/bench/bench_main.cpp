// Serial vs OpenMP timings for the metric kernels and the augmentation sweep
// on the standard fixture. Usage: oneedit_bench [repeats]

#include <chrono>
#include <cstdlib>
#include <iostream>

#include <omp.h>

#include "oneedit/fixture.hpp"

using namespace oneedit;

namespace {

template <class F>
double best_ms(int repeats, F&& f) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        f();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void row(const char* name, double serial_ms, double parallel_ms, bool same) {
    std::cout << name << "," << serial_ms << "," << parallel_ms << "," << serial_ms / parallel_ms << ","
              << (same ? "match" : "MISMATCH") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
    const auto fixture = generate_fixture(7);
    const auto script = fixture_script(fixture, 3, standard_config(7));
    const auto result = run_scenario(script, fixture.world);
    const auto pre = initial_model(script.config, fixture.world);
    const auto& post = result.final.model;

    // Inflate the suites so the kernels have something to chew on.
    std::vector<EvalCase> reliability, locality;
    for (int k = 0; k < 50; ++k) {
        for (const auto& c : select(script.suite, Category::Reliability)) reliability.push_back(c);
        for (const auto& c : select(script.suite, Category::Locality)) locality.push_back(c);
    }

    std::cout << "threads " << omp_get_max_threads() << "\n";
    std::cout << "kernel,serial_ms,openmp_ms,speedup,check\n";

    Ratio rs, rp;
    const double r_serial = best_ms(repeats, [&] { rs = serial::eval_reliability(post, reliability); });
    const double r_parallel = best_ms(repeats, [&] { rp = eval_reliability(post, reliability); });
    row("reliability", r_serial, r_parallel, rs == rp);

    Ratio ls, lp;
    const double l_serial = best_ms(repeats, [&] { ls = serial::eval_locality(pre, post, locality); });
    const double l_parallel = best_ms(repeats, [&] { lp = eval_locality(pre, post, locality); });
    row("locality", l_serial, l_parallel, ls == lp);

    const std::vector<std::size_t> ns{0, 2, 4, 8, 16, 32};
    const auto single = fixture_script(fixture, 1, standard_config(7));
    std::vector<SweepRow> ss, sp;
    const double s_serial = best_ms(1, [&] { ss = serial::sweep_augmentation(single, fixture.world, ns); });
    const double s_parallel = best_ms(1, [&] { sp = sweep_augmentation(single, fixture.world, ns); });
    row("sweep", s_serial, s_parallel, ss == sp);
    return rs == rp && ls == lp && ss == sp ? 0 : 1;
}
