// Runs every acceptance criterion and prints one PASS/FAIL line for each.
#include <chrono>
#include <cstdio>
#include <exception>

#include "acceptance.hpp"

int main()
{
    using namespace acceptance;
    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "divergence-free projection", divergence_projection},
        {2, "APIC affine exactness", apic_affine_exactness},
        {3, "gradient correctness", gradient_correctness},
        {4, "kernel-fit convergence", kernel_fit},
        {5, "synthetic-twin parameter recovery", twin_recovery},
        {6, "wall profile", wall_profile},
        {7, "screen-space constraint correction", screen_constraint},
        {8, "stability", stability},
        {9, "preprocessing", preprocessing},
        {10, "IO round-trips and determinism", io_determinism},
    };
    int failed = 0;
    for (const auto& e : entries) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %2d: %s (%.2f s) %s\n", o.pass ? "PASS" : "FAIL", e.id, e.name, s, o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(entries)) - failed, std::size(entries));
    return failed == 0 ? 0 : 1;
}
