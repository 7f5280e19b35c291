#pragma once

#include <string>

namespace acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome divergence_projection();
Outcome apic_affine_exactness();
Outcome gradient_correctness();
Outcome kernel_fit();
Outcome twin_recovery();
Outcome wall_profile();
Outcome screen_constraint();
Outcome stability();
Outcome preprocessing();
Outcome io_determinism();

}  // namespace acceptance
