#pragma once

#include <vector>

#include "eaef/gradcheck.hpp"

namespace eaef {

struct AuditOptions {
    std::vector<int> channels{3, 5};  // feature channel counts to audit at
    int seeds = 20;
    double op_tolerance = 1e-4;
    double end_to_end_tolerance = 1e-3;
    // Test hook: perturbs one analytic gradient so the audit must fail.
    bool inject_fault = false;
};

// Finite-difference audit of every differentiable op, both losses, and the
// full fusion block (inputs plus each parameter group). Results aggregate
// the max relative error per group across seeds and channel counts.
std::vector<GradCheckResult> run_gradient_audit(const AuditOptions& opt = {});

bool audit_passed(const std::vector<GradCheckResult>& results, const AuditOptions& opt);

}  // namespace eaef
