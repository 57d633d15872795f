#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eaef/tensor.hpp"

// Central finite-difference audit. The scalar function is evaluated in
// double precision; analytic gradients are compared per element with a
// relative error normalized by max(|analytic|, |numeric|, 1e-6).

namespace eaef {

struct GradCheckResult {
    std::string group;
    double max_rel_err = 0.0;
    int64_t checked = 0;
    bool pass(double tol) const { return max_rel_err < tol; }
};

// f evaluates the scalar objective from the current contents of `x`.
inline GradCheckResult finite_diff_check(const std::string& group, DTensor& x,
                                         const std::vector<double>& analytic,
                                         const std::function<double()>& f, double eps = 1e-4) {
    GradCheckResult r;
    r.group = group;
    for (int64_t i = 0; i < x.size(); ++i) {
        const double orig = x.v[i];
        x.v[i] = orig + eps;
        const double fp = f();
        x.v[i] = orig - eps;
        const double fm = f();
        x.v[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[static_cast<size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        r.max_rel_err = std::max(r.max_rel_err, std::abs(a - numeric) / denom);
        ++r.checked;
    }
    return r;
}

}  // namespace eaef
