#ifndef PAB_TESTS_FD_CHECK_HPP_
#define PAB_TESTS_FD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pab/tensor.hpp"

namespace fd {

struct Result {
    double worst_rel = 0.0;
    int checked = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central finite differences on a random subset of the entries of `values`.
// `loss` must recompute the scalar from scratch on each call (the perturbed
// entry is restored afterwards). Relative error uses max(1, |a|, |f|) as the
// denominator so tiny gradients compare absolutely.
inline Result check_subset(std::vector<double>& values, const std::vector<double>& analytic,
                           const std::function<double()>& loss, double step, int max_checks,
                           std::mt19937_64& rng) {
    Result r;
    std::vector<size_t> order(values.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int n = std::min<int>(max_checks, static_cast<int>(order.size()));
    for (int k = 0; k < n; ++k) {
        const size_t i = order[k];
        const double saved = values[i];
        values[i] = saved + step;
        const double up = loss();
        values[i] = saved - step;
        const double dn = loss();
        values[i] = saved;
        const double numeric = (up - dn) / (2 * step);
        const double a = analytic[i];
        const double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        if (rel > r.worst_rel) {
            r.worst_rel = rel;
            r.analytic_at_worst = a;
            r.numeric_at_worst = numeric;
        }
        ++r.checked;
    }
    return r;
}

inline Result check_all(std::vector<double>& values, const std::vector<double>& analytic,
                        const std::function<double()>& loss, double step) {
    std::mt19937_64 rng(0);
    return check_subset(values, analytic, loss, step, static_cast<int>(values.size()), rng);
}

inline void fill_uniform(pab::Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& x : t.v) x = d(rng);
}

}  // namespace fd

#endif  // PAB_TESTS_FD_CHECK_HPP_
