#pragma once

#include <vector>

#include "cardiorecon/errors.hpp"

namespace cardiorecon {

struct WilcoxonResult {
    double statistic = 0.0;  // W = min(W+, W-), computed on midranks
    double p_value = 1.0;    // two-sided
    int n_effective = 0;     // pairs with nonzero difference
    bool exact = false;      // exact sign-flip distribution vs normal approximation
};

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; tied magnitudes get midranks. Small samples (n <= 50) use the exact
/// sign-flip null distribution conditional on the observed ranks; larger
/// samples use the normal approximation with tie and continuity corrections.
/// Throws DegenerateInputError when every difference is zero, and ParamError on
/// length mismatch or fewer than two pairs.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

double mean(const std::vector<double>& values);
/// Standard error of the mean (sample std / sqrt(n)); 0 for n < 2.
double sem(const std::vector<double>& values);

}  // namespace cardiorecon
