#include "cardiorecon/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace cardiorecon {

namespace {

constexpr int kExactLimit = 50;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// P(W+ <= w) under random independent signs, with ranks scaled by 2 so
/// midranks (k + 0.5) become integers. Full distribution via the generating
/// function product, kept normalized (each step multiplies by 1/2).
double exact_cdf(const std::vector<int>& scaled_ranks, int scaled_w) {
    const int total = std::accumulate(scaled_ranks.begin(), scaled_ranks.end(), 0);
    std::vector<double> pmf(static_cast<std::size_t>(total) + 1, 0.0);
    pmf[0] = 1.0;
    int reach = 0;
    for (int r : scaled_ranks) {
        for (int s = reach; s >= 0; --s) {
            const double p = pmf[s] * 0.5;
            pmf[s] = p;
            pmf[s + r] += p;
        }
        reach += r;
    }
    double cdf = 0.0;
    for (int s = 0; s <= std::min(scaled_w, total); ++s) cdf += pmf[s];
    return std::min(1.0, cdf);
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ParamError("paired samples differ in length");
    if (a.size() < 2) throw ParamError("need at least two pairs");

    struct Diff {
        double mag;
        bool positive;
    };
    std::vector<Diff> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back({std::abs(d), d > 0.0});
    }
    if (diffs.empty()) throw DegenerateInputError("all paired differences are zero");

    std::sort(diffs.begin(), diffs.end(),
              [](const Diff& x, const Diff& y) { return x.mag < y.mag; });
    const int n = static_cast<int>(diffs.size());

    // midranks, scaled by 2 to stay integral
    std::vector<int> scaled_ranks(diffs.size());
    double w_plus2 = 0.0;  // scaled W+
    double tie_term = 0.0;
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && diffs[j].mag == diffs[i].mag) ++j;
        const int scaled = (i + 1) + j;  // 2 * average of ranks i+1 .. j
        for (int k = i; k < j; ++k) {
            scaled_ranks[k] = scaled;
            if (diffs[k].positive) w_plus2 += scaled;
        }
        const double t = j - i;
        tie_term += t * t * t - t;
        i = j;
    }
    const double total2 = n * (n + 1.0);  // scaled rank sum
    const double w_minus2 = total2 - w_plus2;
    const double w_min2 = std::min(w_plus2, w_minus2);

    WilcoxonResult result;
    result.statistic = w_min2 / 2.0;
    result.n_effective = n;

    if (n <= kExactLimit) {
        result.exact = true;
        const double cdf = exact_cdf(scaled_ranks, static_cast<int>(std::llround(w_min2)));
        result.p_value = std::min(1.0, 2.0 * cdf);
    } else {
        const double mean_w2 = total2 / 2.0;
        const double var2 = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0 - tie_term / 12.0;  // of scaled W+
        const double z = (w_min2 - mean_w2 + 1.0) / std::sqrt(var2);  // continuity: 0.5 unscaled
        result.p_value = std::clamp(2.0 * normal_cdf(z), 0.0, 1.0);
    }
    return result;
}

double mean(const std::vector<double>& values) {
    if (values.empty()) throw ParamError("mean of empty sample");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sem(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return sd / std::sqrt(static_cast<double>(n));
}

}  // namespace cardiorecon
