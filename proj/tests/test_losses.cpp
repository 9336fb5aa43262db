#include "cardiorecon/losses.hpp"

#include <cmath>

#include "doctest.h"

#include "cardiorecon/rng.hpp"

using namespace cardiorecon;

namespace {

ProbabilityVolume prob_from(const std::vector<double>& values, Dims3 dims) {
    ProbabilityVolume p(dims, kDefaultSpacingMm);
    p.values() = values;
    return p;
}

}  // namespace

TEST_CASE("kl closed form reproduces hand values") {
    CHECK(kl_standard_normal({0.0}, {0.0}) == 0.0);
    CHECK(kl_standard_normal({1.0}, {0.0}) == doctest::Approx(0.5).epsilon(1e-12));
    const double expected = 0.5 * (std::exp(1.0) - 2.0);
    CHECK(kl_standard_normal({0.0}, {1.0}) == doctest::Approx(expected).epsilon(1e-12));
    // additive across dimensions
    CHECK(kl_standard_normal({1.0, 0.0}, {0.0, 1.0}) ==
          doctest::Approx(0.5 + expected).epsilon(1e-12));
}

TEST_CASE("kl is nonnegative and zero only at the prior") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> mu(4), lv(4);
        for (auto& m : mu) m = rng.normal(0.0, 2.0);
        for (auto& l : lv) l = rng.normal(0.0, 1.0);
        const double kl = kl_standard_normal(mu, lv);
        CHECK(kl >= 0.0);
    }
    CHECK(kl_standard_normal({0.0, 0.0}, {0.0, 0.0}) <= 1e-12);
    CHECK(kl_standard_normal({1e-3, 0.0}, {0.0, 0.0}) > 0.0);
}

TEST_CASE("kl matches a Monte Carlo estimate") {
    // E_q[log q(z) - log p(z)] averaged over draws from q
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        const int d = 3;
        std::vector<double> mu(d), lv(d);
        for (auto& m : mu) m = rng.normal(0.0, 1.0);
        for (auto& l : lv) l = rng.uniform() * 2.0 - 1.0;

        const int n = 200000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double term = 0.0;
            for (int j = 0; j < d; ++j) {
                const double sigma = std::exp(0.5 * lv[j]);
                const double z = mu[j] + sigma * rng.normal();
                const double logq = -0.5 * ((z - mu[j]) * (z - mu[j]) / (sigma * sigma)) -
                                    0.5 * lv[j] - 0.5 * std::log(2.0 * 3.14159265358979323846);
                const double logp =
                    -0.5 * z * z - 0.5 * std::log(2.0 * 3.14159265358979323846);
                term += logq - logp;
            }
            acc += term;
        }
        const double mc = acc / n;
        CHECK(std::abs(kl_standard_normal(mu, lv) - mc) <= 0.03);
    }
}

TEST_CASE("soft dice frozen examples") {
    // all-zero prediction against 1000 foreground voxels: eps / (1000 + eps)
    Volume3D gt({10, 10, 10}, kDefaultSpacingMm);
    for (int i = 0; i < 1000; ++i) gt.voxels()[i] = 1;
    ProbabilityVolume zero({10, 10, 10}, kDefaultSpacingMm);
    CHECK(soft_dice(zero, gt) == doctest::Approx(1.0 / 1001.0).epsilon(1e-12));

    // perfect binary prediction is within the smoothing effect of 1
    ProbabilityVolume perfect({10, 10, 10}, kDefaultSpacingMm);
    for (int i = 0; i < 1000; ++i) perfect.values()[i] = 1.0;
    CHECK(soft_dice(perfect, gt) >= 1.0 - 1e-3);
    CHECK(soft_dice(perfect, gt) <= 1.0);

    // hand formula on a 2-voxel toy: p = (0.5, 0.25), g = (1, 0)
    Volume3D g2({2, 1, 1}, kDefaultSpacingMm);
    g2.set(0, 0, 0, 1);
    auto p2 = prob_from({0.5, 0.25}, {2, 1, 1});
    const double expect = (2.0 * 0.5 + 1.0) / (0.75 + 1.0 + 1.0);
    CHECK(soft_dice(p2, g2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("soft dice mismatched dims throw") {
    Volume3D gt({2, 2, 2}, kDefaultSpacingMm);
    ProbabilityVolume p({2, 2, 1}, kDefaultSpacingMm);
    CHECK_THROWS_AS((void)soft_dice(p, gt), ShapeError);
}

TEST_CASE("soft dice gradient matches central finite differences") {
    // 4^3 random instance at 64-bit, relative error < 1e-6
    Rng rng(4242);
    const int64_t n = 4 * 4 * 4;
    std::vector<double> pv(n), gv(n);
    for (auto& v : pv) v = 0.05 + 0.9 * rng.uniform();
    for (auto& v : gv) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    gv[0] = 1.0;  // guarantee nonempty

    auto pred = torch::from_blob(pv.data(), {1, 1, 4, 4, 4}, torch::kFloat64).clone();
    pred.requires_grad_(true);
    auto gt = torch::from_blob(gv.data(), {1, 1, 4, 4, 4}, torch::kFloat64).clone();

    auto dice = soft_dice_t(pred, gt);
    dice.backward();
    auto grad = pred.grad().reshape({n});

    auto value_at = [&](std::size_t idx, double v) {
        std::vector<double> mod = pv;
        mod[idx] = v;
        auto t = torch::from_blob(mod.data(), {1, 1, 4, 4, 4}, torch::kFloat64).clone();
        return soft_dice_t(t, gt).item<double>();
    };

    const double h = 1e-6;
    auto gacc = grad.accessor<double, 1>();
    for (std::size_t idx : {std::size_t(0), std::size_t(7), std::size_t(21), std::size_t(63)}) {
        const double fd = (value_at(idx, pv[idx] + h) - value_at(idx, pv[idx] - h)) / (2 * h);
        const double an = gacc[static_cast<int64_t>(idx)];
        CHECK(std::abs(fd - an) <= 1e-6 * std::max({1.0, std::abs(fd), std::abs(an)}));
    }
}

TEST_CASE("soft dice is monotone in true-foreground probabilities") {
    // raising pred on a foreground voxel never lowers the dice
    Rng rng(99);
    const int64_t n = 4 * 4 * 4;
    std::vector<double> pv(n), gv(n);
    for (auto& v : pv) v = rng.uniform();
    for (auto& v : gv) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    gv[5] = 1.0;

    auto pred = torch::from_blob(pv.data(), {1, 1, 4, 4, 4}, torch::kFloat64).clone();
    pred.requires_grad_(true);
    auto gt = torch::from_blob(gv.data(), {1, 1, 4, 4, 4}, torch::kFloat64).clone();
    soft_dice_t(pred, gt).backward();
    auto g = pred.grad().reshape({n});
    auto gacc = g.accessor<double, 1>();
    for (int64_t i = 0; i < n; ++i) {
        if (gv[static_cast<std::size_t>(i)] > 0.5) CHECK(gacc[i] >= 0.0);
    }
}

TEST_CASE("cross entropy frozen examples") {
    Volume3D gt({4, 4, 4}, kDefaultSpacingMm);
    Rng rng(7);
    for (auto& v : gt.voxels()) v = rng.uniform() < 0.5 ? 1 : 0;
    gt.set(0, 0, 0, 1);

    // constant 0.5 prediction costs ln 2 regardless of the labels
    ProbabilityVolume half({4, 4, 4}, kDefaultSpacingMm);
    for (auto& v : half.values()) v = 0.5;
    CHECK(cross_entropy_loss(half, gt) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // exact prediction: only the clipping cost remains
    ProbabilityVolume exact({4, 4, 4}, kDefaultSpacingMm);
    for (std::size_t i = 0; i < exact.values().size(); ++i) {
        exact.values()[i] = gt.voxels()[i] ? 1.0 : 0.0;
    }
    CHECK(cross_entropy_loss(exact, gt) < 1e-5);
    CHECK(cross_entropy_loss(exact, gt) > 0.0);
}

TEST_CASE("cross entropy matches bernoulli entropy for mean prediction") {
    Rng rng(13);
    const int dim = 8;
    Volume3D gt({dim, dim, dim}, kDefaultSpacingMm);
    std::size_t fg = 0;
    for (auto& v : gt.voxels()) {
        v = rng.uniform() < 0.37 ? 1 : 0;
        fg += v;
    }
    const double q = static_cast<double>(fg) / gt.size();
    ProbabilityVolume mean_pred({dim, dim, dim}, kDefaultSpacingMm);
    for (auto& v : mean_pred.values()) v = q;
    const double analytic = -(q * std::log(q) + (1.0 - q) * std::log(1.0 - q));
    CHECK(cross_entropy_loss(mean_pred, gt) == doctest::Approx(analytic).epsilon(1e-3));
}

TEST_CASE("tlnet match loss") {
    std::vector<double> e3(125, 0.25);
    std::vector<double> e2 = e3;
    CHECK(tlnet_match_loss(e2, e3) == 0.0);
    for (auto& v : e2) v += 1.0;
    CHECK(tlnet_match_loss(e2, e3) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(55);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> a(8), b(8);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        CHECK(tlnet_match_loss(a, b) >= 0.0);
    }
    CHECK_THROWS_AS((void)tlnet_match_loss({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("tlnet match gradient flows only to the 2d embedding") {
    auto e2d = torch::randn({2, 8}, torch::kFloat64).requires_grad_(true);
    auto e3d = torch::randn({2, 8}, torch::kFloat64).requires_grad_(true);
    tlnet_match_t(e2d, e3d).backward();
    CHECK(e2d.grad().defined());
    CHECK(e2d.grad().abs().sum().item<double>() > 0.0);
    CHECK_FALSE(e3d.grad().defined());
}

TEST_CASE("cvae loss breakdown identity and alpha linearity") {
    Rng rng(21);
    const int dim = 4;
    Volume3D gt({dim, dim, dim}, kDefaultSpacingMm);
    for (auto& v : gt.voxels()) v = rng.uniform() < 0.5 ? 1 : 0;
    gt.set(1, 1, 1, 1);
    ProbabilityVolume pred({dim, dim, dim}, kDefaultSpacingMm);
    for (auto& v : pred.values()) v = rng.uniform();
    std::vector<double> mu(6), lv(6);
    for (auto& m : mu) m = rng.normal();
    for (auto& l : lv) l = rng.normal(0.0, 0.5);

    const auto lb1 = cvae_loss(pred, gt, mu, lv, 1.0);
    CHECK(lb1.total == -lb1.dice_term + lb1.alpha * lb1.kl_term + lb1.match_term);
    CHECK(lb1.match_term == 0.0);

    const auto lb2 = cvae_loss(pred, gt, mu, lv, 2.0);
    CHECK(lb2.total - lb1.total == doctest::Approx(lb1.kl_term).epsilon(1e-12));

    const auto lb0 = cvae_loss(pred, gt, mu, lv, 0.0);
    CHECK(lb0.total == doctest::Approx(-lb0.dice_term).epsilon(1e-12));
}

TEST_CASE("cvae loss at the joint optimum is about -1") {
    Volume3D gt({4, 4, 4}, kDefaultSpacingMm);
    for (int i = 0; i < 30; ++i) gt.voxels()[i] = 1;
    ProbabilityVolume pred({4, 4, 4}, kDefaultSpacingMm);
    for (std::size_t i = 0; i < pred.values().size(); ++i) pred.values()[i] = gt.voxels()[i];
    std::vector<double> zeros(5, 0.0);
    const auto lb = cvae_loss(pred, gt, zeros, zeros, 1.0);
    CHECK(lb.kl_term == 0.0);
    CHECK(lb.total == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("tensor and scalar loss forms agree") {
    Rng rng(3);
    const int dim = 5;
    Volume3D gt({dim, dim, dim}, kDefaultSpacingMm);
    for (auto& v : gt.voxels()) v = rng.uniform() < 0.5 ? 1 : 0;
    gt.set(0, 0, 0, 1);
    ProbabilityVolume pred({dim, dim, dim}, kDefaultSpacingMm);
    for (auto& v : pred.values()) v = rng.uniform();

    std::vector<double> pv = pred.values();
    std::vector<double> gv(gt.voxels().begin(), gt.voxels().end());
    auto pt = torch::from_blob(pv.data(), {1, 1, dim, dim, dim}, torch::kFloat64).clone();
    auto gtt = torch::from_blob(gv.data(), {1, 1, dim, dim, dim}, torch::kFloat64).clone();

    CHECK(soft_dice(pred, gt) ==
          doctest::Approx(soft_dice_t(pt, gtt).item<double>()).epsilon(1e-12));
    CHECK(cross_entropy_loss(pred, gt) ==
          doctest::Approx(cross_entropy_t(pt, gtt).item<double>()).epsilon(1e-12));
}
