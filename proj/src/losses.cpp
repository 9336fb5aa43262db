#include "cardiorecon/losses.hpp"

#include <cmath>

#include "cardiorecon/models.hpp"

namespace cardiorecon {

torch::Tensor soft_dice_t(torch::Tensor pred, torch::Tensor gt, double eps) {
    if (pred.sizes() != gt.sizes()) throw ShapeError("soft_dice shape mismatch");
    const auto b = pred.size(0);
    auto p = pred.reshape({b, -1});
    auto g = gt.reshape({b, -1});
    auto inter = (p * g).sum(1);
    auto denom = p.sum(1) + g.sum(1) + eps;
    return ((2.0 * inter + eps) / denom).mean();
}

torch::Tensor kl_standard_normal_t(torch::Tensor mu, torch::Tensor log_var) {
    if (mu.sizes() != log_var.sizes()) throw ShapeError("kl shape mismatch");
    auto per_sample = 0.5 * (mu * mu + torch::exp(log_var) - 1.0 - log_var).sum(1);
    return per_sample.mean();
}

torch::Tensor tlnet_match_t(torch::Tensor e2d, torch::Tensor e3d) {
    if (e2d.sizes() != e3d.sizes()) throw ShapeError("embedding length mismatch");
    auto diff = e2d - e3d.detach();
    return (diff * diff).mean();
}

torch::Tensor cross_entropy_t(torch::Tensor pred, torch::Tensor gt) {
    if (pred.sizes() != gt.sizes()) throw ShapeError("cross_entropy shape mismatch");
    auto p = pred.clamp(1e-7, 1.0 - 1e-7);
    return -(gt * torch::log(p) + (1.0 - gt) * torch::log(1.0 - p)).mean();
}

namespace {

torch::Tensor prob_to_tensor(const ProbabilityVolume& p) {
    const auto& d = p.dims();
    auto t = torch::from_blob(const_cast<double*>(p.values().data()), {1, 1, d[2], d[1], d[0]},
                              torch::TensorOptions().dtype(torch::kFloat64))
                 .clone();
    return t.permute({0, 1, 4, 3, 2}).contiguous();
}

void check_same_grid(const ProbabilityVolume& p, const Volume3D& g) {
    if (p.dims() != g.dims()) throw ShapeError("probability/volume dims mismatch");
}

}  // namespace

double soft_dice(const ProbabilityVolume& pred, const Volume3D& gt, double eps) {
    check_same_grid(pred, gt);
    return soft_dice_t(prob_to_tensor(pred), volume_to_tensor(gt, torch::kFloat64), eps)
        .item<double>();
}

double kl_standard_normal(const std::vector<double>& mu, const std::vector<double>& log_var) {
    if (mu.size() != log_var.size()) throw ShapeError("kl vector length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        kl += 0.5 * (mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i]);
    }
    return kl;
}

double tlnet_match_loss(const std::vector<double>& e2d, const std::vector<double>& e3d) {
    if (e2d.size() != e3d.size()) throw ShapeError("embedding length mismatch");
    if (e2d.empty()) throw ParamError("empty embeddings");
    double s = 0.0;
    for (std::size_t i = 0; i < e2d.size(); ++i) {
        const double d = e2d[i] - e3d[i];
        s += d * d;
    }
    return s / static_cast<double>(e2d.size());
}

double cross_entropy_loss(const ProbabilityVolume& pred, const Volume3D& gt) {
    check_same_grid(pred, gt);
    return cross_entropy_t(prob_to_tensor(pred), volume_to_tensor(gt, torch::kFloat64))
        .item<double>();
}

LossBreakdown cvae_loss(const ProbabilityVolume& pred, const Volume3D& gt,
                        const std::vector<double>& mu, const std::vector<double>& log_var,
                        double alpha) {
    if (!(alpha >= 0.0)) throw ParamError("alpha must be nonnegative");
    LossBreakdown lb;
    lb.alpha = alpha;
    lb.dice_term = soft_dice(pred, gt);
    lb.kl_term = kl_standard_normal(mu, log_var);
    lb.match_term = 0.0;
    lb.total = -lb.dice_term + alpha * lb.kl_term + lb.match_term;
    return lb;
}

}  // namespace cardiorecon
