#pragma once

#include <vector>

#include <torch/torch.h>

#include "cardiorecon/errors.hpp"
#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// Per-iteration loss record. Minimization convention throughout:
///     total = -dice_term + alpha * kl_term + match_term
/// (the paper's bound is maximized; Dice enters negated). When training with
/// cross-entropy instead of Dice, dice_term stores the negated cross-entropy
/// so the identity above still holds exactly.
struct LossBreakdown {
    double total = 0.0;
    double dice_term = 0.0;
    double kl_term = 0.0;
    double match_term = 0.0;
    double alpha = 1.0;
};

// --- differentiable tensor forms (batched; mean over the batch) ---

/// Soft Dice per sample: (2 sum(p*g) + eps) / (sum(p) + sum(g) + eps),
/// averaged over the batch. pred and gt are [B,1,D,D,D] (or matching shapes).
torch::Tensor soft_dice_t(torch::Tensor pred, torch::Tensor gt, double eps = 1.0);

/// Closed-form KL(q || N(0,1)) summed over latent dims, averaged over batch.
torch::Tensor kl_standard_normal_t(torch::Tensor mu, torch::Tensor log_var);

/// Mean squared embedding mismatch, gradient flowing to e2d only.
torch::Tensor tlnet_match_t(torch::Tensor e2d, torch::Tensor e3d);

/// Mean binary cross-entropy with predictions clipped to [1e-7, 1-1e-7].
torch::Tensor cross_entropy_t(torch::Tensor pred, torch::Tensor gt);

// --- scalar convenience forms on core types ---

double soft_dice(const ProbabilityVolume& pred, const Volume3D& gt, double eps = 1.0);
double kl_standard_normal(const std::vector<double>& mu, const std::vector<double>& log_var);
double tlnet_match_loss(const std::vector<double>& e2d, const std::vector<double>& e3d);
double cross_entropy_loss(const ProbabilityVolume& pred, const Volume3D& gt);

LossBreakdown cvae_loss(const ProbabilityVolume& pred, const Volume3D& gt,
                        const std::vector<double>& mu, const std::vector<double>& log_var,
                        double alpha);

}  // namespace cardiorecon
