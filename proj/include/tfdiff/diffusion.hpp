#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tfdiff/rng.hpp"

namespace tfdiff {

// EDM sampler hyperparameters. Only steps=18 is pinned by the pipeline
// defaults; the rest follow the usual EDM values and are config-exposed.
struct EdmParams {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  double p_mean = -1.2;
  double p_std = 1.2;
  double s_churn = 0.0;
  double s_noise = 1.0;
  double churn_sigma_lo = 0.0;
  double churn_sigma_hi = std::numeric_limits<double>::infinity();
  int steps = 18;
};

void validate_params(const EdmParams& p);

// sigmas[0] = sigma_max, sigmas[steps-1] = sigma_min, sigmas[steps] = 0.
struct NoiseSchedule {
  std::vector<double> sigmas;
};

NoiseSchedule build_schedule(const EdmParams& p);

double sample_training_sigma(const EdmParams& p, Rng& rng);

std::vector<double> perturb(std::span<const double> x0, double sigma, Rng& rng);

std::vector<double> cfg_combine(std::span<const double> d_cond, std::span<const double> d_uncond,
                                double g);

struct GuidanceSpec {
  double scale = 1.0;
  std::optional<int> class_label;  // absent = unconditional sampling
};

// denoiser with optional class conditioning (nullopt = null token)
using CondDenoiseFn =
    std::function<std::vector<double>(std::span<const double>, double, std::optional<int>)>;
// guidance-combined denoiser as seen by the ODE solver
using DenoiseFn = std::function<std::vector<double>(std::span<const double>, double)>;

std::vector<double> guided_denoise(const CondDenoiseFn& denoiser, std::span<const double> x,
                                   double sigma, const GuidanceSpec& guidance);

std::vector<double> heun_step(std::span<const double> x, double sigma_t, double sigma_next,
                              const DenoiseFn& denoise, const EdmParams& p, Rng& rng);

std::vector<double> sample(const CondDenoiseFn& denoiser, const NoiseSchedule& schedule,
                           const GuidanceSpec& guidance, const EdmParams& p, size_t dim, Rng& rng);

}  // namespace tfdiff
