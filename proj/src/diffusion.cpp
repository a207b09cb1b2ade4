#include "tfdiff/diffusion.hpp"

#include <cmath>

#include "tfdiff/errors.hpp"

namespace tfdiff {

void validate_params(const EdmParams& p) {
  if (!(p.sigma_min > 0) || !(p.sigma_max > p.sigma_min))
    throw validation_error("edm: need 0 < sigma_min < sigma_max");
  if (!(p.rho > 0)) throw validation_error("edm: rho must be > 0");
  if (!(p.p_std > 0)) throw validation_error("edm: p_std must be > 0");
  if (p.s_churn < 0) throw validation_error("edm: s_churn must be >= 0");
  if (!(p.s_noise > 0)) throw validation_error("edm: s_noise must be > 0");
  if (p.steps < 1) throw validation_error("edm: steps must be >= 1");
}

NoiseSchedule build_schedule(const EdmParams& p) {
  validate_params(p);
  NoiseSchedule sched;
  sched.sigmas.reserve(p.steps + 1);
  if (p.steps == 1) {
    sched.sigmas = {p.sigma_max, 0.0};
    return sched;
  }
  const double inv_rho = 1.0 / p.rho;
  const double a = std::pow(p.sigma_max, inv_rho);
  const double b = std::pow(p.sigma_min, inv_rho);
  for (int t = 0; t < p.steps; ++t) {
    const double frac = static_cast<double>(t) / (p.steps - 1);
    sched.sigmas.push_back(std::pow(a + frac * (b - a), p.rho));
  }
  sched.sigmas[0] = p.sigma_max;            // endpoints exact by construction
  sched.sigmas[p.steps - 1] = p.sigma_min;
  sched.sigmas.push_back(0.0);
  for (int t = 0; t + 1 < static_cast<int>(sched.sigmas.size()); ++t)
    if (!(sched.sigmas[t] > sched.sigmas[t + 1]))
      throw numeric_error("schedule not strictly decreasing at index " + std::to_string(t));
  return sched;
}

double sample_training_sigma(const EdmParams& p, Rng& rng) {
  return std::exp(rng.next_gaussian() * p.p_std + p.p_mean);
}

std::vector<double> perturb(std::span<const double> x0, double sigma, Rng& rng) {
  if (sigma < 0) throw validation_error("perturb: sigma must be >= 0");
  std::vector<double> out(x0.begin(), x0.end());
  if (sigma > 0)
    for (auto& v : out) v += sigma * rng.next_gaussian();
  return out;
}

std::vector<double> cfg_combine(std::span<const double> d_cond, std::span<const double> d_uncond,
                                double g) {
  if (d_cond.size() != d_uncond.size())
    throw validation_error("cfg_combine: shape mismatch " + std::to_string(d_cond.size()) + " vs " +
                           std::to_string(d_uncond.size()));
  std::vector<double> out(d_cond.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = d_uncond[i] + g * (d_cond[i] - d_uncond[i]);
  return out;
}

std::vector<double> guided_denoise(const CondDenoiseFn& denoiser, std::span<const double> x,
                                   double sigma, const GuidanceSpec& guidance) {
  if (!guidance.class_label.has_value() || guidance.scale == 1.0)
    return denoiser(x, sigma, guidance.class_label);
  auto d_cond = denoiser(x, sigma, guidance.class_label);
  auto d_uncond = denoiser(x, sigma, std::nullopt);
  return cfg_combine(d_cond, d_uncond, guidance.scale);
}

std::vector<double> heun_step(std::span<const double> x, double sigma_t, double sigma_next,
                              const DenoiseFn& denoise, const EdmParams& p, Rng& rng) {
  if (!(sigma_t > sigma_next) || sigma_next < 0)
    throw validation_error("heun_step: need sigma_t > sigma_next >= 0");

  // churn: lift sigma_t to sigma' and add matching noise
  double gamma = 0.0;
  if (p.s_churn > 0 && sigma_t >= p.churn_sigma_lo && sigma_t <= p.churn_sigma_hi)
    gamma = std::min(p.s_churn / p.steps, std::sqrt(2.0) - 1.0);
  const double sigma_hat = sigma_t * (1.0 + gamma);
  std::vector<double> x_hat(x.begin(), x.end());
  if (gamma > 0) {
    const double extra = std::sqrt(sigma_hat * sigma_hat - sigma_t * sigma_t) * p.s_noise;
    for (auto& v : x_hat) v += extra * rng.next_gaussian();
  }

  const auto d1_base = denoise(x_hat, sigma_hat);
  std::vector<double> x_euler(x_hat.size());
  std::vector<double> d1(x_hat.size());
  for (size_t i = 0; i < x_hat.size(); ++i) {
    d1[i] = (x_hat[i] - d1_base[i]) / sigma_hat;
    x_euler[i] = x_hat[i] + (sigma_next - sigma_hat) * d1[i];
  }
  if (sigma_next == 0.0) return x_euler;

  const auto d2_base = denoise(x_euler, sigma_next);
  std::vector<double> out(x_hat.size());
  for (size_t i = 0; i < x_hat.size(); ++i) {
    const double d2 = (x_euler[i] - d2_base[i]) / sigma_next;
    out[i] = x_hat[i] + (sigma_next - sigma_hat) * 0.5 * (d1[i] + d2);
  }
  return out;
}

std::vector<double> sample(const CondDenoiseFn& denoiser, const NoiseSchedule& schedule,
                           const GuidanceSpec& guidance, const EdmParams& p, size_t dim, Rng& rng) {
  if (schedule.sigmas.size() < 2) throw validation_error("sample: schedule needs >= 2 sigmas");
  std::vector<double> x(dim);
  for (auto& v : x) v = schedule.sigmas[0] * rng.next_gaussian();
  DenoiseFn combined = [&](std::span<const double> xi, double sigma) {
    return guided_denoise(denoiser, xi, sigma, guidance);
  };
  for (size_t t = 0; t + 1 < schedule.sigmas.size(); ++t)
    x = heun_step(x, schedule.sigmas[t], schedule.sigmas[t + 1], combined, p, rng);
  return x;
}

}  // namespace tfdiff
