#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tfdiff/diffusion.hpp"
#include "tfdiff/rng.hpp"

namespace tfdiff {

// Shared denoiser contract: estimate the clean image from a noisy one at
// noise level sigma, optionally class-conditioned (nullopt = null token).
struct Denoiser {
  virtual ~Denoiser() = default;
  virtual std::vector<double> evaluate(std::span<const double> x, double sigma,
                                       std::optional<int> cond) const = 0;
};

// Exact posterior mean for x0 ~ N(mu, s^2 I): the sampler verification oracle.
std::vector<double> analytic_denoise(std::span<const double> x, double sigma,
                                     std::span<const double> mu, double s);

struct AnalyticGaussianDenoiser : Denoiser {
  std::vector<double> mu;
  double s = 1.0;

  AnalyticGaussianDenoiser(std::vector<double> mu_, double s_) : mu(std::move(mu_)), s(s_) {}
  std::vector<double> evaluate(std::span<const double> x, double sigma,
                               std::optional<int> /*cond*/) const override {
    return analytic_denoise(x, sigma, mu, s);
  }
};

struct Precondition {
  double c_skip, c_out, c_in, c_noise;
};

Precondition precondition(double sigma, double sigma_data);

struct MlpConfig {
  int image_k = 16;
  int image_m = 16;
  std::vector<int> hidden = {512, 512};
  int num_classes = 2;
  int num_rois = 1;
  int embed_dim = 32;
  int noise_freqs = 8;  // Fourier pairs; contributes 2*noise_freqs input features
  double sigma_data = 0.5;

  int image_dim() const { return 2 * image_k * image_m; }
  int input_dim() const { return image_dim() + 2 * noise_freqs + embed_dim; }
};

// Plain MLP on flattened spectrogram images with a Fourier embedding of
// ln(sigma)/4 and additive class + ROI embeddings, x*sigmoid(x) hidden
// activations, linear output. All parameters live in one flat vector so the
// optimizer, checkpointing, and finite-difference checks stay simple.
class MlpDenoiser {
 public:
  MlpDenoiser() = default;
  static MlpDenoiser init(const MlpConfig& cfg, uint64_t seed);

  const MlpConfig& config() const { return cfg_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  int null_token() const { return cfg_.num_classes; }

  struct Cache {
    std::vector<double> h0;
    std::vector<std::vector<double>> pre;   // per layer pre-activation
    std::vector<std::vector<double>> post;  // per layer activation output
  };

  // raw network F(x_in, c_noise, cond, roi); cond in [0, num_classes] where
  // num_classes means the null token
  std::vector<double> forward(std::span<const double> x_in, double c_noise, int cond, int roi,
                              Cache* cache = nullptr) const;

  // preconditioned D(x, sigma, cond, roi)
  std::vector<double> denoise(std::span<const double> x, double sigma, int cond, int roi) const;

  // accumulate d(loss)/d(params) into grad given d(loss)/d(F)
  void backward(std::span<const double> grad_out, const Cache& cache, int cond, int roi,
                std::span<double> grad) const;

  // embedding rows as parameter slices (for tests and inspection)
  std::span<const double> class_embedding(int row) const;
  std::span<const double> roi_embedding(int row) const;

 private:
  MlpConfig cfg_;
  std::vector<double> params_;
  std::vector<double> noise_freq_;  // fixed, not trained
  // layout offsets: per layer W then b, then class table, then roi table
  std::vector<size_t> w_off_, b_off_;
  std::vector<int> in_dim_, out_dim_;
  size_t class_off_ = 0, roi_off_ = 0;

  friend struct MlpCheckpoint;
  void build_layout();
};

// sampling adapter: binds an ROI and maps nullopt to the null token
struct RoiConditionedDenoiser : Denoiser {
  const MlpDenoiser* model;
  int roi;

  RoiConditionedDenoiser(const MlpDenoiser& m, int r) : model(&m), roi(r) {}
  std::vector<double> evaluate(std::span<const double> x, double sigma,
                               std::optional<int> cond) const override {
    return model->denoise(x, sigma, cond.value_or(model->null_token()), roi);
  }
};

struct TrainConfig {
  double learning_rate = 3e-4;
  int epochs = 1000;
  int batch_size = 4;
  double p_null = 0.1;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
};

struct TrainItem {
  std::vector<double> image;
  int class_label = 0;
  int roi = 0;
};

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;
  int64_t epoch = 0;  // epochs completed so far (resume point)
};

// EDM-weighted denoising loss over one batch, averaged over items, with
// exact reverse-mode gradients. Randomness (sigma, perturbation noise,
// null-token dropout) is drawn from `rng` in a fixed per-item order.
double loss_and_grad(const MlpDenoiser& model, std::span<const TrainItem> batch,
                     const EdmParams& edm, double p_null, Rng& rng, std::span<double> grad);

struct TrainLogEntry {
  int64_t epoch;
  double loss;
};

// Runs `epochs_to_run` additional epochs (Adam, shuffled batches); epoch
// substreams are derived from (seed, epoch index) so resumed and straight
// runs produce identical parameter trajectories.
std::vector<TrainLogEntry> train(MlpDenoiser& model, AdamState& adam,
                                 std::vector<TrainItem> items, const TrainConfig& tc,
                                 const EdmParams& edm, int epochs_to_run);

// Checkpoint format: magic "MDL1", architecture header, f32 weights in
// declaration order; optional "ADM1" trailer with f64 master weights and
// Adam state for bit-exact resume.
void save_checkpoint(const std::filesystem::path& path, const MlpDenoiser& model,
                     const AdamState* adam = nullptr);
struct LoadedCheckpoint {
  MlpDenoiser model;
  std::optional<AdamState> adam;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tfdiff
