#include "tfdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "tfdiff/errors.hpp"

namespace fs = std::filesystem;

namespace tfdiff {

std::vector<double> analytic_denoise(std::span<const double> x, double sigma,
                                     std::span<const double> mu, double s) {
  if (sigma < 0) throw validation_error("analytic_denoise: sigma must be >= 0");
  if (mu.size() != x.size() && mu.size() != 1)
    throw validation_error("analytic_denoise: mu must be scalar or match x");
  const double s2 = s * s, g2 = sigma * sigma;
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double m = mu.size() == 1 ? mu[0] : mu[i];
    out[i] = (s2 * x[i] + g2 * m) / (s2 + g2);
  }
  return out;
}

Precondition precondition(double sigma, double sigma_data) {
  if (!(sigma > 0)) throw validation_error("precondition: sigma must be > 0");
  if (!(sigma_data > 0)) throw validation_error("precondition: sigma_data must be > 0");
  const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  Precondition c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  c.c_in = 1.0 / std::sqrt(s2 + d2);
  c.c_noise = std::log(sigma) / 4.0;
  return c;
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void MlpDenoiser::build_layout() {
  const int L = static_cast<int>(cfg_.hidden.size());
  in_dim_.clear();
  out_dim_.clear();
  w_off_.clear();
  b_off_.clear();
  size_t off = 0;
  int in = cfg_.input_dim();
  for (int l = 0; l <= L; ++l) {
    const int out = l < L ? cfg_.hidden[l] : cfg_.image_dim();
    in_dim_.push_back(in);
    out_dim_.push_back(out);
    w_off_.push_back(off);
    off += static_cast<size_t>(out) * in;
    b_off_.push_back(off);
    off += out;
    in = out;
  }
  class_off_ = off;
  off += static_cast<size_t>(cfg_.num_classes + 1) * cfg_.embed_dim;
  roi_off_ = off;
  off += static_cast<size_t>(cfg_.num_rois) * cfg_.embed_dim;
  params_.resize(off, 0.0);
}

MlpDenoiser MlpDenoiser::init(const MlpConfig& cfg, uint64_t seed) {
  if (cfg.image_k < 1 || cfg.image_m < 1 || cfg.num_classes < 1 || cfg.num_rois < 1 ||
      cfg.embed_dim < 1 || cfg.noise_freqs < 1 || cfg.hidden.empty())
    throw validation_error("mlp: bad architecture config");
  if (!(cfg.sigma_data > 0)) throw validation_error("mlp: sigma_data must be > 0");

  MlpDenoiser m;
  m.cfg_ = cfg;
  m.build_layout();

  Rng wrng = substream(seed, "mlp-weights");
  for (size_t l = 0; l < m.w_off_.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.in_dim_[l]));
    double* w = m.params_.data() + m.w_off_[l];
    const size_t count = static_cast<size_t>(m.out_dim_[l]) * m.in_dim_[l];
    for (size_t i = 0; i < count; ++i) w[i] = wrng.next_uniform(-scale, scale);
    // biases stay zero
  }
  Rng erng = substream(seed, "mlp-embeddings");
  for (size_t i = m.class_off_; i < m.params_.size(); ++i)
    m.params_[i] = 0.02 * erng.next_gaussian();

  // fixed seed: the Fourier frequency table is an architecture constant, so
  // checkpoints reload identically regardless of the weight seed
  Rng frng = substream(0x6e6f6973656672ull, "mlp-noise-freqs");
  m.noise_freq_.resize(cfg.noise_freqs);
  for (auto& f : m.noise_freq_) f = frng.next_gaussian();
  return m;
}

std::vector<double> MlpDenoiser::forward(std::span<const double> x_in, double c_noise, int cond,
                                         int roi, Cache* cache) const {
  if (static_cast<int>(x_in.size()) != cfg_.image_dim())
    throw validation_error("mlp forward: input width mismatch");
  if (cond < 0 || cond > cfg_.num_classes)
    throw validation_error("mlp forward: cond out of range (null token = num_classes)");
  if (roi < 0 || roi >= cfg_.num_rois) throw validation_error("mlp forward: roi out of range");

  std::vector<double> h0(cfg_.input_dim());
  std::copy(x_in.begin(), x_in.end(), h0.begin());
  size_t p = x_in.size();
  for (int f = 0; f < cfg_.noise_freqs; ++f) {
    const double a = 2.0 * std::numbers::pi * noise_freq_[f] * c_noise;
    h0[p + f] = std::cos(a);
    h0[p + cfg_.noise_freqs + f] = std::sin(a);
  }
  p += 2 * static_cast<size_t>(cfg_.noise_freqs);
  const double* ce = params_.data() + class_off_ + static_cast<size_t>(cond) * cfg_.embed_dim;
  const double* re = params_.data() + roi_off_ + static_cast<size_t>(roi) * cfg_.embed_dim;
  for (int e = 0; e < cfg_.embed_dim; ++e) h0[p + e] = ce[e] + re[e];

  if (cache) {
    cache->h0 = h0;
    cache->pre.assign(w_off_.size(), {});
    cache->post.assign(w_off_.size(), {});
  }

  std::vector<double> cur = std::move(h0);
  const int L = static_cast<int>(w_off_.size());
  for (int l = 0; l < L; ++l) {
    const int in = in_dim_[l], out = out_dim_[l];
    std::vector<double> next(out);
    const double* W = params_.data() + w_off_[l];
    const double* b = params_.data() + b_off_[l];
    for (int o = 0; o < out; ++o) {
      const double* wrow = W + static_cast<size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += wrow[i] * cur[i];
      next[o] = acc;
    }
    if (cache) cache->pre[l] = next;
    if (l + 1 < L)
      for (auto& v : next) v = v * sigmoid(v);
    if (cache) cache->post[l] = next;
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> MlpDenoiser::denoise(std::span<const double> x, double sigma, int cond,
                                         int roi) const {
  const Precondition c = precondition(sigma, cfg_.sigma_data);
  std::vector<double> scaled(x.size());
  for (size_t i = 0; i < x.size(); ++i) scaled[i] = c.c_in * x[i];
  auto f = forward(scaled, c.c_noise, cond, roi);
  for (size_t i = 0; i < f.size(); ++i) f[i] = c.c_skip * x[i] + c.c_out * f[i];
  return f;
}

void MlpDenoiser::backward(std::span<const double> grad_out, const Cache& cache, int cond, int roi,
                           std::span<double> grad) const {
  if (grad.size() != params_.size()) throw validation_error("mlp backward: grad size mismatch");
  const int L = static_cast<int>(w_off_.size());
  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (int l = L - 1; l >= 0; --l) {
    const int in = in_dim_[l], out = out_dim_[l];
    if (l + 1 < L) {
      // through v = a * sigmoid(a)
      for (int o = 0; o < out; ++o) {
        const double a = cache.pre[l][o];
        const double s = sigmoid(a);
        g[o] *= s * (1.0 + a * (1.0 - s));
      }
    }
    const std::vector<double>& input = l == 0 ? cache.h0 : cache.post[l - 1];
    double* gW = grad.data() + w_off_[l];
    double* gb = grad.data() + b_off_[l];
    const double* W = params_.data() + w_off_[l];
    std::vector<double> gin(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double go = g[o];
      gb[o] += go;
      double* gwrow = gW + static_cast<size_t>(o) * in;
      const double* wrow = W + static_cast<size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gwrow[i] += go * input[i];
        gin[i] += go * wrow[i];
      }
    }
    g = std::move(gin);
  }
  // class and roi embeddings receive the same additive slice of d(h0)
  const size_t emb_start = static_cast<size_t>(cfg_.image_dim()) + 2 * cfg_.noise_freqs;
  double* gc = grad.data() + class_off_ + static_cast<size_t>(cond) * cfg_.embed_dim;
  double* gr = grad.data() + roi_off_ + static_cast<size_t>(roi) * cfg_.embed_dim;
  for (int e = 0; e < cfg_.embed_dim; ++e) {
    gc[e] += g[emb_start + e];
    gr[e] += g[emb_start + e];
  }
}

std::span<const double> MlpDenoiser::class_embedding(int row) const {
  return {params_.data() + class_off_ + static_cast<size_t>(row) * cfg_.embed_dim,
          static_cast<size_t>(cfg_.embed_dim)};
}

std::span<const double> MlpDenoiser::roi_embedding(int row) const {
  return {params_.data() + roi_off_ + static_cast<size_t>(row) * cfg_.embed_dim,
          static_cast<size_t>(cfg_.embed_dim)};
}

double loss_and_grad(const MlpDenoiser& model, std::span<const TrainItem> batch,
                     const EdmParams& edm, double p_null, Rng& rng, std::span<double> grad) {
  if (batch.empty()) throw validation_error("loss_and_grad: empty batch");
  const auto& cfg = model.config();
  const int dim = cfg.image_dim();
  const double inv_scale = 1.0 / (static_cast<double>(dim) * batch.size());

  double loss = 0.0;
  std::vector<double> x_t(dim), gF(dim);
  MlpDenoiser::Cache cache;
  for (const TrainItem& item : batch) {
    if (static_cast<int>(item.image.size()) != dim)
      throw validation_error("loss_and_grad: item image size mismatch");
    // fixed draw order per item: sigma, perturbation noise, dropout
    const double sigma = sample_training_sigma(edm, rng);
    for (int i = 0; i < dim; ++i) x_t[i] = item.image[i] + sigma * rng.next_gaussian();
    const bool drop = rng.next_double() < p_null;
    const int cond = drop ? model.null_token() : item.class_label;

    const Precondition c = precondition(sigma, cfg.sigma_data);
    std::vector<double> scaled(dim);
    for (int i = 0; i < dim; ++i) scaled[i] = c.c_in * x_t[i];
    const auto F = model.forward(scaled, c.c_noise, cond, item.roi, &cache);

    const double lambda = (sigma * sigma + cfg.sigma_data * cfg.sigma_data) /
                          ((sigma * cfg.sigma_data) * (sigma * cfg.sigma_data));
    double item_loss = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double diff = c.c_skip * x_t[i] + c.c_out * F[i] - item.image[i];
      item_loss += diff * diff;
      gF[i] = 2.0 * lambda * diff * c.c_out * inv_scale;
    }
    loss += lambda * item_loss / dim;
    model.backward(gF, cache, cond, item.roi, grad);
  }
  return loss / static_cast<double>(batch.size());
}

std::vector<TrainLogEntry> train(MlpDenoiser& model, AdamState& adam, std::vector<TrainItem> items,
                                 const TrainConfig& tc, const EdmParams& edm, int epochs_to_run) {
  if (items.empty()) throw validation_error("train: empty dataset");
  if (tc.p_null < 0 || tc.p_null > 1) throw validation_error("train: p_null must be in [0, 1]");
  if (tc.batch_size < 1) throw validation_error("train: batch_size must be >= 1");
  for (const auto& it : items)
    if (static_cast<int>(it.image.size()) != model.config().image_dim())
      throw validation_error("train: item image size does not match model");

  const size_t np = model.params().size();
  if (adam.m.empty()) {
    adam.m.assign(np, 0.0);
    adam.v.assign(np, 0.0);
  } else if (adam.m.size() != np || adam.v.size() != np) {
    throw artifact_mismatch("train: Adam state size does not match model");
  }

  std::vector<TrainLogEntry> log;
  std::vector<double> grad(np);
  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<TrainItem> batch;
  for (int e = 0; e < epochs_to_run; ++e) {
    Rng rng = substream(tc.seed, "train-epoch", static_cast<uint64_t>(adam.epoch));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    double epoch_loss = 0.0;
    int num_batches = 0;
    for (size_t start = 0; start < items.size(); start += tc.batch_size) {
      const size_t stop = std::min(items.size(), start + tc.batch_size);
      batch.clear();
      for (size_t i = start; i < stop; ++i) batch.push_back(items[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = loss_and_grad(model, batch, edm, tc.p_null, rng, grad);
      if (!std::isfinite(loss)) {
        std::string ids;
        for (size_t i = start; i < stop; ++i) ids += std::to_string(order[i]) + " ";
        throw numeric_error("non-finite training loss at epoch " + std::to_string(adam.epoch) +
                            ", batch items: " + ids);
      }
      ++adam.step;
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(adam.step));
      auto& p = model.params();
      for (size_t i = 0; i < np; ++i) {
        adam.m[i] = tc.beta1 * adam.m[i] + (1.0 - tc.beta1) * grad[i];
        adam.v[i] = tc.beta2 * adam.v[i] + (1.0 - tc.beta2) * grad[i] * grad[i];
        p[i] -= tc.learning_rate * (adam.m[i] / bc1) / (std::sqrt(adam.v[i] / bc2) + tc.adam_eps);
      }
      epoch_loss += loss;
      ++num_batches;
    }
    log.push_back({adam.epoch, epoch_loss / num_batches});
    ++adam.epoch;
  }
  return log;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
float get_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const MlpDenoiser& model, const AdamState* adam) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  const auto& cfg = model.config();
  os.write("MDL1", 4);
  put_u32(os, static_cast<uint32_t>(cfg.hidden.size()));
  for (int w : cfg.hidden) put_u32(os, static_cast<uint32_t>(w));
  put_u32(os, static_cast<uint32_t>(cfg.num_classes));
  put_u32(os, static_cast<uint32_t>(cfg.num_rois));
  put_u32(os, static_cast<uint32_t>(cfg.image_k));
  put_u32(os, static_cast<uint32_t>(cfg.image_m));
  put_u32(os, static_cast<uint32_t>(cfg.embed_dim));
  put_u32(os, static_cast<uint32_t>(cfg.noise_freqs));
  put_f32(os, static_cast<float>(cfg.sigma_data));
  for (double p : model.params()) put_f32(os, static_cast<float>(p));
  if (adam) {
    os.write("ADM1", 4);
    put_u64(os, static_cast<uint64_t>(adam->step));
    put_u64(os, static_cast<uint64_t>(adam->epoch));
    auto dump = [&os](const std::vector<double>& v) {
      os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    };
    dump(model.params());  // f64 master weights
    dump(adam->m);
    dump(adam->v);
  }
  if (!os) throw io_error("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MDL1", 4) != 0)
    throw io_error("bad magic in " + path.string() + " (expected MDL1)");

  MlpConfig cfg;
  const uint32_t nh = get_u32(is);
  cfg.hidden.resize(nh);
  for (auto& w : cfg.hidden) w = static_cast<int>(get_u32(is));
  cfg.num_classes = static_cast<int>(get_u32(is));
  cfg.num_rois = static_cast<int>(get_u32(is));
  cfg.image_k = static_cast<int>(get_u32(is));
  cfg.image_m = static_cast<int>(get_u32(is));
  cfg.embed_dim = static_cast<int>(get_u32(is));
  cfg.noise_freqs = static_cast<int>(get_u32(is));
  cfg.sigma_data = get_f32(is);
  if (!is) throw io_error("truncated checkpoint header: " + path.string());

  LoadedCheckpoint out;
  out.model = MlpDenoiser::init(cfg, 0);
  auto& params = out.model.params();
  for (auto& p : params) p = get_f32(is);
  if (!is) throw io_error("truncated checkpoint weights: " + path.string());

  char trailer[4];
  is.read(trailer, 4);
  if (is && std::memcmp(trailer, "ADM1", 4) == 0) {
    AdamState adam;
    adam.step = static_cast<int64_t>(get_u64(is));
    adam.epoch = static_cast<int64_t>(get_u64(is));
    auto slurp = [&is](std::vector<double>& v) {
      is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    };
    slurp(params);  // f64 masters override the f32 view
    adam.m.resize(params.size());
    adam.v.resize(params.size());
    slurp(adam.m);
    slurp(adam.v);
    if (!is) throw io_error("truncated checkpoint trailer: " + path.string());
    out.adam = std::move(adam);
  }
  return out;
}

}  // namespace tfdiff
