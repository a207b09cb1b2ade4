#include "tfdiff/tfimage.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "tfdiff/errors.hpp"

namespace fs = std::filesystem;

namespace tfdiff {

namespace {

constexpr double kEnvelopeEps = 1e-12;
constexpr double kStdFloor = 1e-8;

// cos/sin tables for e^{-j 2 pi k n / N}
struct Twiddle {
  int N;
  std::vector<double> cs, sn;  // size N*N indexed by (k*n) % N would alias; store k-major
  explicit Twiddle(int n) : N(n), cs(static_cast<size_t>(n) * n), sn(static_cast<size_t>(n) * n) {
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i) {
        double a = 2.0 * std::numbers::pi * k * i / n;
        cs[static_cast<size_t>(k) * n + i] = std::cos(a);
        sn[static_cast<size_t>(k) * n + i] = std::sin(a);
      }
  }
};

}  // namespace

std::vector<double> make_window(WindowKind kind, int N) {
  std::vector<double> w(N, 1.0);
  if (kind == WindowKind::hann)
    for (int n = 0; n < N; ++n)
      w[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / N));  // periodic form
  return w;
}

void validate_config(const WftConfig& cfg) {
  if (cfg.N < 2 || cfg.N % 2 != 0)
    throw validation_error("wft: window length N must be even and >= 2, got " + std::to_string(cfg.N));
  if (cfg.h < 1 || cfg.h > cfg.N)
    throw validation_error("wft: hop must satisfy 1 <= h <= N, got h=" + std::to_string(cfg.h) +
                           " N=" + std::to_string(cfg.N));
  if (cfg.N > cfg.T)
    throw validation_error("wft: window N=" + std::to_string(cfg.N) +
                           " longer than signal T=" + std::to_string(cfg.T));
  if (cfg.num_frames() < 1) throw validation_error("wft: no complete frame fits the signal");
}

Spectrogram wft(std::span<const double> series, const WftConfig& cfg) {
  validate_config(cfg);
  if (static_cast<int>(series.size()) != cfg.T)
    throw validation_error("wft: series length " + std::to_string(series.size()) +
                           " does not match configured T=" + std::to_string(cfg.T));
  const int N = cfg.N, h = cfg.h, K = cfg.num_bins(), M = cfg.num_frames();
  const auto w = make_window(cfg.window, N);
  const Twiddle tw(N);

  Spectrogram out;
  out.config = cfg;
  out.re = Matrix(K, M);
  out.im = Matrix(K, M);
  std::vector<double> seg(N);
  for (int m = 0; m < M; ++m) {
    for (int n = 0; n < N; ++n) seg[n] = series[static_cast<size_t>(m) * h + n] * w[n];
    for (int k = 0; k < K; ++k) {
      const double* c = &tw.cs[static_cast<size_t>(k) * N];
      const double* s = &tw.sn[static_cast<size_t>(k) * N];
      double sr = 0, si = 0;
      for (int n = 0; n < N; ++n) {
        sr += seg[n] * c[n];
        si -= seg[n] * s[n];
      }
      out.re(k, m) = sr;
      out.im(k, m) = si;
    }
  }
  return out;
}

std::pair<int, int> cola_valid_range(const WftConfig& cfg) {
  const auto w = make_window(cfg.window, cfg.N);
  const int cov = cfg.coverage();
  std::vector<double> env(cov, 0.0);
  for (int m = 0; m < cfg.num_frames(); ++m)
    for (int n = 0; n < cfg.N; ++n) env[static_cast<size_t>(m) * cfg.h + n] += w[n] * w[n];
  int first = 0;
  while (first < cov && env[first] < kEnvelopeEps) ++first;
  int last = cov;
  while (last > first && env[last - 1] < kEnvelopeEps) --last;
  for (int i = first; i < last; ++i)
    if (env[i] < kEnvelopeEps)
      throw validation_error("COLA violation: window envelope vanishes at interior sample " +
                             std::to_string(i));
  return {first, last};
}

std::vector<double> iwft(const Spectrogram& spec) {
  const WftConfig& cfg = spec.config;
  validate_config(cfg);
  if (spec.norm.has_value())
    throw validation_error("iwft: spectrogram still normalized; unnormalize first");
  const int N = cfg.N, h = cfg.h, K = cfg.num_bins(), M = cfg.num_frames();
  if (spec.re.rows() != K || spec.re.cols() != M || spec.im.rows() != K || spec.im.cols() != M)
    throw validation_error("iwft: spectrogram shape does not match config");

  const auto w = make_window(cfg.window, N);
  const Twiddle tw(N);
  const int cov = cfg.coverage();
  auto [first_valid, last_valid] = cola_valid_range(cfg);  // throws on interior gaps

  std::vector<double> num(cov, 0.0), den(cov, 0.0), seg(N);
  std::vector<double> fr(N), fi(N);
  for (int m = 0; m < M; ++m) {
    // Hermitian completion of the half spectrum, then inverse DFT
    for (int k = 0; k < K; ++k) {
      fr[k] = spec.re(k, m);
      fi[k] = spec.im(k, m);
    }
    for (int k = K; k < N; ++k) {
      fr[k] = fr[N - k];
      fi[k] = -fi[N - k];
    }
    // DC and Nyquist bins are real for real signals
    fi[0] = 0.0;
    fr[N / 2] = spec.re(N / 2, m);
    fi[N / 2] = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* c = &tw.cs[static_cast<size_t>(n) * N];  // cos(2pi n k / N) symmetric in (n,k)
      const double* s = &tw.sn[static_cast<size_t>(n) * N];
      double acc = 0;
      for (int k = 0; k < N; ++k) acc += fr[k] * c[k] - fi[k] * s[k];
      seg[n] = acc / N;
    }
    for (int n = 0; n < N; ++n) {
      const size_t i = static_cast<size_t>(m) * h + n;
      num[i] += w[n] * seg[n];
      den[i] += w[n] * w[n];
    }
  }
  std::vector<double> out(cov, 0.0);
  for (int i = 0; i < cov; ++i)
    if (den[i] >= kEnvelopeEps) out[i] = num[i] / den[i];
  return out;
}

Spectrogram normalized(const Spectrogram& spec) {
  if (spec.norm.has_value()) throw validation_error("normalize: spectrogram already normalized");
  NormStats st;
  st.mean_re = mean_of(spec.re.data());
  st.std_re = std::max(stddev_of(spec.re.data(), st.mean_re), kStdFloor);
  st.mean_im = mean_of(spec.im.data());
  st.std_im = std::max(stddev_of(spec.im.data(), st.mean_im), kStdFloor);

  Spectrogram out = spec;
  for (auto& v : out.re.data()) v = (v - st.mean_re) / st.std_re;
  for (auto& v : out.im.data()) v = (v - st.mean_im) / st.std_im;
  out.norm = st;
  return out;
}

Spectrogram unnormalized(const Spectrogram& spec) {
  if (!spec.norm.has_value()) throw validation_error("unnormalize: missing normalization stats");
  const NormStats st = *spec.norm;
  Spectrogram out = spec;
  for (auto& v : out.re.data()) v = v * st.std_re + st.mean_re;
  for (auto& v : out.im.data()) v = v * st.std_im + st.mean_im;
  out.norm.reset();
  return out;
}

std::vector<RoiSpectrogram> subject_to_spectrograms(const SubjectRecord& record,
                                                    const WftConfig& cfg) {
  std::vector<RoiSpectrogram> out;
  out.reserve(record.series.rows());
  for (int r = 0; r < record.series.rows(); ++r)
    out.push_back({normalized(wft(record.series.row(r), cfg)), r});
  return out;
}

Matrix spectrograms_to_subject(const std::vector<RoiSpectrogram>& specs, const WftConfig& cfg) {
  if (specs.empty()) throw validation_error("spectrograms_to_subject: empty input");
  std::vector<const RoiSpectrogram*> ordered(specs.size(), nullptr);
  for (const auto& rs : specs) {
    if (rs.roi < 0 || rs.roi >= static_cast<int>(specs.size()) || ordered[rs.roi])
      throw validation_error("spectrograms_to_subject: roi indices must be a permutation of 0..D-1");
    if (rs.spec.config.N != cfg.N || rs.spec.config.h != cfg.h || rs.spec.config.T != cfg.T ||
        rs.spec.config.window != cfg.window)
      throw validation_error("spectrograms_to_subject: inconsistent configs");
    ordered[rs.roi] = &rs;
  }
  Matrix series(static_cast<int>(specs.size()), cfg.coverage());
  for (size_t r = 0; r < ordered.size(); ++r) {
    auto x = iwft(ordered[r]->spec.norm ? unnormalized(ordered[r]->spec) : ordered[r]->spec);
    std::copy(x.begin(), x.end(), series.row(static_cast<int>(r)).begin());
  }
  return series;
}

ImageGeometry resolve_image_geometry(int image_size, int T, WindowKind window) {
  if (image_size < 2) throw validation_error("image_size must be >= 2");
  const int N = 2 * (image_size - 1);
  if (N > T)
    throw validation_error("image_size " + std::to_string(image_size) + " needs window N=" +
                           std::to_string(N) + " but T=" + std::to_string(T) + " is too short");
  int best_h = -1, best_m = -1;
  for (int h = 1; h <= N; ++h) {
    const int m = (T - N) / h + 1;
    if (m < 1) continue;
    if (best_h < 0 || std::abs(m - image_size) < std::abs(best_m - image_size) ||
        (std::abs(m - image_size) == std::abs(best_m - image_size) && h > best_h)) {
      best_h = h;
      best_m = m;
    }
  }
  if (best_h < 0) throw validation_error("no feasible hop for image_size/T combination");
  ImageGeometry geo;
  geo.wft = {N, best_h, window, T};
  geo.image_k = image_size;
  geo.image_m = image_size;
  geo.pad_left = (image_size - best_m) / 2;  // negative when cropping
  return geo;
}

std::vector<double> spectrogram_to_image(const Spectrogram& spec, const ImageGeometry& geo) {
  const int K = geo.image_k, Mi = geo.image_m, Mt = spec.re.cols();
  if (spec.re.rows() != K)
    throw validation_error("spectrogram_to_image: bin count does not match image height");
  std::vector<double> img(static_cast<size_t>(2) * K * Mi, 0.0);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < Mi; ++m) {
      const int src = m - geo.pad_left;
      if (src < 0 || src >= Mt) continue;
      img[static_cast<size_t>(k) * Mi + m] = spec.re(k, src);
      img[static_cast<size_t>(K + k) * Mi + m] = spec.im(k, src);
    }
  return img;
}

Spectrogram image_to_spectrogram(std::span<const double> image, const ImageGeometry& geo,
                                 const NormStats& norm) {
  const int K = geo.image_k, Mi = geo.image_m, Mt = geo.wft.num_frames();
  if (static_cast<int>(image.size()) != geo.flat_dim())
    throw validation_error("image_to_spectrogram: flat size mismatch");
  Spectrogram spec;
  spec.config = geo.wft;
  spec.re = Matrix(K, Mt);
  spec.im = Matrix(K, Mt);
  spec.norm = norm;
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < Mt; ++m) {
      const int src = m + geo.pad_left;
      if (src < 0 || src >= Mi) continue;  // cropped frames stay zero
      spec.re(k, m) = image[static_cast<size_t>(k) * Mi + src];
      spec.im(k, m) = image[static_cast<size_t>(K + k) * Mi + src];
    }
  return spec;
}

void write_spectrogram(const fs::path& path, const Spectrogram& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  os.write("SPC1", 4);
  const uint32_t k = static_cast<uint32_t>(spec.re.rows()), m = static_cast<uint32_t>(spec.re.cols());
  os.write(reinterpret_cast<const char*>(&k), 4);
  os.write(reinterpret_cast<const char*>(&m), 4);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  float st[4] = {nan, nan, nan, nan};
  if (spec.norm) {
    st[0] = static_cast<float>(spec.norm->mean_re);
    st[1] = static_cast<float>(spec.norm->std_re);
    st[2] = static_cast<float>(spec.norm->mean_im);
    st[3] = static_cast<float>(spec.norm->std_im);
  }
  os.write(reinterpret_cast<const char*>(st), 16);
  auto dump = [&os](const Matrix& mat) {
    std::vector<float> buf(mat.size());
    for (size_t i = 0; i < mat.size(); ++i) buf[i] = static_cast<float>(mat.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  };
  dump(spec.re);
  dump(spec.im);
  if (!os) throw io_error("write failed: " + path.string());
}

Spectrogram read_spectrogram(const fs::path& path, const WftConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SPC1", 4) != 0)
    throw io_error("bad magic in " + path.string() + " (expected SPC1)");
  uint32_t k = 0, m = 0;
  is.read(reinterpret_cast<char*>(&k), 4);
  is.read(reinterpret_cast<char*>(&m), 4);
  float st[4];
  is.read(reinterpret_cast<char*>(st), 16);
  if (!is) throw io_error("truncated header in " + path.string());
  Spectrogram spec;
  spec.config = cfg;
  spec.re = Matrix(static_cast<int>(k), static_cast<int>(m));
  spec.im = Matrix(static_cast<int>(k), static_cast<int>(m));
  auto slurp = [&is, &path](Matrix& mat) {
    std::vector<float> buf(mat.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!is) throw io_error("truncated data in " + path.string());
    for (size_t i = 0; i < mat.size(); ++i) mat.data()[i] = buf[i];
  };
  slurp(spec.re);
  slurp(spec.im);
  if (!std::isnan(st[0])) spec.norm = NormStats{st[0], st[1], st[2], st[3]};
  return spec;
}

}  // namespace tfdiff
