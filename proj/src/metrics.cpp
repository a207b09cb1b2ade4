#include "tfdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include <Eigen/Dense>

#include "tfdiff/errors.hpp"
#include "tfdiff/rng.hpp"

namespace tfdiff {

SeriesSet slice_windows(const std::vector<SubjectRecord>& records, int L, int stride) {
  if (L < 2) throw validation_error("slice_windows: L must be >= 2");
  if (stride < 1) throw validation_error("slice_windows: stride must be >= 1");
  SeriesSet set;
  set.length = L;
  for (const auto& rec : records) {
    if (rec.series.cols() < L)
      throw validation_error("slice_windows: L=" + std::to_string(L) + " exceeds T=" +
                             std::to_string(rec.series.cols()) + " for subject " + rec.subject_id);
    for (int r = 0; r < rec.series.rows(); ++r) {
      auto row = rec.series.row(r);
      for (int start = 0; start + L <= rec.series.cols(); start += stride)
        set.windows.emplace_back(row.begin() + start, row.begin() + start + L);
    }
  }
  return set;
}

namespace {

constexpr int kNumProjections = 50;
constexpr int kResample = 64;
constexpr uint64_t kProjectionSeed = 0xC0FFEE;

const std::vector<double>& projection_matrix() {
  static const std::vector<double> R = [] {
    Rng rng(kProjectionSeed);
    std::vector<double> r(static_cast<size_t>(kNumProjections) * kResample);
    for (auto& v : r) v = rng.next_gaussian();
    return r;
  }();
  return R;
}

std::vector<double> resample_linear(std::span<const double> w, int n) {
  std::vector<double> out(n);
  const int L = static_cast<int>(w.size());
  for (int i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * (L - 1) / (n - 1);
    const int lo = std::min(static_cast<int>(pos), L - 2);
    const double frac = pos - lo;
    out[i] = w[lo] * (1.0 - frac) + w[lo + 1] * frac;
  }
  return out;
}

}  // namespace

std::vector<double> encoder_embed(std::span<const double> window) {
  if (window.size() < 2) throw validation_error("encoder_embed: window too short");
  const int L = static_cast<int>(window.size());
  std::vector<double> feat;
  feat.reserve(kEmbedDim);

  const double m = mean_of(window);
  const double sd = stddev_of(window, m);
  feat.push_back(m);
  feat.push_back(sd);

  // autocorrelations, lag-adjusted numerator over variance
  double denom = 0;
  for (double v : window) denom += (v - m) * (v - m);
  for (int lag = 1; lag <= 4; ++lag) {
    if (denom < 1e-12 || L <= lag) {
      feat.push_back(0.0);
      continue;
    }
    double num = 0;
    for (int t = 0; t + lag < L; ++t) num += (window[t] - m) * (window[t + lag] - m);
    feat.push_back((num / (L - lag)) / (denom / L));
  }

  for (int k = 0; k < 8; ++k) {
    if (k >= L) {
      feat.push_back(0.0);
      continue;
    }
    double re = 0, im = 0;
    for (int t = 0; t < L; ++t) {
      const double a = 2.0 * std::numbers::pi * k * t / L;
      re += window[t] * std::cos(a);
      im -= window[t] * std::sin(a);
    }
    feat.push_back(std::sqrt(re * re + im * im));
  }

  auto z = resample_linear(window, kResample);
  const double zm = mean_of(z);
  const double zs = std::max(stddev_of(z, zm), 1e-8);
  for (auto& v : z) v = (v - zm) / zs;
  const auto& R = projection_matrix();
  for (int p = 0; p < kNumProjections; ++p) {
    double acc = 0;
    for (int i = 0; i < kResample; ++i) acc += R[static_cast<size_t>(p) * kResample + i] * z[i];
    feat.push_back(std::tanh(acc));
  }
  return feat;
}

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

// PSD square root via symmetric eigendecomposition with eigenvalue flooring
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(std::span<const double> mu1, const Matrix& cov1,
                        std::span<const double> mu2, const Matrix& cov2) {
  const int d = static_cast<int>(mu1.size());
  if (static_cast<int>(mu2.size()) != d || cov1.rows() != d || cov1.cols() != d ||
      cov2.rows() != d || cov2.cols() != d)
    throw validation_error("frechet_distance: dimension mismatch");
  for (double v : mu1)
    if (!std::isfinite(v)) throw validation_error("frechet_distance: non-finite mean");
  for (double v : mu2)
    if (!std::isfinite(v)) throw validation_error("frechet_distance: non-finite mean");
  if (!cov1.all_finite() || !cov2.all_finite())
    throw validation_error("frechet_distance: non-finite covariance");

  double mean_term = 0;
  for (int i = 0; i < d; ++i) mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);

  const Eigen::MatrixXd c1 = to_eigen(cov1), c2 = to_eigen(cov2);
  const Eigen::MatrixXd s1 = psd_sqrt(c1);
  const Eigen::MatrixXd cross = psd_sqrt(s1 * c2 * s1);  // sqrt(sqrt(c1) c2 sqrt(c1))
  const double trace_term = c1.trace() + c2.trace() - 2.0 * cross.trace();
  return std::max(0.0, mean_term + trace_term);
}

namespace {

void moments(const std::vector<std::vector<double>>& embeds, std::vector<double>& mu, Matrix& cov) {
  const int n = static_cast<int>(embeds.size());
  const int d = static_cast<int>(embeds.front().size());
  mu.assign(d, 0.0);
  for (const auto& e : embeds)
    for (int i = 0; i < d; ++i) mu[i] += e[i];
  for (auto& v : mu) v /= n;
  cov = Matrix(d, d);
  for (const auto& e : embeds)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) cov(i, j) += (e[i] - mu[i]) * (e[j] - mu[j]);
  const double div = n > 1 ? n - 1.0 : 1.0;
  for (auto& v : cov.data()) v /= div;
  for (int i = 0; i < d; ++i) cov(i, i) += 1e-6;  // diagonal loading
}

}  // namespace

ContextFidResult context_fid(const SeriesSet& real, const SeriesSet& synth) {
  if (real.windows.empty() || synth.windows.empty())
    throw validation_error("context_fid: empty window set");
  std::vector<std::vector<double>> er, es;
  er.reserve(real.windows.size());
  es.reserve(synth.windows.size());
  for (const auto& w : real.windows) er.push_back(encoder_embed(w));
  for (const auto& w : synth.windows) es.push_back(encoder_embed(w));

  std::vector<double> mu1, mu2;
  Matrix c1, c2;
  moments(er, mu1, c1);
  moments(es, mu2, c2);

  ContextFidResult res;
  res.value = frechet_distance(mu1, c1, mu2, c2);
  res.small_sample = static_cast<int>(er.size()) < 2 * kEmbedDim ||
                     static_cast<int>(es.size()) < 2 * kEmbedDim;
  return res;
}

namespace {

Matrix subject_corr(const Matrix& series, int& zero_var_count) {
  const int d = series.rows(), t = series.cols();
  std::vector<double> mean(d), sd(d);
  for (int r = 0; r < d; ++r) {
    mean[r] = mean_of(series.row(r));
    sd[r] = stddev_of(series.row(r), mean[r]);
    if (sd[r] < 1e-12) ++zero_var_count;
  }
  Matrix corr(d, d);
  for (int i = 0; i < d; ++i) {
    corr(i, i) = 1.0;
    for (int j = i + 1; j < d; ++j) {
      double v = 0.0;
      if (sd[i] >= 1e-12 && sd[j] >= 1e-12) {
        double acc = 0;
        for (int k = 0; k < t; ++k) acc += (series(i, k) - mean[i]) * (series(j, k) - mean[j]);
        v = acc / (t * sd[i] * sd[j]);
      }
      corr(i, j) = corr(j, i) = v;
    }
  }
  return corr;
}

Matrix cohort_mean_corr(const std::vector<SubjectRecord>& recs, int& zero_var_count) {
  const int d = recs.front().series.rows();
  Matrix acc(d, d);
  for (const auto& r : recs) {
    const Matrix c = subject_corr(r.series, zero_var_count);
    for (size_t i = 0; i < acc.size(); ++i) acc.data()[i] += c.data()[i];
  }
  for (auto& v : acc.data()) v /= static_cast<double>(recs.size());
  return acc;
}

}  // namespace

double correlational_score(const std::vector<SubjectRecord>& real,
                           const std::vector<SubjectRecord>& synth, double scale) {
  if (real.empty() || synth.empty()) throw validation_error("correlational_score: empty cohort");
  if (real.front().series.rows() != synth.front().series.rows())
    throw validation_error("correlational_score: cohorts differ in D");
  int zero_var = 0;
  const Matrix cr = cohort_mean_corr(real, zero_var);
  const Matrix cs = cohort_mean_corr(synth, zero_var);
  if (zero_var > 0)
    std::cerr << "correlational_score: " << zero_var
              << " zero-variance ROI series; their correlations set to 0\n";
  double sum = 0;
  for (size_t i = 0; i < cr.size(); ++i) sum += std::abs(cr.data()[i] - cs.data()[i]);
  return scale * sum;
}

namespace {

struct Split {
  std::vector<int> train, test;
};

// random 80/20 split; redrawn while either side is more imbalanced than 70/30
Split balanced_split(int n_real, int n_synth, Rng& rng) {
  const int n = n_real + n_synth;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    const int n_test = std::max(1, n / 5);
    Split s;
    s.test.assign(idx.begin(), idx.begin() + n_test);
    s.train.assign(idx.begin() + n_test, idx.end());
    auto balanced = [n_real](const std::vector<int>& part) {
      int real = 0;
      for (int i : part)
        if (i < n_real) ++real;
      const double frac = static_cast<double>(real) / part.size();
      return frac >= 0.3 && frac <= 0.7;
    };
    if (balanced(s.train) && balanced(s.test)) return s;
  }
  throw numeric_error("discriminative_score: could not draw a balanced split");
}

}  // namespace

ScoreStat discriminative_score(const SeriesSet& real, const SeriesSet& synth, int repeats,
                               uint64_t seed) {
  if (static_cast<int>(real.windows.size()) < 40 || static_cast<int>(synth.windows.size()) < 40)
    throw validation_error("discriminative_score: each set needs >= 40 windows");
  if (repeats < 1) throw validation_error("discriminative_score: repeats must be >= 1");

  std::vector<std::vector<double>> feats;
  feats.reserve(real.windows.size() + synth.windows.size());
  for (const auto& w : real.windows) feats.push_back(encoder_embed(w));
  for (const auto& w : synth.windows) feats.push_back(encoder_embed(w));
  const int n_real = static_cast<int>(real.windows.size());
  const int n = static_cast<int>(feats.size());
  const int d = kEmbedDim;
  auto label = [n_real](int i) { return i < n_real ? 1.0 : 0.0; };

  std::vector<double> scores;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = substream(seed, "disc-repeat", static_cast<uint64_t>(rep));
    const Split split = balanced_split(n_real, n - n_real, rng);

    // z-score features on the training split
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (int i : split.train)
      for (int j = 0; j < d; ++j) mu[j] += feats[i][j];
    for (auto& v : mu) v /= split.train.size();
    for (int i : split.train)
      for (int j = 0; j < d; ++j) sd[j] += (feats[i][j] - mu[j]) * (feats[i][j] - mu[j]);
    for (auto& v : sd) v = std::sqrt(v / split.train.size()) + 1e-8;

    // logistic regression, full-batch gradient descent
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<double> zi(d);
    for (int iter = 0; iter < 500; ++iter) {
      std::vector<double> gw(d, 0.0);
      double gb = 0.0;
      for (int i : split.train) {
        double z = b;
        for (int j = 0; j < d; ++j) z += w[j] * (feats[i][j] - mu[j]) / sd[j];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double err = p - label(i);
        for (int j = 0; j < d; ++j) gw[j] += err * (feats[i][j] - mu[j]) / sd[j];
        gb += err;
      }
      const double inv = 1.0 / split.train.size();
      for (int j = 0; j < d; ++j) w[j] -= 0.1 * (gw[j] * inv + 1e-4 * w[j]);
      b -= 0.1 * gb * inv;
    }

    int correct = 0;
    for (int i : split.test) {
      double z = b;
      for (int j = 0; j < d; ++j) z += w[j] * (feats[i][j] - mu[j]) / sd[j];
      const double pred = z > 0 ? 1.0 : 0.0;
      if (pred == label(i)) ++correct;
    }
    scores.push_back(std::abs(static_cast<double>(correct) / split.test.size() - 0.5));
  }

  ScoreStat st;
  st.mean = mean_of(scores);
  st.stddev = repeats > 1 ? stddev_of(scores, st.mean) : 0.0;
  return st;
}

namespace {

// one-step-ahead ridge AR fit: predict x[t] from the previous `order` values
// plus an unpenalized intercept
std::vector<double> fit_ridge_ar(const std::vector<std::vector<double>>& wins, int order,
                                 double ridge) {
  const int p = order + 1;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd row(p);
  for (const auto& w : wins) {
    for (int t = order; t < static_cast<int>(w.size()); ++t) {
      for (int j = 0; j < order; ++j) row(j) = w[t - order + j];
      row(order) = 1.0;
      xtx.noalias() += row * row.transpose();
      xty.noalias() += row * w[t];
    }
  }
  for (int j = 0; j < order; ++j) xtx(j, j) += ridge;
  Eigen::VectorXd beta = xtx.ldlt().solve(xty);
  return {beta.data(), beta.data() + p};
}

double eval_mae(const std::vector<std::vector<double>>& wins, std::span<const double> beta,
                int order) {
  double err = 0;
  long count = 0;
  for (const auto& w : wins) {
    for (int t = order; t < static_cast<int>(w.size()); ++t) {
      double pred = beta[order];
      for (int j = 0; j < order; ++j) pred += beta[j] * w[t - order + j];
      err += std::abs(pred - w[t]);
      ++count;
    }
  }
  return err / count;
}

}  // namespace

ScoreStat predictive_score(const SeriesSet& real, const SeriesSet& synth, int repeats,
                           uint64_t seed) {
  if (real.length < 2 || real.length != synth.length)
    throw validation_error("predictive_score: window lengths must match and be >= 2");
  if (real.windows.empty() || synth.windows.empty())
    throw validation_error("predictive_score: empty window set");
  if (repeats < 1) throw validation_error("predictive_score: repeats must be >= 1");

  // scale both sets to [0, 1] by the real set's min/max
  double lo = real.windows[0][0], hi = lo;
  for (const auto& w : real.windows)
    for (double v : w) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = std::max(hi - lo, 1e-8);
  auto scaled = [lo, span](const std::vector<std::vector<double>>& wins) {
    auto out = wins;
    for (auto& w : out)
      for (auto& v : w) v = (v - lo) / span;
    return out;
  };
  const auto sreal = scaled(real.windows);
  const auto ssynth = scaled(synth.windows);

  const int order = std::min(8, real.length - 1);
  std::vector<double> maes;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = substream(seed, "pred-repeat", static_cast<uint64_t>(rep));
    std::vector<std::vector<double>> boot(ssynth.size());
    for (auto& w : boot) w = ssynth[rng.next_below(ssynth.size())];
    const auto beta = fit_ridge_ar(boot, order, 1e-3);
    maes.push_back(eval_mae(sreal, beta, order));
  }
  ScoreStat st;
  st.mean = mean_of(maes);
  st.stddev = repeats > 1 ? stddev_of(maes, st.mean) : 0.0;
  return st;
}

}  // namespace tfdiff
