#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfdiff/matrix.hpp"
#include "tfdiff/signal_io.hpp"

namespace tfdiff {

// Equal-length univariate evaluation windows sliced from ROI series.
struct SeriesSet {
  int length = 0;
  std::vector<std::vector<double>> windows;
};

SeriesSet slice_windows(const std::vector<SubjectRecord>& records, int L, int stride);

inline constexpr int kEmbedDim = 64;

// Deterministic 64-dim window feature: mean, std, lag-1..4 autocorrelations,
// first 8 DFT magnitude bins, and 50 fixed random projections
// tanh(R * z) of the z-scored window resampled to length 64.
std::vector<double> encoder_embed(std::span<const double> window);

double frechet_distance(std::span<const double> mu1, const Matrix& cov1,
                        std::span<const double> mu2, const Matrix& cov2);

struct ContextFidResult {
  double value = 0.0;
  bool small_sample = false;
};

ContextFidResult context_fid(const SeriesSet& real, const SeriesSet& synth);

double correlational_score(const std::vector<SubjectRecord>& real,
                           const std::vector<SubjectRecord>& synth, double scale = 0.1);

struct ScoreStat {
  double mean = 0.0;
  double stddev = 0.0;
};

ScoreStat discriminative_score(const SeriesSet& real, const SeriesSet& synth, int repeats,
                               uint64_t seed);
ScoreStat predictive_score(const SeriesSet& real, const SeriesSet& synth, int repeats,
                           uint64_t seed);

struct EvalReport {
  int length = 0;
  bool skipped = false;
  std::string note;
  ContextFidResult context_fid;
  double correlational = 0.0;
  ScoreStat discriminative;
  ScoreStat predictive;
};

}  // namespace tfdiff
