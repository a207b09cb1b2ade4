#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tfdiff/matrix.hpp"

namespace tfdiff {

// Symmetric D x D functional-connectivity matrix (diagonal 1 after
// correlation conversion); threshold metadata records (tau, kept edges).
struct FcMatrix {
  Matrix values;
  struct ThresholdMeta {
    double tau = 1.0;
    int kept_edges = 0;
  };
  std::optional<ThresholdMeta> threshold_meta;
};

struct Edge {
  int i = 0, j = 0;  // i < j
  double weight = 0.0;
};

// Shrunk covariance (1-a)*S + a*(trace(S)/D)*I with the Ledoit-Wolf optimal
// intensity a estimated from the data; S uses divisor T on mean-centered rows.
std::pair<Matrix, double> ledoit_wolf_cov(const Matrix& series);

FcMatrix cov_to_corr(const Matrix& cov);

// keep the ceil(tau * D(D-1)/2) strongest upper-triangle entries by absolute
// value (ties broken by lexicographic (i, j)), zero the rest symmetrically
FcMatrix threshold_strongest(const FcMatrix& fc, double tau);

// entrywise mean plus a binary off-diagonal mask |mean| >= threshold
std::pair<FcMatrix, Matrix> group_average(const std::vector<FcMatrix>& fcs, double threshold);

std::vector<Edge> fc_difference_edges(const FcMatrix& group_a, const FcMatrix& group_b, int top_n);

}  // namespace tfdiff
