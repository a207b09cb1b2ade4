#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tfdiff/matrix.hpp"

namespace tfdiff {

// One subject's multivariate series: D ROI rows over T time points.
struct SubjectRecord {
  std::string subject_id;
  int class_label = 0;
  Matrix series;  // D x T
};

struct DatasetManifest {
  struct Entry {
    std::string subject_id;
    int class_label = 0;
    std::string path;              // relative to the manifest
    std::string provenance = "real";  // "real" | "synthetic"
  };
  int num_classes = 0;
  std::vector<std::string> class_names;
  double sampling_period_s = 2.0;
  std::vector<Entry> subjects;
};

struct SinusoidSpec {
  double freq_hz = 0.0;
  double amp = 0.0;
};

// AR(2) innovations plus optional additive sinusoids; coupled_pairs (i, j)
// make ROI j reuse ROI i's innovation stream.
struct ClassGenerator {
  std::string name;
  double phi1 = 0.0, phi2 = 0.0;
  double noise_std = 0.0;
  std::vector<SinusoidSpec> sinusoids;
  std::vector<std::pair<int, int>> coupled_pairs;
};

struct SynthCohortConfig {
  int num_subjects_per_class = 10;
  int D = 4;
  int T = 232;
  uint64_t seed = 42;
  double sampling_period_s = 2.0;
  std::vector<ClassGenerator> classes;
};

// φ=(0.5, −0.3) for both classes; class 1 adds an amplitude-1.0 sinusoid at
// 0.05 Hz (Δt = 2 s).
SynthCohortConfig default_two_class_config();

// Subject matrix binary format: magic "SDF1", u32 D, u32 T (little-endian),
// then D*T little-endian f32 row-major.
void write_matrix_sdf(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_sdf(const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);

std::pair<std::vector<SubjectRecord>, DatasetManifest> load_dataset(
    const std::filesystem::path& manifest_path);
void save_dataset(const std::vector<SubjectRecord>& records, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir);

std::vector<SubjectRecord> generate_synthetic_cohort(const SynthCohortConfig& config);
DatasetManifest manifest_for_cohort(const SynthCohortConfig& config,
                                    const std::vector<SubjectRecord>& records);

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> test;
};

std::vector<FoldSplit> stratified_kfold(const std::vector<SubjectRecord>& records, int k,
                                        uint64_t seed);

}  // namespace tfdiff
