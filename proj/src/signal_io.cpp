#include "tfdiff/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tfdiff/errors.hpp"
#include "tfdiff/rng.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace tfdiff {

namespace {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; byte-swapping is not implemented");

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void validate_record(const SubjectRecord& rec) {
  if (rec.series.rows() < 1 || rec.series.cols() < 2)
    throw validation_error("subject " + rec.subject_id + ": series must be at least 1x2, got " +
                           std::to_string(rec.series.rows()) + "x" +
                           std::to_string(rec.series.cols()));
  for (int r = 0; r < rec.series.rows(); ++r)
    for (int c = 0; c < rec.series.cols(); ++c)
      if (!std::isfinite(rec.series(r, c)))
        throw validation_error("subject " + rec.subject_id + ": non-finite entry at row " +
                               std::to_string(r) + ", col " + std::to_string(c));
}

}  // namespace

void write_matrix_sdf(const fs::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  os.write("SDF1", 4);
  write_u32(os, static_cast<uint32_t>(m.rows()));
  write_u32(os, static_cast<uint32_t>(m.cols()));
  std::vector<float> buf(m.size());
  for (size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m.data()[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!os) throw io_error("write failed: " + path.string());
}

Matrix read_matrix_sdf(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SDF1", 4) != 0)
    throw io_error("bad magic in " + path.string() + " (expected SDF1)");
  uint32_t rows = read_u32(is), cols = read_u32(is);
  if (!is) throw io_error("truncated header in " + path.string());
  Matrix m(static_cast<int>(rows), static_cast<int>(cols));
  std::vector<float> buf(m.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!is) throw io_error("truncated data in " + path.string());
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = buf[i];
  return m;
}

Matrix read_matrix_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error("ragged CSV row " + std::to_string(rows.size()) + " in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("empty CSV: " + path.string());
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return m;
}

std::pair<std::vector<SubjectRecord>, DatasetManifest> load_dataset(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw io_error("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw io_error("manifest parse failure: " + manifest_path.string() + ": " + e.what());
  }

  DatasetManifest mf;
  mf.num_classes = j.at("num_classes").get<int>();
  mf.class_names = j.at("class_names").get<std::vector<std::string>>();
  mf.sampling_period_s = j.at("sampling_period_s").get<double>();
  if (mf.num_classes < 1) throw validation_error("manifest: num_classes must be >= 1");
  if (static_cast<int>(mf.class_names.size()) != mf.num_classes)
    throw validation_error("manifest: class_names size does not match num_classes");
  if (!(mf.sampling_period_s > 0)) throw validation_error("manifest: sampling_period_s must be > 0");

  const fs::path base = manifest_path.parent_path();
  std::vector<SubjectRecord> records;
  std::vector<std::string> seen_ids;
  int d = -1, t = -1;
  for (const auto& js : j.at("subjects")) {
    DatasetManifest::Entry e;
    e.subject_id = js.at("subject_id").get<std::string>();
    e.class_label = js.at("class_label").get<int>();
    e.path = js.at("path").get<std::string>();
    if (js.contains("provenance")) e.provenance = js.at("provenance").get<std::string>();
    if (std::find(seen_ids.begin(), seen_ids.end(), e.subject_id) != seen_ids.end())
      throw validation_error("manifest: duplicate subject_id " + e.subject_id);
    seen_ids.push_back(e.subject_id);
    if (e.class_label < 0 || e.class_label >= mf.num_classes)
      throw validation_error("subject " + e.subject_id + ": class_label " +
                             std::to_string(e.class_label) + " out of range [0, " +
                             std::to_string(mf.num_classes) + ")");

    const fs::path file = base / e.path;
    if (!fs::exists(file)) throw io_error("subject " + e.subject_id + ": missing file " + file.string());
    SubjectRecord rec;
    rec.subject_id = e.subject_id;
    rec.class_label = e.class_label;
    rec.series = file.extension() == ".csv" ? read_matrix_csv(file) : read_matrix_sdf(file);
    validate_record(rec);
    if (d < 0) {
      d = rec.series.rows();
      t = rec.series.cols();
    } else if (rec.series.rows() != d || rec.series.cols() != t) {
      throw validation_error("subject " + e.subject_id + ": shape " +
                             std::to_string(rec.series.rows()) + "x" +
                             std::to_string(rec.series.cols()) + " differs from first subject " +
                             std::to_string(d) + "x" + std::to_string(t));
    }
    records.push_back(std::move(rec));
    mf.subjects.push_back(std::move(e));
  }
  return {std::move(records), std::move(mf)};
}

void save_dataset(const std::vector<SubjectRecord>& records, const DatasetManifest& manifest,
                  const fs::path& out_dir) {
  if (records.size() != manifest.subjects.size())
    throw validation_error("save_dataset: record count differs from manifest entry count");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create directory " + out_dir.string() + ": " + ec.message());

  json j;
  j["num_classes"] = manifest.num_classes;
  j["class_names"] = manifest.class_names;
  j["sampling_period_s"] = manifest.sampling_period_s;
  j["subjects"] = json::array();
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& e = manifest.subjects[i];
    std::string rel = e.path.empty() ? e.subject_id + ".sdf" : e.path;
    write_matrix_sdf(out_dir / rel, records[i].series);
    j["subjects"].push_back({{"subject_id", e.subject_id},
                             {"class_label", e.class_label},
                             {"path", rel},
                             {"provenance", e.provenance}});
  }
  std::ofstream os(out_dir / "manifest.json");
  if (!os) throw io_error("cannot write manifest in " + out_dir.string());
  os << j.dump(2) << "\n";
  if (!os) throw io_error("manifest write failed in " + out_dir.string());
}

SynthCohortConfig default_two_class_config() {
  SynthCohortConfig cfg;
  ClassGenerator hc{"HC", 0.5, -0.3, 0.4, {}, {}};
  ClassGenerator mdd{"MDD", 0.5, -0.3, 0.4, {{0.05, 1.0}}, {}};
  cfg.classes = {hc, mdd};
  return cfg;
}

namespace {

bool ar2_stable(double phi1, double phi2) {
  // stationarity triangle for x[t] = phi1 x[t-1] + phi2 x[t-2] + e
  return std::abs(phi2) < 1.0 && phi1 + phi2 < 1.0 && phi2 - phi1 < 1.0;
}

bool generators_equal(const ClassGenerator& a, const ClassGenerator& b) {
  if (a.phi1 != b.phi1 || a.phi2 != b.phi2 || a.noise_std != b.noise_std) return false;
  if (a.sinusoids.size() != b.sinusoids.size()) return false;
  for (size_t i = 0; i < a.sinusoids.size(); ++i)
    if (a.sinusoids[i].freq_hz != b.sinusoids[i].freq_hz || a.sinusoids[i].amp != b.sinusoids[i].amp)
      return false;
  return a.coupled_pairs == b.coupled_pairs;
}

}  // namespace

std::vector<SubjectRecord> generate_synthetic_cohort(const SynthCohortConfig& config) {
  if (config.num_subjects_per_class < 0 || config.D < 1 || config.T < 2)
    throw validation_error("cohort config: need num_subjects_per_class >= 0, D >= 1, T >= 2");
  if (config.classes.empty()) throw validation_error("cohort config: at least one class generator");
  if (!(config.sampling_period_s > 0))
    throw validation_error("cohort config: sampling_period_s must be > 0");
  for (const auto& g : config.classes) {
    if (!ar2_stable(g.phi1, g.phi2))
      throw validation_error("class " + g.name + ": unstable AR coefficients (" +
                             std::to_string(g.phi1) + ", " + std::to_string(g.phi2) + ")");
    for (auto [i, jj] : g.coupled_pairs)
      if (i < 0 || jj < 0 || i >= config.D || jj >= config.D || i == jj)
        throw validation_error("class " + g.name + ": bad coupled pair");
  }
  for (size_t a = 0; a < config.classes.size(); ++a)
    for (size_t b = a + 1; b < config.classes.size(); ++b)
      if (generators_equal(config.classes[a], config.classes[b]))
        throw validation_error("classes " + std::to_string(a) + " and " + std::to_string(b) +
                               " have identical generator parameters");

  constexpr int kBurnIn = 100;
  const double dt = config.sampling_period_s;
  std::vector<SubjectRecord> records;
  for (size_t c = 0; c < config.classes.size(); ++c) {
    const auto& gen = config.classes[c];
    for (int s = 0; s < config.num_subjects_per_class; ++s) {
      const uint64_t subj_index = c * static_cast<size_t>(config.num_subjects_per_class) + s;
      SubjectRecord rec;
      rec.subject_id = "s" + std::to_string(c) + "_" + std::to_string(s);
      rec.class_label = static_cast<int>(c);
      rec.series = Matrix(config.D, config.T);

      // one phase per (subject, sinusoid), shared across ROIs
      Rng phase_rng = substream(config.seed, "cohort-phase", subj_index);
      std::vector<double> phases(gen.sinusoids.size());
      for (auto& p : phases) p = phase_rng.next_uniform(0.0, 2.0 * std::numbers::pi);

      // innovation source per ROI; coupled ROIs share the source stream
      std::vector<int> source(config.D);
      for (int r = 0; r < config.D; ++r) source[r] = r;
      for (auto [i, jj] : gen.coupled_pairs) source[jj] = i;

      for (int r = 0; r < config.D; ++r) {
        Rng noise = substream(config.seed, "cohort-noise",
                              subj_index * static_cast<uint64_t>(config.D) + source[r]);
        double x1 = 0.0, x2 = 0.0;
        for (int t = -kBurnIn; t < config.T; ++t) {
          double x = gen.phi1 * x1 + gen.phi2 * x2 + gen.noise_std * noise.next_gaussian();
          x2 = x1;
          x1 = x;
          if (t >= 0) rec.series(r, t) = x;
        }
        for (size_t si = 0; si < gen.sinusoids.size(); ++si) {
          const auto& sn = gen.sinusoids[si];
          for (int t = 0; t < config.T; ++t)
            rec.series(r, t) +=
                sn.amp * std::sin(2.0 * std::numbers::pi * sn.freq_hz * t * dt + phases[si]);
        }
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

DatasetManifest manifest_for_cohort(const SynthCohortConfig& config,
                                    const std::vector<SubjectRecord>& records) {
  DatasetManifest mf;
  mf.num_classes = static_cast<int>(config.classes.size());
  for (const auto& g : config.classes) mf.class_names.push_back(g.name);
  mf.sampling_period_s = config.sampling_period_s;
  for (const auto& r : records)
    mf.subjects.push_back({r.subject_id, r.class_label, r.subject_id + ".sdf", "real"});
  return mf;
}

std::vector<FoldSplit> stratified_kfold(const std::vector<SubjectRecord>& records, int k,
                                        uint64_t seed) {
  if (k < 2) throw validation_error("stratified_kfold: k must be >= 2");
  int num_classes = 0;
  for (const auto& r : records) num_classes = std::max(num_classes, r.class_label + 1);

  std::vector<std::vector<int>> by_class(num_classes);
  for (size_t i = 0; i < records.size(); ++i)
    by_class[records[i].class_label].push_back(static_cast<int>(i));
  for (int c = 0; c < num_classes; ++c)
    if (static_cast<int>(by_class[c].size()) < k)
      throw validation_error("stratified_kfold: class " + std::to_string(c) + " has " +
                             std::to_string(by_class[c].size()) + " members, fewer than k=" +
                             std::to_string(k));

  // Fisher-Yates within class, then deal round-robin so per-class fold counts
  // differ by at most one.
  std::vector<std::vector<int>> fold_members(k);
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    Rng rng = substream(seed, "fold-shuffle", static_cast<uint64_t>(c));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.next_below(i)]);
    for (size_t i = 0; i < idx.size(); ++i) fold_members[i % k].push_back(idx[i]);
  }

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    auto test = fold_members[f];
    std::sort(test.begin(), test.end());
    std::vector<int> train;
    for (size_t i = 0; i < records.size(); ++i)
      if (!std::binary_search(test.begin(), test.end(), static_cast<int>(i)))
        train.push_back(static_cast<int>(i));
    folds[f] = {std::move(train), std::move(test)};
  }
  return folds;
}

}  // namespace tfdiff
