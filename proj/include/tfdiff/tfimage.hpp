#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tfdiff/matrix.hpp"
#include "tfdiff/signal_io.hpp"

namespace tfdiff {

enum class WindowKind { hann, rect };

// Framed-DFT geometry. K = N/2 + 1 bins are kept (real input), the number of
// frames is M = floor((T - N)/h) + 1, and frames cover [0, (M-1)h + N).
struct WftConfig {
  int N = 16;
  int h = 8;
  WindowKind window = WindowKind::hann;
  int T = 232;

  int num_bins() const { return N / 2 + 1; }
  int num_frames() const { return (T - N) / h + 1; }
  int coverage() const { return (num_frames() - 1) * h + N; }
};

struct NormStats {
  double mean_re = 0, std_re = 1, mean_im = 0, std_im = 1;
};

// 2-channel (real/imaginary) K x M time-frequency image.
struct Spectrogram {
  Matrix re;  // K x M
  Matrix im;  // K x M
  WftConfig config;
  std::optional<NormStats> norm;  // present once normalized
};

std::vector<double> make_window(WindowKind kind, int N);
void validate_config(const WftConfig& cfg);

Spectrogram wft(std::span<const double> series, const WftConfig& cfg);

// Weighted overlap-add inverse; returns the covered prefix of length
// cfg.coverage(). Samples whose squared-window envelope is below epsilon at
// the signal edges are filled with zero (see cola_valid_range); an interior
// envelope gap is a COLA violation and throws.
std::vector<double> iwft(const Spectrogram& spec);

// [first, last) index range over which reconstruction is exact.
std::pair<int, int> cola_valid_range(const WftConfig& cfg);

Spectrogram normalized(const Spectrogram& spec);
Spectrogram unnormalized(const Spectrogram& spec);

struct RoiSpectrogram {
  Spectrogram spec;
  int roi = 0;
};

std::vector<RoiSpectrogram> subject_to_spectrograms(const SubjectRecord& record,
                                                    const WftConfig& cfg);
Matrix spectrograms_to_subject(const std::vector<RoiSpectrogram>& specs, const WftConfig& cfg);

// Model-facing image geometry: N is fixed by the image height (K = N/2 + 1),
// h is searched so M comes closest to the requested width, then frames are
// center-padded with zeros (or center-cropped) to the exact square.
struct ImageGeometry {
  WftConfig wft;
  int image_k = 0;
  int image_m = 0;
  int pad_left = 0;  // >= 0: zero frames added on the left; < 0: frames cropped

  int flat_dim() const { return 2 * image_k * image_m; }
};

ImageGeometry resolve_image_geometry(int image_size, int T, WindowKind window);

// flattened [re rows..., im rows...] of the padded/cropped image
std::vector<double> spectrogram_to_image(const Spectrogram& spec, const ImageGeometry& geo);
Spectrogram image_to_spectrogram(std::span<const double> image, const ImageGeometry& geo,
                                 const NormStats& norm);

// Spectrogram binary format: magic "SPC1", u32 K, u32 M, 4 f32 norm stats
// (NaN sentinel when absent), then re then im row-major little-endian f32.
void write_spectrogram(const std::filesystem::path& path, const Spectrogram& spec);
Spectrogram read_spectrogram(const std::filesystem::path& path, const WftConfig& cfg);

}  // namespace tfdiff
