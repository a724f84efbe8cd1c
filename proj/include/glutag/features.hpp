#pragma once

// Log mel-band energy front end: Hamming-windowed STFT power, triangular
// mel filterbank, natural log with a small floor.

#include <Eigen/Core>

#include "glutag/audio.hpp"
#include "glutag/fmat.hpp"

namespace glutag {

struct FeatureConfig {
  int sample_rate = 16000;
  double window_seconds = 0.064;
  double hop_seconds = 10.0 / 240.0;
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 0.0;  // <= 0 selects Nyquist
  double log_floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;  // next power of two >= window_samples()
  double upper_frequency() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  /// ceil(num_samples / hop): a 10 s clip at the defaults gives 240.
  int frame_count(Eigen::Index num_samples) const;
};

struct LogMelMatrix {
  FloatMatrix values;  // frames x mel bins
  double frame_seconds = 0.0;
  double hop_seconds = 0.0;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bins() const { return values.cols(); }
};

int next_pow2(int n);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Frames start every hop samples; the tail is zero padded so that frame
/// count equals ceil(len / hop). Returns frames x (fft_size/2 + 1).
Eigen::MatrixXd stft_power(const Waveform& wave, double window_seconds, double hop_seconds);

/// Triangular filters on the mel scale 2595 log10(1 + f/700), M x (fft_size/2+1).
Eigen::MatrixXd mel_filterbank(int sample_rate, int fft_size, int n_mels, double fmin, double fmax);

/// Center frequency (Hz) of each filter of mel_filterbank.
Eigen::VectorXd mel_centers(int n_mels, double fmin, double fmax);

LogMelMatrix log_mel(const Waveform& wave, const FeatureConfig& cfg);

}  // namespace glutag
