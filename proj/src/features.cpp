#include "glutag/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "glutag/error.hpp"

namespace glutag {

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_seconds * sample_rate));
}

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_seconds * sample_rate));
}

int FeatureConfig::fft_size() const { return next_pow2(window_samples()); }

int FeatureConfig::frame_count(Eigen::Index num_samples) const {
  const Eigen::Index hop = hop_samples();
  return static_cast<int>((num_samples + hop - 1) / hop);
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd stft_power(const Waveform& wave, double window_seconds, double hop_seconds) {
  if (wave.samples.size() == 0) throw Error(ErrorCode::kEmptySignal, "waveform has no samples");
  if (wave.sample_rate <= 0 || !(window_seconds > 0.0) || !(hop_seconds > 0.0))
    throw Error(ErrorCode::kBadRange, "sample rate, window and hop must be positive");

  FeatureConfig geom;
  geom.sample_rate = wave.sample_rate;
  geom.window_seconds = window_seconds;
  geom.hop_seconds = hop_seconds;
  const int win = geom.window_samples();
  const int hop = geom.hop_samples();
  if (win < 1 || hop < 1) throw Error(ErrorCode::kBadRange, "window or hop shorter than a sample");
  const int nfft = next_pow2(win);
  const int frames = geom.frame_count(wave.samples.size());
  const int bins = nfft / 2 + 1;

  Eigen::VectorXd window(win);
  for (int n = 0; n < win; ++n)
    window[n] = win == 1 ? 1.0
                         : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (win - 1));

  // Padded length (T-1)*hop + win; samples past the signal end are zero.
  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spectrum;
  Eigen::MatrixXd power(frames, bins);
  const Eigen::Index len = wave.samples.size();
  for (int t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const Eigen::Index start = static_cast<Eigen::Index>(t) * hop;
    for (int n = 0; n < win && start + n < len; ++n)
      frame[static_cast<std::size_t>(n)] = wave.samples[start + n] * window[n];
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) power(t, k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
  }
  return power;
}

Eigen::VectorXd mel_centers(int n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  Eigen::VectorXd centers(n_mels);
  for (int m = 0; m < n_mels; ++m) centers[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (n_mels + 1));
  return centers;
}

Eigen::MatrixXd mel_filterbank(int sample_rate, int fft_size, int n_mels, double fmin,
                               double fmax) {
  if (!(fmin >= 0.0) || !(fmin < fmax) || fmax > sample_rate / 2.0 || n_mels < 1 || fft_size < 2)
    throw Error(ErrorCode::kBadRange, "mel range must satisfy 0 <= fmin < fmax <= Nyquist");
  const int bins = fft_size / 2 + 1;
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));

  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      bank(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

LogMelMatrix log_mel(const Waveform& wave, const FeatureConfig& cfg) {
  if (wave.sample_rate != cfg.sample_rate)
    throw Error(ErrorCode::kBadRange, "waveform rate " + std::to_string(wave.sample_rate) +
                                          " Hz does not match feature rate " +
                                          std::to_string(cfg.sample_rate) + " Hz");
  const Eigen::MatrixXd power = stft_power(wave, cfg.window_seconds, cfg.hop_seconds);
  const Eigen::MatrixXd bank =
      mel_filterbank(cfg.sample_rate, cfg.fft_size(), cfg.n_mels, cfg.fmin, cfg.upper_frequency());
  const Eigen::MatrixXd energy = power * bank.transpose();

  LogMelMatrix out;
  out.values = (energy.array() + cfg.log_floor).log().cast<float>().matrix();
  out.frame_seconds = cfg.window_seconds;
  out.hop_seconds = cfg.hop_seconds;
  return out;
}

}  // namespace glutag
