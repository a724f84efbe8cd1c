#pragma once

#include <Eigen/Core>

#include <string>

namespace glutag {

/// Mono signal with samples nominally in [-1, 1].
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 16000;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// 16-bit PCM mono RIFF/WAVE. Samples are clamped to [-1, 1] and rounded
/// to the nearest 1/32767 step on write.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave);

}  // namespace glutag
