#pragma once

// Deterministic synthetic polyphonic clips with exact strong labels.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "glutag/audio.hpp"
#include "glutag/features.hpp"
#include "glutag/labels.hpp"

namespace glutag {

enum class SynthKind { kTone, kChirp, kNoiseBurst, kAmTone };

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& text);

struct EventTemplate {
  std::string name;
  SynthKind kind = SynthKind::kTone;
  double freq_lo = 440.0;     // tone/carrier frequency, chirp start, noise band low edge
  double freq_hi = 440.0;     // chirp end, noise band high edge
  double mod_freq = 8.0;      // AM rate
  double amplitude = 0.5;
};

struct ClipSpec {
  double clip_seconds = 4.0;
  int sample_rate = 8000;
  int min_events = 1;
  int max_events = 3;
  double min_duration = 0.5;
  double max_duration = 1.5;
  bool allow_overlap = true;
  double noise_dbfs = -30.0;
  int max_attempts = 200;  // placement retries per event

  void check() const;
};

struct ClipRecord {
  std::string clip_id;
  Waveform wave;
  std::vector<StrongLabel> strong;
  SequentialLabel sequential;
  TagSet weak;
};

/// A class table, its templates and the generation/feature geometry.
struct DatasetPreset {
  ClassTable table;
  std::vector<EventTemplate> templates;
  ClipSpec clip;
  FeatureConfig features;
  int train_clips = 400;
  int test_clips = 100;
};

/// 4 classes at 8 kHz, 4 s clips: tone 440 Hz, chirp 1-2 kHz, noise burst
/// 3-4 kHz (band edge clamped below Nyquist), AM tone 600 Hz.
DatasetPreset default_preset();
/// 10 classes, 10 s clips at 16 kHz; features come out 240 x 64.
DatasetPreset kitchen_preset();
DatasetPreset preset_by_name(const std::string& name);

/// Segment of round(duration * rate) samples with 10 ms raised-cosine fades.
Waveform render_event(const EventTemplate& tpl, double duration, int sample_rate,
                      std::mt19937_64& rng);

/// Places events at random sample-aligned onsets, never overlapping
/// another instance of the same class, mixes them over white noise and
/// clips to [-1, 1].
ClipRecord generate_clip(const ClipSpec& spec, const std::vector<EventTemplate>& templates,
                         const ClassTable& table, std::mt19937_64& rng);

/// Seed for one clip, independent of generation order.
std::uint64_t clip_seed(std::uint64_t seed, std::uint64_t clip_index);

std::string clip_name(int index);

struct DatasetSummary {
  int clips = 0;
  int events = 0;
};

/// Writes <dir>/wav/<clip>.wav, strong.tsv, sequential.tsv, weak.tsv,
/// manifest.csv and classes.txt. Output depends only on the arguments,
/// not on `workers`.
DatasetSummary generate_dataset(const std::string& dir, const DatasetPreset& preset, int n_clips,
                                std::uint64_t seed, int workers = 1);

struct DatasetSplit {
  std::string dir;
  ClassTable table;
  std::vector<std::string> clip_ids;
  std::vector<SequentialLabel> sequential;
  std::vector<TagSet> weak;

  std::string wav_path(std::size_t i) const;
};

/// Reads classes.txt, sequential.tsv and weak.tsv of a generated split.
DatasetSplit load_split(const std::string& dir);

}  // namespace glutag
