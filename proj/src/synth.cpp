#include "glutag/synth.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>

#include "glutag/error.hpp"

namespace glutag {

namespace fs = std::filesystem;

namespace {

constexpr double kFadeSeconds = 0.010;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_template(const EventTemplate& tpl, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (!(tpl.amplitude >= 0.0 && tpl.amplitude <= 1.0))
    throw Error(ErrorCode::kBadTemplate, tpl.name + ": amplitude must lie in [0, 1]");
  if (!(tpl.freq_lo > 0.0 && tpl.freq_lo < nyquist && tpl.freq_hi > 0.0 && tpl.freq_hi < nyquist))
    throw Error(ErrorCode::kBadTemplate, tpl.name + ": frequencies must lie in (0, Nyquist)");
  if (tpl.kind == SynthKind::kNoiseBurst && !(tpl.freq_lo < tpl.freq_hi))
    throw Error(ErrorCode::kBadTemplate, tpl.name + ": empty noise band");
  if (tpl.kind == SynthKind::kAmTone && !(tpl.mod_freq > 0.0))
    throw Error(ErrorCode::kBadTemplate, tpl.name + ": modulation rate must be positive");
}

Eigen::VectorXd band_noise(Eigen::Index n, double lo, double hi, int sample_rate,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> white(static_cast<std::size_t>(n));
  for (auto& s : white) s = gauss(rng);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const std::size_t mirrored = std::min(k, spec.size() - k);
    const double f = static_cast<double>(mirrored) * sample_rate / static_cast<double>(n);
    if (f < lo || f > hi) spec[k] = 0.0;
  }
  std::vector<double> band;
  fft.inv(band, spec);
  Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(band.data(), n);
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0.0) out /= peak;
  return out;
}

std::string join_classes(const TagSet& tags, const ClassTable& table) {
  std::string out;
  for (int k : tags) {
    if (!out.empty()) out += ';';
    out += table.name(k);
  }
  return out;
}

}  // namespace

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kTone: return "tone";
    case SynthKind::kChirp: return "chirp";
    case SynthKind::kNoiseBurst: return "noise";
    case SynthKind::kAmTone: return "am";
  }
  return "?";
}

SynthKind parse_synth_kind(const std::string& text) {
  for (auto k : {SynthKind::kTone, SynthKind::kChirp, SynthKind::kNoiseBurst, SynthKind::kAmTone})
    if (to_string(k) == text) return k;
  throw Error(ErrorCode::kBadTemplate, "unknown synthesis kind '" + text + "'");
}

void ClipSpec::check() const {
  if (sample_rate <= 0 || !(clip_seconds > 0.0))
    throw Error(ErrorCode::kConfig, "clip length and sample rate must be positive");
  if (min_events < 1 || max_events < min_events)
    throw Error(ErrorCode::kConfig, "event count range must satisfy 1 <= min <= max");
  if (!(min_duration > 0.0) || max_duration < min_duration || max_duration > clip_seconds)
    throw Error(ErrorCode::kConfig, "event durations must fit in the clip");
  if (max_attempts < 1) throw Error(ErrorCode::kConfig, "max_attempts must be positive");
}

DatasetPreset default_preset() {
  DatasetPreset p;
  p.table = ClassTable({"tone", "chirp", "noise_burst", "am_tone"});
  p.templates = {
      {"tone", SynthKind::kTone, 440.0, 440.0, 0.0, 0.5},
      {"chirp", SynthKind::kChirp, 1000.0, 2000.0, 0.0, 0.5},
      {"noise_burst", SynthKind::kNoiseBurst, 3000.0, 3900.0, 0.0, 0.5},
      {"am_tone", SynthKind::kAmTone, 600.0, 600.0, 8.0, 0.5},
  };
  p.clip = ClipSpec{};
  p.features.sample_rate = 8000;
  return p;
}

DatasetPreset kitchen_preset() {
  DatasetPreset p;
  p.table = ClassTable({"speech", "dog", "cat", "bell", "dishes", "frying", "blender", "water",
                        "vacuum_cleaner", "shaver"});
  p.templates = {
      {"speech", SynthKind::kAmTone, 300.0, 300.0, 4.0, 0.5},
      {"dog", SynthKind::kTone, 700.0, 700.0, 0.0, 0.5},
      {"cat", SynthKind::kChirp, 1000.0, 1400.0, 0.0, 0.5},
      {"bell", SynthKind::kTone, 2000.0, 2000.0, 0.0, 0.5},
      {"dishes", SynthKind::kNoiseBurst, 5000.0, 6000.0, 0.0, 0.5},
      {"frying", SynthKind::kNoiseBurst, 6500.0, 7500.0, 0.0, 0.5},
      {"blender", SynthKind::kAmTone, 1700.0, 1700.0, 30.0, 0.5},
      {"water", SynthKind::kNoiseBurst, 3000.0, 3800.0, 0.0, 0.5},
      {"vacuum_cleaner", SynthKind::kNoiseBurst, 4200.0, 4800.0, 0.0, 0.5},
      {"shaver", SynthKind::kAmTone, 2600.0, 2600.0, 60.0, 0.5},
  };
  p.clip.clip_seconds = 10.0;
  p.clip.sample_rate = 16000;
  p.clip.min_events = 1;
  p.clip.max_events = 4;
  p.clip.min_duration = 0.5;
  p.clip.max_duration = 3.0;
  p.features = FeatureConfig{};
  return p;
}

DatasetPreset preset_by_name(const std::string& name) {
  if (name == "default") return default_preset();
  if (name == "kitchen") return kitchen_preset();
  throw Error(ErrorCode::kConfig, "unknown preset '" + name + "' (expected default|kitchen)");
}

Waveform render_event(const EventTemplate& tpl, double duration, int sample_rate,
                      std::mt19937_64& rng) {
  check_template(tpl, sample_rate);
  if (!(duration > 0.0)) throw Error(ErrorCode::kBadTemplate, "event duration must be positive");
  const auto n = static_cast<Eigen::Index>(std::lround(duration * sample_rate));
  Waveform seg;
  seg.sample_rate = sample_rate;
  seg.samples.resize(n);
  const double two_pi = 2.0 * std::numbers::pi;

  if (tpl.kind == SynthKind::kNoiseBurst) {
    seg.samples = band_noise(n, tpl.freq_lo, tpl.freq_hi, sample_rate, rng);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      double v = 0.0;
      switch (tpl.kind) {
        case SynthKind::kTone: v = std::sin(two_pi * tpl.freq_lo * t); break;
        case SynthKind::kChirp: {
          const double rate = (tpl.freq_hi - tpl.freq_lo) / duration;
          v = std::sin(two_pi * (tpl.freq_lo * t + 0.5 * rate * t * t));
          break;
        }
        case SynthKind::kAmTone:
          v = 0.5 * (1.0 + std::sin(two_pi * tpl.mod_freq * t)) * std::sin(two_pi * tpl.freq_lo * t);
          break;
        case SynthKind::kNoiseBurst: break;
      }
      seg.samples[i] = v;
    }
  }
  seg.samples *= tpl.amplitude;

  const auto fade = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::lround(kFadeSeconds * sample_rate)), n / 2);
  for (Eigen::Index i = 0; i < fade; ++i) {
    const double g = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / fade));
    seg.samples[i] *= g;
    seg.samples[n - 1 - i] *= g;
  }
  return seg;
}

ClipRecord generate_clip(const ClipSpec& spec, const std::vector<EventTemplate>& templates,
                         const ClassTable& table, std::mt19937_64& rng) {
  spec.check();
  if (templates.size() != static_cast<std::size_t>(table.num_classes()))
    throw Error(ErrorCode::kConfig, "one template per class is required");
  const int sr = spec.sample_rate;
  const auto total = static_cast<Eigen::Index>(std::lround(spec.clip_seconds * sr));

  ClipRecord clip;
  clip.wave.sample_rate = sr;
  clip.wave.samples = Eigen::VectorXd::Zero(total);

  std::uniform_int_distribution<int> count_dist(spec.min_events, spec.max_events);
  std::uniform_int_distribution<int> class_dist(0, table.num_classes() - 1);
  std::uniform_real_distribution<double> dur_dist(spec.min_duration, spec.max_duration);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> gain_dist(0.6, 1.0);

  struct Placed {
    int cls;
    Eigen::Index begin, end;
  };
  std::vector<Placed> placed;
  const int n_events = count_dist(rng);
  for (int e = 0; e < n_events; ++e) {
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
      const int cls = class_dist(rng);
      const auto len = std::max<Eigen::Index>(1, std::lround(dur_dist(rng) * sr));
      const Eigen::Index begin = std::min<Eigen::Index>(
          total - len, static_cast<Eigen::Index>(std::floor(unit(rng) * static_cast<double>(total - len + 1))));
      const Eigen::Index end = begin + len;
      ok = std::none_of(placed.begin(), placed.end(), [&](const Placed& q) {
        const bool overlaps = begin < q.end && q.begin < end;
        return overlaps && (q.cls == cls || !spec.allow_overlap);
      });
      if (!ok) continue;
      EventTemplate tpl = templates[static_cast<std::size_t>(cls)];
      tpl.amplitude *= gain_dist(rng);
      const Waveform seg = render_event(tpl, static_cast<double>(len) / sr, sr, rng);
      clip.wave.samples.segment(begin, seg.samples.size()) += seg.samples;
      placed.push_back({cls, begin, end});
    }
    if (!ok)
      throw Error(ErrorCode::kPlacementFailed,
                  "could not place event " + std::to_string(e) + " after " +
                      std::to_string(spec.max_attempts) + " attempts");
  }

  std::normal_distribution<double> gauss(0.0, std::pow(10.0, spec.noise_dbfs / 20.0));
  for (Eigen::Index i = 0; i < total; ++i)
    clip.wave.samples[i] = std::clamp(clip.wave.samples[i] + gauss(rng), -1.0, 1.0);

  std::sort(placed.begin(), placed.end(),
            [](const Placed& a, const Placed& b) { return a.begin < b.begin; });
  for (const auto& q : placed)
    clip.strong.push_back({q.cls, static_cast<double>(q.begin) / sr, static_cast<double>(q.end) / sr});
  clip.sequential = sequential_from_strong(clip.strong, table, spec.clip_seconds);
  clip.weak = weak_from_strong(clip.strong);
  return clip;
}

std::uint64_t clip_seed(std::uint64_t seed, std::uint64_t clip_index) {
  return splitmix64(splitmix64(seed) ^ (clip_index * 0xd1b54a32d192ed03ULL));
}

std::string clip_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05d", index);
  return buf;
}

DatasetSummary generate_dataset(const std::string& dir, const DatasetPreset& preset, int n_clips,
                                std::uint64_t seed, int workers) {
  if (n_clips < 1) throw Error(ErrorCode::kConfig, "n_clips must be positive");
  preset.clip.check();
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "wav", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());

  std::vector<ClipRecord> clips(static_cast<std::size_t>(n_clips));
  std::vector<std::string> failures(static_cast<std::size_t>(n_clips));
  auto make = [&](int i) {
    try {
      std::mt19937_64 rng(clip_seed(seed, static_cast<std::uint64_t>(i)));
      auto& c = clips[static_cast<std::size_t>(i)];
      c = generate_clip(preset.clip, preset.templates, preset.table, rng);
      c.clip_id = clip_name(i);
      write_wav((fs::path(dir) / "wav" / (c.clip_id + ".wav")).string(), c.wave);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(i)] = e.what();
    }
  };
  workers = std::clamp(workers, 1, n_clips);
  if (workers == 1) {
    for (int i = 0; i < n_clips; ++i) make(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < n_clips; i += workers) make(i);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& f : failures)
    if (!f.empty()) throw Error(ErrorCode::kIo, f);

  std::vector<StrongRecord> strong;
  std::vector<SequentialRecord> seq;
  std::vector<WeakRecord> weak;
  DatasetSummary summary;
  std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!manifest) throw Error(ErrorCode::kIo, "cannot write manifest in " + dir);
  manifest << "clip_id,n_events,classes\n";
  for (auto& c : clips) {
    strong.push_back({c.clip_id, c.strong});
    seq.push_back({c.clip_id, c.sequential});
    weak.push_back({c.clip_id, c.weak});
    manifest << c.clip_id << ',' << c.strong.size() << ',' << join_classes(c.weak, preset.table)
             << '\n';
    summary.clips += 1;
    summary.events += static_cast<int>(c.strong.size());
  }
  write_strong_file((fs::path(dir) / "strong.tsv").string(), strong, preset.table);
  write_label_file((fs::path(dir) / "sequential.tsv").string(), seq, preset.table);
  write_weak_file((fs::path(dir) / "weak.tsv").string(), weak, preset.table);
  write_class_table((fs::path(dir) / "classes.txt").string(), preset.table);
  return summary;
}

std::string DatasetSplit::wav_path(std::size_t i) const {
  return (fs::path(dir) / "wav" / (clip_ids.at(i) + ".wav")).string();
}

DatasetSplit load_split(const std::string& dir) {
  DatasetSplit split;
  split.dir = dir;
  split.table = read_class_table((fs::path(dir) / "classes.txt").string());
  const auto seq = parse_label_file((fs::path(dir) / "sequential.tsv").string(), split.table);
  const auto weak = read_weak_file((fs::path(dir) / "weak.tsv").string(), split.table);
  if (seq.size() != weak.size())
    throw Error(ErrorCode::kParseError, dir + ": sequential and weak label counts differ");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].clip_id != weak[i].clip_id)
      throw Error(ErrorCode::kParseError, dir + ": label files list clips in different order");
    split.clip_ids.push_back(seq[i].clip_id);
    split.sequential.push_back(seq[i].tokens);
    split.weak.push_back(weak[i].tags);
  }
  return split;
}

}  // namespace glutag
