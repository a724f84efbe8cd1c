// glutag: synthetic data, features, training, evaluation and decoding for
// sequentially labelled audio tagging.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "glutag/error.hpp"
#include "glutag/features.hpp"
#include "glutag/labels.hpp"
#include "glutag/metrics.hpp"
#include "glutag/synth.hpp"
#include "glutag/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace glutag;

namespace {

// Flags that may also come from a JSON run config. Keys are the long flag
// names without dashes ("epochs", "head", ...). Command-line values win.
class ConfigBinder {
 public:
  explicit ConfigBinder(CLI::App* app) : app_(app) {
    app_->add_option("--config", path_, "JSON run config; flags override its values")
        ->check(CLI::ExistingFile);
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T& target, const std::string& help) {
    CLI::Option* opt = nullptr;
    if constexpr (std::is_same_v<T, bool>)
      opt = app_->add_flag("--" + name, target, help);
    else
      opt = app_->add_option("--" + name, target, help)->capture_default_str();
    std::string key = name;
    for (auto& ch : key)
      if (ch == '-') ch = '_';
    setters_[key] = {opt, [&target, key](const json& v) {
                       try {
                         target = v.get<T>();
                       } catch (const json::exception&) {
                         throw Error(ErrorCode::kConfig, "config key '" + key + "' has the wrong type");
                       }
                     }};
    return opt;
  }

  void apply() const {
    if (path_.empty()) return;
    std::ifstream in(path_);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, path_ + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::kConfig, path_ + ": top level must be an object");
    for (const auto& [key, value] : doc.items()) {
      auto it = setters_.find(key);
      if (it == setters_.end())
        throw Error(ErrorCode::kConfig, path_ + ": unknown key '" + key + "' for " + app_->get_name());
      if (it->second.first->count() == 0) it->second.second(value);
    }
  }

 private:
  CLI::App* app_;
  std::string path_;
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const json&)>>> setters_;
};

void require_path(const std::string& p, const std::string& what) {
  if (p.empty()) throw Error(ErrorCode::kConfig, what + " is required");
  if (!fs::exists(p)) throw Error(ErrorCode::kIo, what + " '" + p + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

json feature_json(const FeatureConfig& f) {
  return {{"sample_rate", f.sample_rate}, {"window_seconds", f.window_seconds},
          {"hop_seconds", f.hop_seconds}, {"n_mels", f.n_mels},
          {"fmin", f.fmin},               {"fmax", f.fmax},
          {"log_floor", f.log_floor}};
}

// Feature geometry of a generated split, falling back to a named preset.
FeatureConfig split_features(const std::string& split_dir, const std::string& preset) {
  const fs::path p = fs::path(split_dir) / "features.json";
  if (!fs::exists(p)) return preset_by_name(preset).features;
  std::ifstream in(p);
  try {
    const json j = json::parse(in);
    FeatureConfig f;
    f.sample_rate = j.at("sample_rate").get<int>();
    f.window_seconds = j.at("window_seconds").get<double>();
    f.hop_seconds = j.at("hop_seconds").get<double>();
    f.n_mels = j.at("n_mels").get<int>();
    f.fmin = j.at("fmin").get<double>();
    f.fmax = j.at("fmax").get<double>();
    f.log_floor = j.at("log_floor").get<double>();
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, p.string() + ": " + e.what());
  }
}

ClassTable table_from(const std::string& classes_file, const std::string& names,
                      const std::string& preset) {
  if (!classes_file.empty()) return read_class_table(classes_file);
  if (!names.empty()) {
    std::vector<std::string> out;
    std::stringstream ss(names);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
    return ClassTable(out);
  }
  return preset_by_name(preset).table;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string preset = "default";
  std::string out;
  std::uint64_t seed = 1;
  int train_clips = -1;
  int test_clips = -1;
  int workers = 1;
};

int run_synth(const SynthArgs& a) {
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto preset = preset_by_name(a.preset);
  const int n_train = a.train_clips >= 0 ? a.train_clips : preset.train_clips;
  const int n_test = a.test_clips >= 0 ? a.test_clips : preset.test_clips;
  // Disjoint seed streams for the two splits.
  const std::uint64_t seeds[2] = {clip_seed(a.seed, 0x7261696eULL), clip_seed(a.seed, 0x74657374ULL)};
  const char* names[2] = {"train", "test"};
  const int counts[2] = {n_train, n_test};
  for (int s = 0; s < 2; ++s) {
    if (counts[s] == 0) continue;
    const fs::path dir = fs::path(a.out) / names[s];
    const auto sum = generate_dataset(dir.string(), preset, counts[s], seeds[s], a.workers);
    write_text(dir / "features.json", feature_json(preset.features).dump(2) + "\n");
    std::printf("%s: %d clips, %d events -> %s\n", names[s], sum.clips, sum.events,
                dir.string().c_str());
  }
  return 0;
}

struct FeaturesArgs {
  std::string data;
  std::string out;
  std::string preset = "default";
  int workers = 1;
};

int run_features(const FeaturesArgs& a) {
  require_path(a.data, "--data");
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto split = load_split(a.data);
  const auto cfg = split_features(a.data, a.preset);
  const auto examples = load_examples(split, cfg, "", a.workers);
  fs::create_directories(a.out);
  for (const auto& ex : examples)
    write_fmat_file((fs::path(a.out) / (ex.clip_id + ".fmat")).string(), ex.features);
  std::printf("%zu feature matrices (%lld x %lld) -> %s\n", examples.size(),
              examples.empty() ? 0LL : static_cast<long long>(examples[0].features.rows()),
              examples.empty() ? 0LL : static_cast<long long>(examples[0].features.cols()),
              a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string features_dir;
  std::string out;
  std::string preset = "default";
  std::string head = "ctc";
  std::string gating = "glu";
  int epochs = 200;
  int patience = 10;
  int batch = 8;
  double lr = 0.001;
  double val_fraction = 0.2;
  double dropout = 0.2;
  std::uint64_t seed = 1;
  int workers = 1;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  require_path(a.data, "--data");
  if (!a.features_dir.empty()) require_path(a.features_dir, "--features-dir");
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto split = load_split(a.data);
  const auto feat = split_features(a.data, a.preset);
  const auto examples = load_examples(split, feat, a.features_dir, a.workers);

  TrainConfig cfg;
  cfg.max_epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.validation_fraction = a.val_fraction;
  cfg.seed = a.seed;
  cfg.workers = a.workers;
  cfg.model.head = parse_head(a.head);
  cfg.model.gating = parse_gating(a.gating);
  cfg.model.dropout = a.dropout;

  const auto res = train(examples, split.table, feat, cfg, [&](const EpochStats& e) {
    if (!a.quiet)
      std::fprintf(stderr, "epoch %3d  train %.5f  val %.5f  %.1fs\n", e.epoch, e.train_loss,
                   e.val_loss, e.seconds);
  });
  save_checkpoint(a.out, res.model);
  write_text(fs::path(a.out) / "train_log.csv", res.log.to_csv());
  std::printf("%s-%s: best epoch %d, stopped at %d (%s)", to_string(cfg.model.gating).c_str(),
              to_string(cfg.model.head).c_str(), res.log.best_epoch, res.log.stop_epoch,
              res.log.stop_reason.c_str());
  if (res.log.skipped_infeasible > 0) std::printf(", %d infeasible clips skipped", res.log.skipped_infeasible);
  std::printf(" -> %s\n", a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string features_dir;
  std::string report;
  int workers = 1;
};

int run_evaluate(const EvalArgs& a) {
  require_path(a.model, "--model");
  require_path(a.data, "--data");
  const auto model = load_checkpoint(a.model);
  const auto split = load_split(a.data);
  if (!(split.table == model.table))
    throw Error(ErrorCode::kConfig, "dataset classes differ from the model's");
  const auto examples = load_examples(split, model.features, a.features_dir, a.workers);
  const auto rep = report(evaluate_records(model, examples), model.table);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::fputs(render_text(rep).c_str(), stdout);
  if (!a.report.empty()) write_text(a.report, render_csv(rep));
  return 0;
}

struct DecodeArgs {
  std::string model;
  std::string data;
  std::string features_dir;
  std::string out;
  int workers = 1;
};

int run_decode(const DecodeArgs& a) {
  require_path(a.model, "--model");
  require_path(a.data, "--data");
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto model = load_checkpoint(a.model);
  if (model.config.head != HeadKind::kCtc)
    throw Error(ErrorCode::kConfig, "decode needs a CTC model, got " + to_string(model.config.head));
  const auto split = load_split(a.data);
  const auto examples = load_examples(split, model.features, a.features_dir, a.workers);
  std::vector<SequentialRecord> recs;
  for (const auto& ex : examples) recs.push_back({ex.clip_id, predict_tags(ex.features, model).decoded});
  write_label_file(a.out, recs, model.table);
  std::printf("%zu decoded clips -> %s\n", recs.size(), a.out.c_str());
  return 0;
}

struct ConvertArgs {
  std::string in;
  std::string out;
  std::string from = "strong";
  std::string to = "sequential";
  std::string classes;
  std::string class_names;
  std::string preset = "default";
};

int run_convert(const ConvertArgs& a) {
  require_path(a.in, "--in");
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto table = table_from(a.classes, a.class_names, a.preset);
  if (a.from == "strong") {
    const auto strong = read_strong_file(a.in, table);
    if (a.to == "sequential") {
      std::vector<SequentialRecord> seq;
      for (const auto& r : strong) seq.push_back({r.clip_id, sequential_from_strong(r.events, table)});
      write_label_file(a.out, seq, table);
    } else if (a.to == "weak") {
      std::vector<WeakRecord> weak;
      for (const auto& r : strong) weak.push_back({r.clip_id, weak_from_strong(r.events)});
      write_weak_file(a.out, weak, table);
    } else {
      throw Error(ErrorCode::kConfig, "strong labels convert to sequential or weak, not '" + a.to + "'");
    }
  } else if (a.from == "sequential") {
    if (a.to != "weak")
      throw Error(ErrorCode::kConfig, "sequential labels carry no times; they convert to weak only");
    const auto seq = parse_label_file(a.in, table);
    std::vector<WeakRecord> weak;
    for (const auto& r : seq) {
      const auto bad = validate(r.tokens, table);
      if (!bad.empty())
        throw Error(ErrorCode::kParseError, r.clip_id + ": malformed sequence at token " +
                                                std::to_string(bad.front().position));
      weak.push_back({r.clip_id, weak_from_sequential(r.tokens)});
    }
    write_weak_file(a.out, weak, table);
  } else {
    throw Error(ErrorCode::kConfig, "--from must be strong or sequential");
  }
  return 0;
}

struct TraceArgs {
  std::string model;
  std::string wav;
  std::string data;
  std::string clip;
  std::string out;
};

int run_dump_trace(const TraceArgs& a) {
  require_path(a.model, "--model");
  if (a.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto model = load_checkpoint(a.model);
  std::string wav = a.wav;
  if (wav.empty()) {
    require_path(a.data, "--data (or --wav)");
    if (a.clip.empty()) throw Error(ErrorCode::kConfig, "--clip is required with --data");
    wav = (fs::path(a.data) / "wav" / (a.clip + ".wav")).string();
  }
  require_path(wav, "audio");
  const auto feats = log_mel(read_wav(wav), model.features).values;
  const auto pred = predict_tags(feats, model);
  std::fputs(dump_frame_trace(pred.trace, trace_columns(model), a.out).c_str(), stdout);
  if (model.config.head == HeadKind::kCtc) {
    std::string line = "decoded:";
    for (Token t : pred.decoded) line += " " + model.table.token_name(t);
    std::puts(line.c_str());
  }
  std::string tags = "tags:";
  for (int k : pred.tags) tags += " " + model.table.name(k);
  std::puts(tags.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polyphonic audio tagging with sequential labels and CTC"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic train/test dataset");
  ConfigBinder b_synth(c_synth);
  b_synth.add("preset", synth.preset, "default (4 classes, 8 kHz, 4 s) or kitchen (10 classes, 16 kHz, 10 s)");
  b_synth.add("out", synth.out, "Output directory; gets train/ and test/");
  b_synth.add("seed", synth.seed, "Dataset seed");
  b_synth.add("train-clips", synth.train_clips, "Training clips (-1: preset size)");
  b_synth.add("test-clips", synth.test_clips, "Test clips (-1: preset size)");
  b_synth.add("workers", synth.workers, "Generation threads; output does not depend on it");

  FeaturesArgs feat;
  auto* c_feat = app.add_subcommand("features", "Extract log-mel FMAT files for a split");
  ConfigBinder b_feat(c_feat);
  b_feat.add("data", feat.data, "Split directory (e.g. data/train)");
  b_feat.add("out", feat.out, "Output directory for <clip>.fmat");
  b_feat.add("preset", feat.preset, "Feature geometry when the split has no features.json");
  b_feat.add("workers", feat.workers, "Extraction threads");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a tagger and write a checkpoint");
  ConfigBinder b_train(c_train);
  b_train.add("data", tr.data, "Training split directory");
  b_train.add("features-dir", tr.features_dir, "Precomputed FMAT directory (default: from WAVs)");
  b_train.add("out", tr.out, "Checkpoint directory");
  b_train.add("preset", tr.preset, "Feature geometry when the split has no features.json");
  b_train.add("head", tr.head, "ctc, gmp or gap")->check(CLI::IsMember({"ctc", "gmp", "gap"}));
  b_train.add("gating", tr.gating, "glu or relu")->check(CLI::IsMember({"glu", "relu"}));
  b_train.add("epochs", tr.epochs, "Maximum epochs");
  b_train.add("patience", tr.patience, "Epochs without validation improvement before stopping");
  b_train.add("batch", tr.batch, "Mini-batch size");
  b_train.add("lr", tr.lr, "Adam learning rate");
  b_train.add("val-fraction", tr.val_fraction, "Held-out share of training clips");
  b_train.add("dropout", tr.dropout, "Dropout rate after each conv block");
  b_train.add("seed", tr.seed, "Initialization, shuffling and dropout seed");
  b_train.add("workers", tr.workers, "Threads per mini-batch; results do not depend on it");
  b_train.add("quiet", tr.quiet, "Do not print per-epoch losses");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Per-class AUC / P / R / F report");
  ConfigBinder b_eval(c_eval);
  b_eval.add("model", ev.model, "Checkpoint directory");
  b_eval.add("data", ev.data, "Split directory");
  b_eval.add("features-dir", ev.features_dir, "Precomputed FMAT directory");
  b_eval.add("report", ev.report, "Also write the report as CSV here");
  b_eval.add("workers", ev.workers, "Feature extraction threads");

  DecodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Best-path decode a split into a sequential label file");
  ConfigBinder b_dec(c_dec);
  b_dec.add("model", dec.model, "CTC checkpoint directory");
  b_dec.add("data", dec.data, "Split directory");
  b_dec.add("features-dir", dec.features_dir, "Precomputed FMAT directory");
  b_dec.add("out", dec.out, "Output label file");
  b_dec.add("workers", dec.workers, "Feature extraction threads");

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert-labels", "Convert strong -> sequential -> weak labels");
  ConfigBinder b_conv(c_conv);
  b_conv.add("in", conv.in, "Input label file");
  b_conv.add("out", conv.out, "Output label file");
  b_conv.add("from", conv.from, "strong or sequential")->check(CLI::IsMember({"strong", "sequential"}));
  b_conv.add("to", conv.to, "sequential or weak")->check(CLI::IsMember({"sequential", "weak"}));
  b_conv.add("classes", conv.classes, "Class list file, one name per line");
  b_conv.add("class-names", conv.class_names, "Comma-separated class names");
  b_conv.add("preset", conv.preset, "Class table when neither --classes nor --class-names is given");

  TraceArgs trace;
  auto* c_trace = app.add_subcommand("dump-trace", "Frame-level probabilities as CSV plus sparklines");
  ConfigBinder b_trace(c_trace);
  b_trace.add("model", trace.model, "Checkpoint directory");
  b_trace.add("wav", trace.wav, "Audio file");
  b_trace.add("data", trace.data, "Split directory (with --clip)");
  b_trace.add("clip", trace.clip, "Clip id inside --data");
  b_trace.add("out", trace.out, "Trace CSV path");

  std::string command = "glutag";
  try {
    app.parse(argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    command = sub->get_name();
    const std::map<std::string, std::function<int()>> run{
        {"synth", [&] { b_synth.apply(); return run_synth(synth); }},
        {"features", [&] { b_feat.apply(); return run_features(feat); }},
        {"train", [&] { b_train.apply(); return run_train(tr); }},
        {"evaluate", [&] { b_eval.apply(); return run_evaluate(ev); }},
        {"decode", [&] { b_dec.apply(); return run_decode(dec); }},
        {"convert-labels", [&] { b_conv.apply(); return run_convert(conv); }},
        {"dump-trace", [&] { b_trace.apply(); return run_dump_trace(trace); }},
    };
    return run.at(command)();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s: USAGE: %s\n", command.c_str(), e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", command.c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: INTERNAL: %s\n", command.c_str(), e.what());
    return 1;
  }
}
