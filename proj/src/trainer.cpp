#include "glutag/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "glutag/error.hpp"

namespace glutag {

namespace fs = std::filesystem;

namespace {

struct SampleGrad {
  double loss = 0.0;
  bool feasible = false;
  ModelParams<float> grad;
};

HeadLoss<float> head_loss(const ModelConfig& cfg, const Matrix<float>& logits, const Example& ex) {
  if (cfg.head == HeadKind::kCtc) return ctc_head_loss(logits, ex.tokens, cfg.blank());
  return tag_head_loss(logits, ex.tags, cfg.head);
}

SampleGrad sample_gradient(const TrainedModel& m, const Example& ex, std::uint64_t dropout_seed) {
  std::mt19937_64 rng(dropout_seed);
  const Matrix<float> x = m.normalize(ex.features);
  const auto fp = model_forward(x, m.params, m.config, true, &rng);
  const auto hl = head_loss(m.config, fp.logits, ex);
  SampleGrad out;
  out.feasible = hl.feasible;
  if (!hl.feasible) return out;
  out.loss = hl.loss;
  out.grad = model_backward(fp, m.params, m.config, hl.d_logits);
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  for (auto& th : pool) th.join();
}

bool ctc_feasible(const Example& ex) {
  return ex.features.rows() >= min_frames_for(ex.tokens);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::kParseError, "checkpoint: bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::kParseError, "checkpoint: bad integer '" + s + "'");
  return v;
}

}  // namespace

void TrainConfig::check() const {
  if (max_epochs < 1) throw Error(ErrorCode::kConfig, "max_epochs must be positive");
  if (patience < 0 || patience >= max_epochs)
    throw Error(ErrorCode::kConfig, "patience must satisfy 0 <= patience < max_epochs");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
    throw Error(ErrorCode::kConfig, "validation_fraction must lie in (0, 0.5)");
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kConfig, "learning_rate must be positive");
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                  e.seconds);
    out << buf;
  }
  return out.str();
}

Matrix<float> TrainedModel::normalize(const FloatMatrix& raw) const {
  if (raw.cols() != norm_mean.size())
    throw Error(ErrorCode::kShapeMismatch, "feature width " + std::to_string(raw.cols()) +
                                               " != model input " + std::to_string(norm_mean.size()));
  Matrix<float> x = raw;
  x.rowwise() -= norm_mean;
  x.array().rowwise() *= norm_scale.array();
  return x;
}

TrainResult train(const std::vector<Example>& data, const ClassTable& table,
                  const FeatureConfig& features, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.check();
  if (data.empty()) throw Error(ErrorCode::kEmptyDataset, "no training clips");
  if (data.size() < 2) throw Error(ErrorCode::kEmptyDataset, "need at least two clips to hold out validation");

  TrainResult res;
  TrainedModel& m = res.model;
  m.config = cfg.model;
  m.config.num_classes = table.num_classes();
  m.config.input_bins = static_cast<int>(data.front().features.cols());
  m.config.check();
  m.table = table;
  m.features = features;

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].features.cols() != m.config.input_bins)
      throw Error(ErrorCode::kShapeMismatch, data[i].clip_id + ": inconsistent feature width");
    if (m.config.head == HeadKind::kCtc && !ctc_feasible(data[i])) {
      ++res.log.skipped_infeasible;
      continue;
    }
    usable.push_back(i);
  }
  if (usable.empty()) throw Error(ErrorCode::kAllInfeasible, "every CTC target is infeasible");
  if (usable.size() < 2) throw Error(ErrorCode::kEmptyDataset, "fewer than two usable clips");

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(usable.begin(), usable.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * usable.size()));
  n_val = std::clamp<std::size_t>(n_val, 1, usable.size() - 1);
  std::vector<Example> val_set, train_set;
  for (std::size_t i = 0; i < usable.size(); ++i)
    (i < n_val ? val_set : train_set).push_back(data[usable[i]]);

  // Per-bin standardization from the training portion.
  const Eigen::Index bins = m.config.input_bins;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(bins), sq = Eigen::RowVectorXd::Zero(bins);
  double frames = 0.0;
  for (const auto& ex : train_set) {
    const Eigen::MatrixXd f = ex.features.cast<double>();
    sum += f.colwise().sum();
    sq += f.array().square().matrix().colwise().sum();
    frames += static_cast<double>(f.rows());
  }
  const Eigen::RowVectorXd mean = sum / frames;
  const Eigen::RowVectorXd var = (sq / frames).array() - mean.array().square();
  m.norm_mean = mean.cast<float>();
  m.norm_scale = var.unaryExpr([](double v) { return 1.0 / std::sqrt(std::max(v, 1e-10)); })
                     .cast<float>();

  m.params = init_params<float>(m.config, cfg.seed);
  AdamState<float> adam;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;

  ModelParams<float> best = m.params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int n = static_cast<int>(end - start);
      std::vector<SampleGrad> grads(static_cast<std::size_t>(n));
      parallel_for(n, cfg.workers, [&](int i) {
        const std::size_t idx = order[start + static_cast<std::size_t>(i)];
        const auto seed = clip_seed(cfg.seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(epoch)), idx);
        grads[static_cast<std::size_t>(i)] = sample_gradient(m, train_set[idx], seed);
      });
      ModelParams<float> total = m.params.zeros_like();
      int used = 0;
      for (const auto& g : grads) {
        if (!g.feasible) continue;
        total.add_scaled(g.grad, 1.0f);
        loss_sum += g.loss;
        ++loss_count;
        ++used;
      }
      if (used == 0) continue;
      const float inv = 1.0f / static_cast<float>(used);
      std::vector<Matrix<float>*> p_list;
      std::vector<const Matrix<float>*> g_list;
      for (auto& [name, ptr] : m.params.arrays()) p_list.push_back(ptr);
      for (auto& [name, ptr] : total.arrays()) {
        *ptr *= inv;
        g_list.push_back(ptr);
      }
      if (!adam_step(p_list, g_list, adam, adam_cfg)) ++res.log.skipped_updates;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_count > 0 ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();
    st.val_loss = evaluate_loss(m, val_set);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.epochs.push_back(st);
    if (on_epoch) on_epoch(st);

    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      best = m.params;
      res.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      res.log.stop_epoch = epoch;
      res.log.stop_reason = "early_stop";
      break;
    }
  }
  if (res.log.stop_reason.empty()) {
    res.log.stop_epoch = cfg.max_epochs;
    res.log.stop_reason = "max_epochs";
  }
  m.params = std::move(best);
  return res;
}

double evaluate_loss(const TrainedModel& model, const std::vector<Example>& data) {
  double sum = 0.0;
  int count = 0;
  for (const auto& ex : data) {
    const auto fp = model_forward(model.normalize(ex.features), model.params, model.config, false);
    const auto hl = head_loss(model.config, fp.logits, ex);
    if (!hl.feasible) continue;
    sum += hl.loss;
    ++count;
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::infinity();
}

Prediction predict_tags(const FloatMatrix& raw_features, const TrainedModel& model) {
  const auto fp = model_forward(model.normalize(raw_features), model.params, model.config, false);
  const int classes = model.config.num_classes;
  Prediction pred;
  pred.trace = fp.probs.cast<double>();
  pred.scores = Eigen::VectorXd::Zero(classes);
  if (model.config.head == HeadKind::kCtc) {
    pred.decoded = best_path_decode(pred.trace, model.config.blank());
    pred.tags = weak_from_sequential(pred.decoded);
    for (int k = 0; k < classes; ++k)
      pred.scores[k] = std::max(pred.trace.col(ClassTable::start_token(k)).maxCoeff(),
                                pred.trace.col(ClassTable::end_token(k)).maxCoeff());
  } else {
    const RowVector<double> clip = model.config.head == HeadKind::kGmp
                                       ? gmp_pool<double>(pred.trace)
                                       : gap_pool<double>(pred.trace);
    for (int k = 0; k < classes; ++k) {
      pred.scores[k] = clip[k];
      if (clip[k] >= 0.5) pred.tags.insert(k);
    }
  }
  return pred;
}

std::vector<EvalRecord> evaluate_records(const TrainedModel& model,
                                         const std::vector<Example>& data) {
  std::vector<EvalRecord> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    auto pred = predict_tags(ex.features, model);
    out.push_back({ex.clip_id, std::move(pred.scores), std::move(pred.tags), ex.tags});
  }
  return out;
}

std::vector<std::string> trace_columns(const TrainedModel& model) {
  std::vector<std::string> cols;
  if (model.config.head == HeadKind::kCtc) {
    for (Token id = 0; id < model.table.alphabet_size(); ++id)
      cols.push_back(id == model.table.blank() ? "blank" : model.table.token_name(id));
  } else {
    cols = model.table.names();
  }
  return cols;
}

std::vector<Example> load_examples(const DatasetSplit& split, const FeatureConfig& features,
                                   const std::string& features_dir, int workers) {
  std::vector<Example> out(split.clip_ids.size());
  std::vector<std::string> errors(out.size());
  parallel_for(static_cast<int>(out.size()), workers, [&](int i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      Example& ex = out[u];
      ex.clip_id = split.clip_ids[u];
      ex.tokens = split.sequential[u];
      ex.tags = split.weak[u];
      if (features_dir.empty())
        ex.features = log_mel(read_wav(split.wav_path(u)), features).values;
      else
        ex.features = read_fmat_file((fs::path(features_dir) / (ex.clip_id + ".fmat")).string());
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorCode::kIo, e);
  return out;
}

void save_checkpoint(const std::string& dir, const TrainedModel& model) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
  std::ofstream man(fs::path(dir) / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!man) throw Error(ErrorCode::kIo, "cannot write manifest in " + dir);

  const auto& c = model.config;
  man << "glutag-checkpoint 1\n";
  man << "classes";
  for (const auto& n : model.table.names()) man << ' ' << n;
  man << "\nhead " << to_string(c.head) << "\ngating " << to_string(c.gating)
      << "\ninput_bins " << c.input_bins << '\n';
  for (const auto& b : c.blocks)
    man << "block " << b.channels << ' ' << b.kernel.height << ' ' << b.kernel.width << ' '
        << b.pool << '\n';
  man << "hidden " << c.hidden << "\ndropout " << format_double(c.dropout) << '\n';
  const auto& f = model.features;
  man << "feature sample_rate " << f.sample_rate << '\n'
      << "feature window_seconds " << format_double(f.window_seconds) << '\n'
      << "feature hop_seconds " << format_double(f.hop_seconds) << '\n'
      << "feature n_mels " << f.n_mels << '\n'
      << "feature fmin " << format_double(f.fmin) << '\n'
      << "feature fmax " << format_double(f.fmax) << '\n'
      << "feature log_floor " << format_double(f.log_floor) << '\n';

  auto put = [&](const std::string& name, const FloatMatrix& m) {
    const std::string file = name + ".fmat";
    write_fmat_file((fs::path(dir) / file).string(), m);
    man << "array " << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << file << '\n';
  };
  put("norm.mean", model.norm_mean);
  put("norm.scale", model.norm_scale);
  for (const auto& [name, ptr] : model.params.arrays()) put(name, *ptr);
  if (!man) throw Error(ErrorCode::kIo, "write failed for checkpoint manifest");
}

TrainedModel load_checkpoint(const std::string& dir) {
  std::ifstream man(fs::path(dir) / "manifest.txt");
  if (!man) throw Error(ErrorCode::kIo, "no checkpoint manifest in " + dir);
  TrainedModel m;
  m.config.blocks.clear();
  std::vector<std::string> names;
  std::vector<std::pair<std::string, FloatMatrix>> arrays;
  std::string line;
  bool header = false;
  while (std::getline(man, line)) {
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    std::vector<std::string> rest;
    for (std::string w; ss >> w;) rest.push_back(w);
    auto need = [&](std::size_t n) {
      if (rest.size() != n) throw Error(ErrorCode::kParseError, "checkpoint manifest: bad line '" + line + "'");
    };
    if (key == "glutag-checkpoint") {
      need(1);
      if (rest[0] != "1") throw Error(ErrorCode::kParseError, "unsupported checkpoint version");
      header = true;
    } else if (key == "classes") {
      names = rest;
    } else if (key == "head") {
      need(1);
      m.config.head = parse_head(rest[0]);
    } else if (key == "gating") {
      need(1);
      m.config.gating = parse_gating(rest[0]);
    } else if (key == "input_bins") {
      need(1);
      m.config.input_bins = parse_int(rest[0]);
    } else if (key == "block") {
      need(4);
      m.config.blocks.push_back({parse_int(rest[0]), {parse_int(rest[1]), parse_int(rest[2])},
                                 parse_int(rest[3])});
    } else if (key == "hidden") {
      need(1);
      m.config.hidden = parse_int(rest[0]);
    } else if (key == "dropout") {
      need(1);
      m.config.dropout = parse_double(rest[0]);
    } else if (key == "feature") {
      need(2);
      auto& f = m.features;
      const auto& k = rest[0];
      const auto& v = rest[1];
      if (k == "sample_rate") f.sample_rate = parse_int(v);
      else if (k == "window_seconds") f.window_seconds = parse_double(v);
      else if (k == "hop_seconds") f.hop_seconds = parse_double(v);
      else if (k == "n_mels") f.n_mels = parse_int(v);
      else if (k == "fmin") f.fmin = parse_double(v);
      else if (k == "fmax") f.fmax = parse_double(v);
      else if (k == "log_floor") f.log_floor = parse_double(v);
      else throw Error(ErrorCode::kParseError, "checkpoint manifest: unknown feature key " + k);
    } else if (key == "array") {
      need(4);
      FloatMatrix a = read_fmat_file((fs::path(dir) / rest[3]).string());
      if (a.rows() != parse_int(rest[1]) || a.cols() != parse_int(rest[2]))
        throw Error(ErrorCode::kShapeMismatch, "checkpoint array " + rest[0] + " has wrong shape");
      arrays.emplace_back(rest[0], std::move(a));
    } else {
      throw Error(ErrorCode::kParseError, "checkpoint manifest: unknown key " + key);
    }
  }
  if (!header) throw Error(ErrorCode::kParseError, dir + ": not a checkpoint manifest");
  m.table = ClassTable(names);
  m.config.num_classes = m.table.num_classes();
  m.config.check();

  // Shapes come from a fresh initialization; values from the files.
  m.params = init_params<float>(m.config, 0);
  auto slots = m.params.arrays();
  auto find = [&](const std::string& name) -> FloatMatrix& {
    for (auto& [n, a] : arrays)
      if (n == name) return a;
    throw Error(ErrorCode::kParseError, "checkpoint is missing array " + name);
  };
  m.norm_mean = find("norm.mean");
  m.norm_scale = find("norm.scale");
  for (auto& [name, ptr] : slots) {
    const FloatMatrix& a = find(name);
    if (a.rows() != ptr->rows() || a.cols() != ptr->cols())
      throw Error(ErrorCode::kShapeMismatch, "checkpoint array " + name + " does not fit the config");
    *ptr = a;
  }
  if (arrays.size() != slots.size() + 2)
    throw Error(ErrorCode::kParseError, "checkpoint has unexpected extra arrays");
  return m;
}

}  // namespace glutag
