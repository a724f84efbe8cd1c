#include "glutag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "glutag/error.hpp"

namespace glutag {

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "auc input sizes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank-sum with midranks for tied groups.
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q)
      if (labels[order[q]] != 0) {
        pos_rank_sum += midrank;
        n_pos += 1.0;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Prf prf(const std::vector<EvalRecord>& records, int cls) {
  Prf r;
  for (const auto& rec : records) {
    const bool pred = rec.predicted.contains(cls);
    const bool truth = rec.truth.contains(cls);
    r.tp += pred && truth;
    r.fp += pred && !truth;
    r.fn += !pred && truth;
  }
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  const double denom = r.precision + r.recall;
  r.fscore = denom > 0.0 ? 2.0 * r.precision * r.recall / denom : 0.0;
  return r;
}

Report report(const std::vector<EvalRecord>& records, const ClassTable& table) {
  Report rep;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (int k = 0; k < table.num_classes(); ++k) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& rec : records) {
      if (rec.scores.size() != table.num_classes())
        throw Error(ErrorCode::kShapeMismatch, rec.clip_id + ": score count != class count");
      scores.push_back(rec.scores[k]);
      labels.push_back(rec.truth.contains(k) ? 1 : 0);
    }
    ClassRow row{table.name(k), auc(scores, labels), prf(records, k)};
    if (row.auc) {
      auc_sum += *row.auc;
      ++auc_count;
    } else {
      rep.warnings.push_back("AUC undefined for class " + row.name +
                             " (single-class ground truth); excluded from the average");
    }
    rep.mean_precision += row.prf.precision;
    rep.mean_recall += row.prf.recall;
    rep.mean_fscore += row.prf.fscore;
    rep.rows.push_back(std::move(row));
  }
  const double k = std::max(1, table.num_classes());
  rep.mean_auc = auc_count > 0 ? auc_sum / auc_count : 0.0;
  rep.mean_precision /= k;
  rep.mean_recall /= k;
  rep.mean_fscore /= k;
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

}  // namespace

std::string render_csv(const Report& r) {
  std::ostringstream out;
  out << "class,auc,precision,recall,fscore\n";
  for (const auto& row : r.rows)
    out << row.name << ',' << fmt(row.auc) << ',' << fmt(row.prf.precision) << ','
        << fmt(row.prf.recall) << ',' << fmt(row.prf.fscore) << '\n';
  out << "AVERAGE," << fmt(r.mean_auc) << ',' << fmt(r.mean_precision) << ','
      << fmt(r.mean_recall) << ',' << fmt(r.mean_fscore) << '\n';
  return out.str();
}

std::string render_text(const Report& r) {
  std::size_t width = std::string("AVERAGE (macro)").size();
  for (const auto& row : r.rows) width = std::max(width, row.name.size());
  auto line = [&](const std::string& name, const std::string& a, const std::string& p,
                  const std::string& rc, const std::string& f) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(width),
                  name.c_str(), a.c_str(), p.c_str(), rc.c_str(), f.c_str());
    return std::string(buf);
  };
  std::string out = line("class", "AUC", "Precision", "Recall", "F-score");
  for (const auto& row : r.rows)
    out += line(row.name, fmt(row.auc), fmt(row.prf.precision), fmt(row.prf.recall),
                fmt(row.prf.fscore));
  out += line("AVERAGE (macro)", fmt(r.mean_auc), fmt(r.mean_precision), fmt(r.mean_recall),
              fmt(r.mean_fscore));
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

std::string sparkline(const Eigen::VectorXd& values) {
  static constexpr std::string_view kRamp = " .:-=+*#%@";
  std::string out;
  out.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index t = 0; t < values.size(); ++t) {
    const double v = std::clamp(values[t], 0.0, 1.0);
    out += kRamp[static_cast<std::size_t>(std::lround(v * (kRamp.size() - 1)))];
  }
  return out;
}

std::string dump_frame_trace(const Eigen::MatrixXd& trace, const std::vector<std::string>& columns,
                             const std::string& csv_path) {
  if (static_cast<Eigen::Index>(columns.size()) != trace.cols())
    throw Error(ErrorCode::kShapeMismatch, "trace column names");
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw Error(ErrorCode::kIo, "cannot write " + csv_path);
  csv << "frame";
  for (const auto& c : columns) csv << ',' << c;
  csv << '\n';
  char buf[32];
  for (Eigen::Index t = 0; t < trace.rows(); ++t) {
    csv << t;
    for (Eigen::Index k = 0; k < trace.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.6f", trace(t, k));
      csv << ',' << buf;
    }
    csv << '\n';
  }
  if (!csv) throw Error(ErrorCode::kIo, "write failed for " + csv_path);

  std::size_t width = 0;
  for (const auto& c : columns) width = std::max(width, c.size());
  std::string out;
  for (Eigen::Index k = 0; k < trace.cols(); ++k) {
    std::string name = columns[static_cast<std::size_t>(k)];
    name.resize(width, ' ');
    out += name + " |" + sparkline(trace.col(k)) + "|\n";
  }
  return out;
}

}  // namespace glutag
