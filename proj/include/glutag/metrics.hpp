#pragma once

// Clip-level tagging metrics: per-class ROC AUC (Mann-Whitney), precision,
// recall and F-score, and a macro-averaged summary table.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "glutag/labels.hpp"

namespace glutag {

struct EvalRecord {
  std::string clip_id;
  Eigen::VectorXd scores;  // one per class
  TagSet predicted;
  TagSet truth;
};

/// Fraction of (positive, negative) pairs ranked correctly, ties count 1/2.
/// nullopt when labels contain only one class.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  int tp = 0, fp = 0, fn = 0;
};

/// Tag-membership counts for class k over all records; 0/0 is taken as 0.
Prf prf(const std::vector<EvalRecord>& records, int cls);

struct ClassRow {
  std::string name;
  std::optional<double> auc;
  Prf prf;
};

struct Report {
  std::vector<ClassRow> rows;
  double mean_auc = 0.0;  // over classes with a defined AUC
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_fscore = 0.0;
  std::vector<std::string> warnings;
};

Report report(const std::vector<EvalRecord>& records, const ClassTable& table);

/// class,auc,precision,recall,fscore with a final AVERAGE row; undefined AUC is "nan".
std::string render_csv(const Report& r);
/// Aligned text table, same rows as the CSV.
std::string render_text(const Report& r);

/// One character per frame on a 10-level ramp; values are probabilities,
/// so the scale is fixed to [0, 1].
std::string sparkline(const Eigen::VectorXd& values);

/// Writes frames x tokens probabilities as CSV ("frame,<col>,...") and
/// returns one labelled sparkline per column.
std::string dump_frame_trace(const Eigen::MatrixXd& trace, const std::vector<std::string>& columns,
                             const std::string& csv_path);

}  // namespace glutag
