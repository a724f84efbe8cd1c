#pragma once

// Strong, sequential and weak clip labels.
//
// A sequential label orders the boundaries (onset/offset) of every event
// occurrence without keeping their timestamps. Tokens are laid out as
// 2k = class k start, 2k+1 = class k end, 2K = blank.

#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "glutag/ctc.hpp"

namespace glutag {

class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<std::string> names);

  int num_classes() const { return static_cast<int>(names_.size()); }
  int alphabet_size() const { return 2 * num_classes() + 1; }
  Token blank() const { return 2 * num_classes(); }
  static Token start_token(int cls) { return 2 * cls; }
  static Token end_token(int cls) { return 2 * cls + 1; }
  static int class_of(Token id) { return id / 2; }
  static bool is_start(Token id) { return id % 2 == 0; }

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int cls) const { return names_.at(static_cast<std::size_t>(cls)); }
  std::optional<int> find_class(const std::string& name) const;

  /// "<class>_start" / "<class>_end"; "-" for blank.
  std::string token_name(Token id) const;
  std::optional<Token> parse_token(const std::string& text) const;

  bool operator==(const ClassTable&) const = default;

 private:
  std::vector<std::string> names_;
};

struct StrongLabel {
  int cls = 0;
  double onset = 0.0;
  double offset = 0.0;

  bool operator==(const StrongLabel&) const = default;
};

using SequentialLabel = TokenSeq;
using TagSet = std::set<int>;

/// Sorts all boundaries by time. Equal times put ends before starts, then
/// order by class index. Throws INVALID_STRONG on a bad interval or on two
/// overlapping instances of one class.
SequentialLabel sequential_from_strong(const std::vector<StrongLabel>& labels,
                                       const ClassTable& table,
                                       double clip_seconds = std::numeric_limits<double>::infinity());

struct Violation {
  enum class Kind { kEndWithoutStart, kStartWhileOpen, kUnclosedStart, kUnknownToken };
  Kind kind;
  std::size_t position;  // token index; sequence length for unclosed starts
  int cls;

  bool operator==(const Violation&) const = default;
};

/// Per-class start/end alternation check. Empty result means well formed.
std::vector<Violation> validate(const SequentialLabel& seq, const ClassTable& table);

TagSet weak_from_sequential(const SequentialLabel& seq);
TagSet weak_from_strong(const std::vector<StrongLabel>& labels);

struct SequentialRecord {
  std::string clip_id;
  SequentialLabel tokens;

  bool operator==(const SequentialRecord&) const = default;
};

struct StrongRecord {
  std::string clip_id;
  std::vector<StrongLabel> events;

  bool operator==(const StrongRecord&) const = default;
};

struct WeakRecord {
  std::string clip_id;
  TagSet tags;

  bool operator==(const WeakRecord&) const = default;
};

// Text formats, one record per line:
//   sequential  <clip_id>\t<token> <token> ...
//   strong      <clip_id>\t<class>\t<onset>\t<offset>   (one line per event)
//   weak        <clip_id>\t<class> <class> ...
// Parse failures throw PARSE_ERROR naming the 1-based line.
std::vector<SequentialRecord> read_sequential(std::istream& in, const ClassTable& table);
void write_sequential(std::ostream& out, const std::vector<SequentialRecord>& records,
                      const ClassTable& table);
std::vector<SequentialRecord> parse_label_file(const std::string& path, const ClassTable& table);
void write_label_file(const std::string& path, const std::vector<SequentialRecord>& records,
                      const ClassTable& table);

std::vector<StrongRecord> read_strong(std::istream& in, const ClassTable& table);
void write_strong(std::ostream& out, const std::vector<StrongRecord>& records,
                  const ClassTable& table);
std::vector<StrongRecord> read_strong_file(const std::string& path, const ClassTable& table);
void write_strong_file(const std::string& path, const std::vector<StrongRecord>& records,
                       const ClassTable& table);

std::vector<WeakRecord> read_weak(std::istream& in, const ClassTable& table);
void write_weak(std::ostream& out, const std::vector<WeakRecord>& records,
                const ClassTable& table);
std::vector<WeakRecord> read_weak_file(const std::string& path, const ClassTable& table);
void write_weak_file(const std::string& path, const std::vector<WeakRecord>& records,
                     const ClassTable& table);

/// One class name per line.
ClassTable read_class_table(const std::string& path);
void write_class_table(const std::string& path, const ClassTable& table);

}  // namespace glutag
