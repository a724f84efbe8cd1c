#include "glutag/labels.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace glutag {

namespace {

constexpr std::string_view kStartSuffix = "_start";
constexpr std::string_view kEndSuffix = "_end";

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) out.push_back(word);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', begin);
    out.push_back(line.substr(begin, tab - begin));
    if (tab == std::string::npos) break;
    begin = tab + 1;
  }
  return out;
}

// Lines with a trailing '\r' are accepted; blank lines are skipped.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, line_no);
  }
}

double parse_seconds(const std::string& text, std::size_t line_no) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value))
    parse_fail(line_no, "bad time value '" + text + "'");
  return value;
}

std::string format_seconds(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

}  // namespace

ClassTable::ClassTable(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty() || has_space(n))
      throw Error(ErrorCode::kConfig, "class names must be non-empty and free of whitespace");
    if (!seen.insert(n).second) throw Error(ErrorCode::kConfig, "duplicate class name " + n);
  }
}

std::optional<int> ClassTable::find_class(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

std::string ClassTable::token_name(Token id) const {
  if (id == blank()) return "-";
  return name(class_of(id)) + std::string(is_start(id) ? kStartSuffix : kEndSuffix);
}

std::optional<Token> ClassTable::parse_token(const std::string& text) const {
  for (auto [suffix, start] : {std::pair{kStartSuffix, true}, std::pair{kEndSuffix, false}}) {
    if (text.size() > suffix.size() && text.ends_with(suffix)) {
      if (auto cls = find_class(text.substr(0, text.size() - suffix.size())))
        return start ? start_token(*cls) : end_token(*cls);
    }
  }
  return std::nullopt;
}

SequentialLabel sequential_from_strong(const std::vector<StrongLabel>& labels,
                                       const ClassTable& table, double clip_seconds) {
  std::vector<std::vector<StrongLabel>> by_class(static_cast<std::size_t>(table.num_classes()));
  for (const auto& l : labels) {
    if (l.cls < 0 || l.cls >= table.num_classes())
      throw Error(ErrorCode::kInvalidStrong, "class index out of range");
    if (!(l.onset >= 0.0) || !(l.onset < l.offset) || !(l.offset <= clip_seconds))
      throw Error(ErrorCode::kInvalidStrong,
                  "bad interval [" + format_seconds(l.onset) + ", " + format_seconds(l.offset) +
                      "] for " + table.name(l.cls));
    by_class[static_cast<std::size_t>(l.cls)].push_back(l);
  }
  for (auto& events : by_class) {
    std::sort(events.begin(), events.end(),
              [](const StrongLabel& a, const StrongLabel& b) { return a.onset < b.onset; });
    for (std::size_t i = 1; i < events.size(); ++i)
      if (events[i].onset < events[i - 1].offset)
        throw Error(ErrorCode::kInvalidStrong,
                    "overlapping instances of " + table.name(events[i].cls));
  }

  // (time, 0 for end / 1 for start, class)
  std::vector<std::tuple<double, int, int>> bounds;
  bounds.reserve(2 * labels.size());
  for (const auto& l : labels) {
    bounds.emplace_back(l.onset, 1, l.cls);
    bounds.emplace_back(l.offset, 0, l.cls);
  }
  std::sort(bounds.begin(), bounds.end());

  SequentialLabel seq;
  seq.reserve(bounds.size());
  for (const auto& [time, is_start, cls] : bounds)
    seq.push_back(is_start ? ClassTable::start_token(cls) : ClassTable::end_token(cls));
  return seq;
}

std::vector<Violation> validate(const SequentialLabel& seq, const ClassTable& table) {
  std::vector<Violation> out;
  std::vector<bool> open(static_cast<std::size_t>(table.num_classes()), false);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Token id = seq[i];
    if (id < 0 || id >= table.blank()) {
      out.push_back({Violation::Kind::kUnknownToken, i, -1});
      continue;
    }
    const int cls = ClassTable::class_of(id);
    const auto c = static_cast<std::size_t>(cls);
    if (ClassTable::is_start(id)) {
      if (open[c]) out.push_back({Violation::Kind::kStartWhileOpen, i, cls});
      open[c] = true;
    } else {
      if (!open[c]) out.push_back({Violation::Kind::kEndWithoutStart, i, cls});
      open[c] = false;
    }
  }
  for (int cls = 0; cls < table.num_classes(); ++cls)
    if (open[static_cast<std::size_t>(cls)])
      out.push_back({Violation::Kind::kUnclosedStart, seq.size(), cls});
  return out;
}

TagSet weak_from_sequential(const SequentialLabel& seq) {
  TagSet tags;
  for (Token id : seq)
    if (id >= 0 && ClassTable::is_start(id)) tags.insert(ClassTable::class_of(id));
  return tags;
}

TagSet weak_from_strong(const std::vector<StrongLabel>& labels) {
  TagSet tags;
  for (const auto& l : labels) tags.insert(l.cls);
  return tags;
}

std::vector<SequentialRecord> read_sequential(std::istream& in, const ClassTable& table) {
  std::vector<SequentialRecord> records;
  for_each_line(in, [&](const std::string& line, std::size_t line_no) {
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) parse_fail(line_no, "expected <clip_id>\\t<tokens>");
    SequentialRecord rec;
    rec.clip_id = line.substr(0, tab);
    for (const auto& word : split_ws(line.substr(tab + 1))) {
      auto id = table.parse_token(word);
      if (!id) parse_fail(line_no, "unknown token '" + word + "'");
      rec.tokens.push_back(*id);
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void write_sequential(std::ostream& out, const std::vector<SequentialRecord>& records,
                      const ClassTable& table) {
  for (const auto& rec : records) {
    out << rec.clip_id << '\t';
    for (std::size_t i = 0; i < rec.tokens.size(); ++i)
      out << (i ? " " : "") << table.token_name(rec.tokens[i]);
    out << '\n';
  }
}

std::vector<SequentialRecord> parse_label_file(const std::string& path, const ClassTable& table) {
  auto in = open_in(path);
  return read_sequential(in, table);
}

void write_label_file(const std::string& path, const std::vector<SequentialRecord>& records,
                      const ClassTable& table) {
  auto out = open_out(path);
  write_sequential(out, records, table);
}

std::vector<StrongRecord> read_strong(std::istream& in, const ClassTable& table) {
  std::vector<StrongRecord> records;
  for_each_line(in, [&](const std::string& line, std::size_t line_no) {
    const auto fields = split_tabs(line);
    // A bare clip id declares a clip without events.
    if (fields.size() == 1 && !fields[0].empty()) {
      records.push_back({fields[0], {}});
      return;
    }
    if (fields.size() != 4 || fields[0].empty())
      parse_fail(line_no, "expected <clip_id>\\t<class>\\t<onset>\\t<offset>");
    auto cls = table.find_class(fields[1]);
    if (!cls) parse_fail(line_no, "unknown class '" + fields[1] + "'");
    StrongLabel label{*cls, parse_seconds(fields[2], line_no), parse_seconds(fields[3], line_no)};
    if (records.empty() || records.back().clip_id != fields[0]) records.push_back({fields[0], {}});
    records.back().events.push_back(label);
  });
  return records;
}

void write_strong(std::ostream& out, const std::vector<StrongRecord>& records,
                  const ClassTable& table) {
  for (const auto& rec : records) {
    if (rec.events.empty()) out << rec.clip_id << '\n';
    for (const auto& e : rec.events)
      out << rec.clip_id << '\t' << table.name(e.cls) << '\t' << format_seconds(e.onset) << '\t'
          << format_seconds(e.offset) << '\n';
  }
}

std::vector<StrongRecord> read_strong_file(const std::string& path, const ClassTable& table) {
  auto in = open_in(path);
  return read_strong(in, table);
}

void write_strong_file(const std::string& path, const std::vector<StrongRecord>& records,
                       const ClassTable& table) {
  auto out = open_out(path);
  write_strong(out, records, table);
}

std::vector<WeakRecord> read_weak(std::istream& in, const ClassTable& table) {
  std::vector<WeakRecord> records;
  for_each_line(in, [&](const std::string& line, std::size_t line_no) {
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) parse_fail(line_no, "expected <clip_id>\\t<classes>");
    WeakRecord rec;
    rec.clip_id = line.substr(0, tab);
    for (const auto& word : split_ws(line.substr(tab + 1))) {
      auto cls = table.find_class(word);
      if (!cls) parse_fail(line_no, "unknown class '" + word + "'");
      rec.tags.insert(*cls);
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void write_weak(std::ostream& out, const std::vector<WeakRecord>& records,
                const ClassTable& table) {
  for (const auto& rec : records) {
    out << rec.clip_id << '\t';
    bool first = true;
    for (int cls : rec.tags) {
      out << (first ? "" : " ") << table.name(cls);
      first = false;
    }
    out << '\n';
  }
}

std::vector<WeakRecord> read_weak_file(const std::string& path, const ClassTable& table) {
  auto in = open_in(path);
  return read_weak(in, table);
}

void write_weak_file(const std::string& path, const std::vector<WeakRecord>& records,
                     const ClassTable& table) {
  auto out = open_out(path);
  write_weak(out, records, table);
}

ClassTable read_class_table(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> names;
  for_each_line(in, [&](const std::string& line, std::size_t) { names.push_back(line); });
  return ClassTable(std::move(names));
}

void write_class_table(const std::string& path, const ClassTable& table) {
  auto out = open_out(path);
  for (const auto& n : table.names()) out << n << '\n';
}

}  // namespace glutag
