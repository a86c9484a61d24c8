#include "selbias/cli/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "selbias/error.hpp"

namespace selbias::cli {

namespace {

const std::vector<std::string> kAnnotationHeader{"item_id", "dataset", "class", "n_annotators",
                                                 "n_selected"};
const std::vector<std::string> kCorrectnessHeader{"item_id", "model_name", "correct"};
const std::vector<std::string> kTruthHeader{"item_id", "true_s"};

std::vector<std::string> split_line(const std::string& line, const std::string& path,
                                    std::size_t row) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw Error(ErrorKind::kSchemaViolation,
                path + ": row " + std::to_string(row) + ": unterminated quote");
  }
  out.push_back(cur);
  return out;
}

[[noreturn]] void violation(const std::string& path, std::size_t row, const std::string& column,
                            const std::string& why) {
  throw Error(ErrorKind::kSchemaViolation,
              path + ": row " + std::to_string(row) + ", column " + column + ": " + why);
}

long long to_int(const std::string& s, const std::string& path, std::size_t row,
                 const std::string& column) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    violation(path, row, column, "expected an integer, got '" + s + "'");
  }
  return v;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want,
                   const std::string& path) {
  if (t.header != want) {
    std::string joined;
    for (const auto& h : want) joined += (joined.empty() ? "" : ",") + h;
    throw Error(ErrorKind::kSchemaViolation, path + ": header must be " + joined);
  }
}

void check_width(const CsvTable& t, const std::string& path) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      violation(path, r + 1, "*",
                "expected " + std::to_string(t.header.size()) + " fields, got " +
                    std::to_string(t.rows[r].size()));
    }
  }
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + path);
  CsvTable t;
  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = split_line(line, path, 0);
      first = false;
      continue;
    }
    ++row;
    if (line.empty()) continue;
    t.rows.push_back(split_line(line, path, row));
  }
  if (first) throw Error(ErrorKind::kSchemaViolation, path + ": missing header");
  return t;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

FileKind sniff(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto h = split_line(line, path, 0);
  if (h == kTruthHeader) return FileKind::kTruth;
  if (h == kCorrectnessHeader) return FileKind::kCorrectness;
  auto with = kAnnotationHeader;
  if (h == with) return FileKind::kAnnotations;
  with.push_back("draws");
  if (h == with) return FileKind::kAnnotations;
  // A header mentioning true_s anywhere is treated as ground truth.
  for (const auto& col : h) {
    if (col == "true_s") return FileKind::kTruth;
  }
  return FileKind::kUnknown;
}

AnnotationsFile read_annotations(const std::string& path) {
  const CsvTable t = read_csv(path);
  AnnotationsFile out;
  auto want = kAnnotationHeader;
  if (t.header.size() == want.size() + 1) {
    want.push_back("draws");
    out.has_draws_column = true;
  }
  expect_header(t, want, path);
  check_width(t, path);
  out.records.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    AnnotationRecord rec;
    rec.item_id = f[0];
    if (rec.item_id.empty()) violation(path, r + 1, "item_id", "empty");
    try {
      rec.dataset = parse_dataset_tag(f[1]);
    } catch (const Error&) {
      violation(path, r + 1, "dataset", "unknown dataset '" + f[1] + "'");
    }
    rec.class_label = f[2];
    const long long n = to_int(f[3], path, r + 1, "n_annotators");
    const long long k = to_int(f[4], path, r + 1, "n_selected");
    if (n < 0 || n > 1000000) violation(path, r + 1, "n_annotators", "out of range");
    if (k < 0 || k > n) violation(path, r + 1, "n_selected", "must lie in [0, n_annotators]");
    rec.n_annotators = static_cast<int>(n);
    rec.n_selected = static_cast<int>(k);
    if (out.has_draws_column && !f[5].empty()) {
      if (f[5].size() != static_cast<std::size_t>(n)) {
        violation(path, r + 1, "draws", "length differs from n_annotators");
      }
      int ones = 0;
      for (char c : f[5]) {
        if (c != '0' && c != '1') violation(path, r + 1, "draws", "expected a 0/1 bitstring");
        rec.draws.push_back(static_cast<std::uint8_t>(c - '0'));
        ones += c - '0';
      }
      if (ones != k) violation(path, r + 1, "draws", "bit count differs from n_selected");
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<CorrectnessRecord> read_correctness(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, kCorrectnessHeader, path);
  check_width(t, path);
  std::vector<CorrectnessRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    if (f[0].empty()) violation(path, r + 1, "item_id", "empty");
    if (f[1].empty()) violation(path, r + 1, "model_name", "empty");
    if (f[2] != "0" && f[2] != "1") violation(path, r + 1, "correct", "expected 0 or 1");
    out.push_back({f[0], f[1], f[2] == "1"});
  }
  return out;
}

std::vector<std::pair<std::string, double>> read_truth(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, kTruthHeader, path);
  check_width(t, path);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    double s = 0.0;
    const auto res = std::from_chars(f[1].data(), f[1].data() + f[1].size(), s);
    if (f[1].empty() || res.ec != std::errc() || res.ptr != f[1].data() + f[1].size() ||
        !(s >= 0.0 && s <= 1.0)) {
      violation(path, r + 1, "true_s", "expected a number in [0, 1]");
    }
    out.push_back({f[0], s});
  }
  return out;
}

void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& records,
                       bool with_draws) {
  std::string s = "item_id,dataset,class,n_annotators,n_selected";
  s += with_draws ? ",draws\n" : "\n";
  for (const auto& r : records) {
    s += csv_field(r.item_id) + "," + to_string(r.dataset) + "," + csv_field(r.class_label) +
         "," + std::to_string(r.n_annotators) + "," + std::to_string(r.n_selected);
    if (with_draws) {
      s += ",";
      for (auto b : r.draws) s += b ? '1' : '0';
    }
    s += "\n";
  }
  write_text(path, s);
}

void write_correctness(const std::string& path, const std::vector<CorrectnessRecord>& records) {
  std::string s = "item_id,model_name,correct\n";
  for (const auto& r : records) {
    s += csv_field(r.item_id) + "," + csv_field(r.model_name) + "," + (r.correct ? "1" : "0") +
         "\n";
  }
  write_text(path, s);
}

void write_truth(const std::string& path, const std::vector<ImageItem>& items) {
  std::string s = "item_id,true_s\n";
  for (const auto& it : items) s += csv_field(it.item_id) + "," + format_number(it.true_s) + "\n";
  write_text(path, s);
}

void write_text(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorKind::kIoError, "write failed for " + path);
  }
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot move output into place: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace selbias::cli
