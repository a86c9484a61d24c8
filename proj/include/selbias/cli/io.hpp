#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selbias/synthpop.hpp"

namespace selbias::cli {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 subset: quoted fields with doubled quotes, no embedded newlines.
CsvTable read_csv(const std::string& path);
std::string csv_field(const std::string& value);
std::string format_number(double v);

enum class FileKind { kAnnotations, kCorrectness, kTruth, kUnknown };

// Classifies a CSV by its header line.
FileKind sniff(const std::string& path);

struct AnnotationsFile {
  std::vector<AnnotationRecord> records;
  bool has_draws_column = false;
};

// Schema violations raise Error{kSchemaViolation} naming row and column.
AnnotationsFile read_annotations(const std::string& path);
std::vector<CorrectnessRecord> read_correctness(const std::string& path);
std::vector<std::pair<std::string, double>> read_truth(const std::string& path);

void write_annotations(const std::string& path,
                       const std::vector<AnnotationRecord>& records,
                       bool with_draws);
void write_correctness(const std::string& path,
                       const std::vector<CorrectnessRecord>& records);
void write_truth(const std::string& path, const std::vector<ImageItem>& items);

// Writes through a temporary file so readers never see partial output.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace selbias::cli
