#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gst/attacks/attacks.hpp"
#include "gst/curate/curate.hpp"
#include "gst/evalkit/metrics.hpp"
#include "gst/pipeline/gst.hpp"

namespace gst::evalkit {

/// Written as the first line of every CSV; bump on any column change.
inline constexpr const char* kCsvSchema = "# gst-report-csv v1";

struct MetricsRow {
  std::string config;
  MetricsTable table;
  bool operator==(const MetricsRow&) const = default;
};

struct TypeRow {
  std::string config;
  QuestionType type = QuestionType::Others;
  MetricsTable table;
  bool operator==(const TypeRow&) const = default;
};

/// Share of generated questions per type.
struct TypeShareRow {
  std::string config;
  QuestionType type = QuestionType::Others;
  std::size_t count = 0;
  double percent = 0.0;
  bool operator==(const TypeShareRow&) const = default;
};

struct DiversityRow {
  std::string config;
  int n = 1;
  double diversity = 0.0;
  double no_match = 0.0;
  bool operator==(const DiversityRow&) const = default;
};

struct UtilizationRow {
  int iteration = 0;
  double tau = 0.0;
  curate::TauMode mode = curate::TauMode::Absolute;
  std::size_t total = 0;
  std::size_t selected = 0;
  double utilization = 0.0;
  bool operator==(const UtilizationRow&) const = default;
};

/// Gold and silver dialogs on the same scene, shown side by side.
struct Transcript {
  toyworld::Dialog gold;
  toyworld::Dialog silver;
};

/// A section left empty (nullopt) renders as "not run" and emits no CSV.
struct ReportInputs {
  std::string title = "GST run report";
  std::vector<std::pair<std::string, std::string>> run_info;
  std::optional<std::vector<MetricsRow>> metrics;
  std::optional<std::vector<TypeRow>> per_type;
  std::optional<std::vector<TypeShareRow>> type_share;
  std::optional<std::vector<DiversityRow>> diversity;
  std::optional<std::vector<UtilizationRow>> utilization;
  std::optional<std::vector<pipeline::LowDataRow>> low_data;
  // One curve set per evaluated model label.
  std::optional<std::vector<std::pair<std::string, attacks::AttackCurves>>> attacks;
  std::vector<Transcript> transcripts;
};

struct ReportDocs {
  std::string markdown;
  std::vector<std::pair<std::string, std::string>> csv;  // file name, content
};

ReportDocs render_report(const ReportInputs& in);
void write_report(const std::filesystem::path& dir, const ReportDocs& docs);

// CSV emitters; doubles use %.17g so parsing back is exact.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string per_type_csv(const std::vector<TypeRow>& rows);
std::string type_share_csv(const std::vector<TypeShareRow>& rows);
std::string diversity_csv(const std::vector<DiversityRow>& rows);
std::string utilization_csv(const std::vector<UtilizationRow>& rows);
std::string attack_csv(const std::vector<attacks::CurveRow>& rows);
std::string attack_summary_csv(const std::vector<attacks::CurveSummary>& rows);
/// Two rows per fraction, teacher then student.
std::string low_data_csv(const std::vector<pipeline::LowDataRow>& rows);

// Parsers; FormatError on a schema or header mismatch.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::vector<TypeRow> parse_per_type_csv(const std::string& text);
std::vector<TypeShareRow> parse_type_share_csv(const std::string& text);
std::vector<DiversityRow> parse_diversity_csv(const std::string& text);
std::vector<UtilizationRow> parse_utilization_csv(const std::string& text);
std::vector<attacks::CurveRow> parse_attack_csv(const std::string& text);
std::vector<pipeline::LowDataRow> parse_low_data_csv(const std::string& text);

QuestionType parse_type_name(const std::string& name);

/// Text rendering of one transcript; silver answers are audited against the
/// oracle ("ok", "wrong", or "?" for questions outside the grammar).
std::string render_transcript(const Transcript& t);

}  // namespace gst::evalkit
