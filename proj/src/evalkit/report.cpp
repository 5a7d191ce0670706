#include "gst/evalkit/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gst/errors.hpp"
#include "gst/toyworld/dialog.hpp"
#include "gst/toyworld/grammar.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::evalkit {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw ContractError("csv: field may not contain ',', '\"' or a newline: " + s);
  }
  return s;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& header) { out_ << kCsvSchema << '\n' << header << '\n'; }
  CsvWriter& operator<<(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << field(cells[i]);
    out_ << '\n';
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Body rows of a CSV whose schema line and header must match exactly.
std::vector<std::vector<std::string>> read_csv(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvSchema) throw FormatError("csv: missing schema line");
  if (!std::getline(in, line) || line != header) {
    throw FormatError("csv: header mismatch, expected '" + header + "'");
  }
  const std::size_t width = split(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != width) throw FormatError("csv: row has the wrong number of fields");
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError("csv: not a number: '" + s + "'");
  return v;
}

long long to_int(const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw FormatError("csv: not an integer: '" + s + "'");
  return v;
}

const char* kMetricsCols = "ndcg,mrr,r1,r5,r10,mean_rank,rounds,ndcg_excluded";

std::vector<std::string> table_cells(const MetricsTable& t) {
  return {num(t.ndcg), num(t.mrr), num(t.r1), num(t.r5), num(t.r10), num(t.mean_rank),
          std::to_string(t.rounds), std::to_string(t.ndcg_excluded)};
}

MetricsTable parse_table(const std::vector<std::string>& c, std::size_t at) {
  MetricsTable t;
  t.ndcg = to_double(c[at]);
  t.mrr = to_double(c[at + 1]);
  t.r1 = to_double(c[at + 2]);
  t.r5 = to_double(c[at + 3]);
  t.r10 = to_double(c[at + 4]);
  t.mean_rank = to_double(c[at + 5]);
  t.rounds = static_cast<std::size_t>(to_int(c[at + 6]));
  t.ndcg_excluded = static_cast<std::size_t>(to_int(c[at + 7]));
  return t;
}

std::vector<std::string> prepend(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

const char* kNotRun = "_not run_\n";

void metrics_md(std::ostringstream& md, const std::string& label, const std::string& key,
                const MetricsTable& t) {
  md << "| " << label << " | " << key << " | " << fixed(t.ndcg) << " | " << fixed(t.mrr) << " | "
     << fixed(t.r1) << " | " << fixed(t.r5) << " | " << fixed(t.r10) << " | "
     << fixed(t.mean_rank) << " | " << t.rounds << " | " << t.ndcg_excluded << " |\n";
}

}  // namespace

QuestionType parse_type_name(const std::string& name) {
  for (QuestionType t : kQuestionTypes) {
    if (name == type_name(t)) return t;
  }
  throw FormatError("unknown question type '" + name + "'");
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  CsvWriter w(std::string("config,") + kMetricsCols);
  for (const auto& r : rows) w << prepend({r.config}, table_cells(r.table));
  return w.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRow> out;
  for (const auto& c : read_csv(text, std::string("config,") + kMetricsCols)) {
    out.push_back({c[0], parse_table(c, 1)});
  }
  return out;
}

std::string per_type_csv(const std::vector<TypeRow>& rows) {
  CsvWriter w(std::string("config,type,") + kMetricsCols);
  for (const auto& r : rows) w << prepend({r.config, type_name(r.type)}, table_cells(r.table));
  return w.str();
}

std::vector<TypeRow> parse_per_type_csv(const std::string& text) {
  std::vector<TypeRow> out;
  for (const auto& c : read_csv(text, std::string("config,type,") + kMetricsCols)) {
    out.push_back({c[0], parse_type_name(c[1]), parse_table(c, 2)});
  }
  return out;
}

std::string type_share_csv(const std::vector<TypeShareRow>& rows) {
  CsvWriter w("config,type,count,percent");
  for (const auto& r : rows) w << std::vector<std::string>{r.config, type_name(r.type), std::to_string(r.count), num(r.percent)};
  return w.str();
}

std::vector<TypeShareRow> parse_type_share_csv(const std::string& text) {
  std::vector<TypeShareRow> out;
  for (const auto& c : read_csv(text, "config,type,count,percent")) {
    out.push_back({c[0], parse_type_name(c[1]), static_cast<std::size_t>(to_int(c[2])), to_double(c[3])});
  }
  return out;
}

std::string diversity_csv(const std::vector<DiversityRow>& rows) {
  CsvWriter w("config,n,diversity,no_match");
  for (const auto& r : rows) {
    w << std::vector<std::string>{r.config, std::to_string(r.n), num(r.diversity), num(r.no_match)};
  }
  return w.str();
}

std::vector<DiversityRow> parse_diversity_csv(const std::string& text) {
  std::vector<DiversityRow> out;
  for (const auto& c : read_csv(text, "config,n,diversity,no_match")) {
    out.push_back({c[0], static_cast<int>(to_int(c[1])), to_double(c[2]), to_double(c[3])});
  }
  return out;
}

std::string utilization_csv(const std::vector<UtilizationRow>& rows) {
  CsvWriter w("iteration,tau,mode,total,selected,utilization");
  for (const auto& r : rows) {
    w << std::vector<std::string>{std::to_string(r.iteration), num(r.tau), curate::tau_mode_name(r.mode),
                                  std::to_string(r.total), std::to_string(r.selected),
                                  num(r.utilization)};
  }
  return w.str();
}

std::vector<UtilizationRow> parse_utilization_csv(const std::string& text) {
  std::vector<UtilizationRow> out;
  for (const auto& c : read_csv(text, "iteration,tau,mode,total,selected,utilization")) {
    UtilizationRow r;
    r.iteration = static_cast<int>(to_int(c[0]));
    r.tau = to_double(c[1]);
    try {
      r.mode = curate::parse_tau_mode(c[2]);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("csv: ") + e.what());
    }
    r.total = static_cast<std::size_t>(to_int(c[3]));
    r.selected = static_cast<std::size_t>(to_int(c[4]));
    r.utilization = to_double(c[5]);
    out.push_back(r);
  }
  return out;
}

std::string attack_csv(const std::vector<attacks::CurveRow>& rows) {
  CsvWriter w("attack,setting,seed,ndcg,mrr");
  for (const auto& r : rows) {
    w << std::vector<std::string>{r.attack, num(r.setting), std::to_string(r.seed), num(r.ndcg),
                                  num(r.mrr)};
  }
  return w.str();
}

std::vector<attacks::CurveRow> parse_attack_csv(const std::string& text) {
  std::vector<attacks::CurveRow> out;
  for (const auto& c : read_csv(text, "attack,setting,seed,ndcg,mrr")) {
    out.push_back({c[0], to_double(c[1]), static_cast<int>(to_int(c[2])), to_double(c[3]),
                   to_double(c[4])});
  }
  return out;
}

std::string attack_summary_csv(const std::vector<attacks::CurveSummary>& rows) {
  CsvWriter w("attack,setting,seeds,ndcg_mean,ndcg_std,mrr_mean,mrr_std");
  for (const auto& r : rows) {
    // Deterministic attacks have no spread; the cell is left empty.
    w << std::vector<std::string>{r.attack, num(r.setting), std::to_string(r.seeds),
                                  num(r.ndcg_mean), r.has_std ? num(r.ndcg_std) : "",
                                  num(r.mrr_mean), r.has_std ? num(r.mrr_std) : ""};
  }
  return w.str();
}

namespace {
const std::string kLowDataHeader =
    std::string("fraction,gold_dialogs,silver_dialogs,utilization,role,") + kMetricsCols;
}  // namespace

std::string low_data_csv(const std::vector<pipeline::LowDataRow>& rows) {
  CsvWriter w(kLowDataHeader);
  for (const auto& r : rows) {
    const std::vector<std::string> head{num(r.fraction), std::to_string(r.gold_dialogs),
                                        std::to_string(r.silver_dialogs), num(r.utilization)};
    std::vector<std::string> t = head, s = head;
    t.push_back("teacher");
    s.push_back("student");
    w << prepend(t, table_cells(r.teacher)) << prepend(s, table_cells(r.student));
  }
  return w.str();
}

std::vector<pipeline::LowDataRow> parse_low_data_csv(const std::string& text) {
  const auto rows = read_csv(text, kLowDataHeader);
  if (rows.size() % 2 != 0) throw FormatError("low-data csv: rows must come in teacher/student pairs");
  std::vector<pipeline::LowDataRow> out;
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    const auto& t = rows[i];
    const auto& s = rows[i + 1];
    if (t[4] != "teacher" || s[4] != "student" || t[0] != s[0]) {
      throw FormatError("low-data csv: expected a teacher row then a student row per fraction");
    }
    pipeline::LowDataRow r;
    r.fraction = to_double(t[0]);
    r.gold_dialogs = static_cast<std::size_t>(to_int(t[1]));
    r.silver_dialogs = static_cast<std::size_t>(to_int(t[2]));
    r.utilization = to_double(t[3]);
    r.teacher = parse_table(t, 5);
    r.student = parse_table(s, 5);
    out.push_back(r);
  }
  return out;
}

std::string render_transcript(const Transcript& t) {
  const auto& vocab = toyworld::Vocab::standard();
  std::ostringstream md;
  md << "Scene " << t.silver.scene_id << ": " << vocab.decode(t.silver.caption) << "\n\n";
  md << "| t | gold question | gold answer | silver question | silver answer | PPL | kept | oracle |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  const std::size_t n = std::max(t.gold.rounds.size(), t.silver.rounds.size());
  for (std::size_t i = 0; i < n; ++i) {
    md << "| " << i + 1 << " | ";
    if (i < t.gold.rounds.size()) {
      md << vocab.decode(t.gold.rounds[i].question) << " | " << vocab.decode(t.gold.rounds[i].answer);
    } else {
      md << " | ";
    }
    md << " | ";
    if (i < t.silver.rounds.size()) {
      const auto& r = t.silver.rounds[i];
      std::string audit = "?";
      try {
        const auto expect =
            toyworld::answer_oracle(t.silver.scene, r.question, toyworld::antecedent_for(t.silver, i));
        audit = expect == r.answer ? "ok" : "wrong";
      } catch (const GrammarError&) {
      }
      md << vocab.decode(r.question) << " | " << vocab.decode(r.answer) << " | "
         << (r.teacher_ppl ? fixed(*r.teacher_ppl) : "") << " | " << (r.selected ? "yes" : "no")
         << " | " << audit;
    } else {
      md << " | | | | ";
    }
    md << " |\n";
  }
  return md.str();
}

ReportDocs render_report(const ReportInputs& in) {
  ReportDocs docs;
  std::ostringstream md;
  md << "# " << in.title << "\n\n";

  md << "## Run\n\n";
  if (in.run_info.empty()) {
    md << kNotRun;
  } else {
    for (const auto& [k, v] : in.run_info) md << "- " << k << ": " << v << "\n";
  }

  md << "\n## Retrieval metrics\n\n";
  if (!in.metrics) {
    md << kNotRun;
  } else {
    md << "| config | | NDCG | MRR | R@1 | R@5 | R@10 | Mean | rounds | excluded |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : *in.metrics) metrics_md(md, r.config, "all", r.table);
    docs.csv.emplace_back("metrics.csv", metrics_csv(*in.metrics));
  }

  md << "\n## Metrics per question type\n\n";
  if (!in.per_type) {
    md << kNotRun;
  } else {
    md << "| config | type | NDCG | MRR | R@1 | R@5 | R@10 | Mean | rounds | excluded |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : *in.per_type) metrics_md(md, r.config, type_name(r.type), r.table);
    docs.csv.emplace_back("per_type.csv", per_type_csv(*in.per_type));
  }

  md << "\n## Generated question types\n\n";
  if (!in.type_share) {
    md << kNotRun;
  } else {
    md << "| config | type | count | share (%) |\n|---|---|---|---|\n";
    for (const auto& r : *in.type_share) {
      md << "| " << r.config << " | " << type_name(r.type) << " | " << r.count << " | "
         << fixed(r.percent) << " |\n";
    }
    docs.csv.emplace_back("question_types.csv", type_share_csv(*in.type_share));
  }

  md << "\n## Silver diversity\n\n";
  if (!in.diversity) {
    md << kNotRun;
  } else {
    md << "| config | N | diversity (%) | no match (%) |\n|---|---|---|---|\n";
    for (const auto& r : *in.diversity) {
      md << "| " << r.config << " | " << r.n << " | " << fixed(r.diversity) << " | "
         << fixed(r.no_match) << " |\n";
    }
    docs.csv.emplace_back("diversity.csv", diversity_csv(*in.diversity));
  }

  md << "\n## QA utilization per iteration\n\n";
  if (!in.utilization) {
    md << kNotRun;
  } else {
    md << "| iteration | tau | mode | selected / total | utilization (%) |\n|---|---|---|---|---|\n";
    for (const auto& r : *in.utilization) {
      md << "| " << r.iteration << " | " << fixed(r.tau) << " | " << curate::tau_mode_name(r.mode)
         << " | " << r.selected << " / " << r.total << " | " << fixed(100.0 * r.utilization)
         << " |\n";
    }
    docs.csv.emplace_back("utilization.csv", utilization_csv(*in.utilization));
  }

  md << "\n## Low-data regime\n\n";
  if (!in.low_data) {
    md << kNotRun;
  } else {
    md << "| NDCG | ";
    for (const auto& r : *in.low_data) md << fixed(100.0 * r.fraction, 0) << "% | ";
    md << "\n|---|";
    for (std::size_t i = 0; i < in.low_data->size(); ++i) md << "---|";
    md << "\n| teacher | ";
    for (const auto& r : *in.low_data) md << fixed(r.teacher.ndcg) << " | ";
    md << "\n| student | ";
    for (const auto& r : *in.low_data) md << fixed(r.student.ndcg) << " | ";
    md << "\n| gap | ";
    for (const auto& r : *in.low_data) md << fixed(r.student.ndcg - r.teacher.ndcg) << " | ";
    md << "\n";
    docs.csv.emplace_back("low_data.csv", low_data_csv(*in.low_data));
  }

  md << "\n## Attacks\n\n";
  if (!in.attacks || in.attacks->empty()) {
    md << kNotRun;
  } else {
    for (const auto& [label, curves] : *in.attacks) {
      md << "### " << label << "\n\n";
      if (curves.rows.empty()) {
        md << kNotRun << "\n";
        continue;
      }
      md << "| attack | setting | seeds | NDCG | MRR |\n|---|---|---|---|---|\n";
      for (const auto& s : curves.summary) {
        const auto cell = [&](double mean, double sd) {
          return s.has_std ? fixed(mean) + " ± " + fixed(sd) : fixed(mean);
        };
         md << "| " << s.attack << " | " << short_num(s.setting) << " | " << s.seeds << " | "
           << cell(s.ndcg_mean, s.ndcg_std) << " | " << cell(s.mrr_mean, s.mrr_std) << " |\n";
      }
      md << "\n";
      docs.csv.emplace_back("attack_curves_" + label + ".csv", attack_csv(curves.rows));
      docs.csv.emplace_back("attack_summary_" + label + ".csv", attack_summary_csv(curves.summary));
    }
  }

  md << "\n## Transcripts\n\n";
  if (in.transcripts.empty()) {
    md << kNotRun;
  } else {
    for (const auto& t : in.transcripts) md << render_transcript(t) << "\n";
  }
  docs.markdown = md.str();
  return docs;
}

void write_report(const std::filesystem::path& dir, const ReportDocs& docs) {
  std::filesystem::create_directories(dir);
  const auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write " + (dir / name).string());
    out << body;
  };
  put("report.md", docs.markdown);
  for (const auto& [name, body] : docs.csv) put(name, body);
}

}  // namespace gst::evalkit
