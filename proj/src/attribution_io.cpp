#include <fstream>
#include <sstream>

#include "emde/attribution.hpp"
#include "emde/error.hpp"
#include "emde/format.hpp"

namespace emde {

namespace {

constexpr std::string_view kUserHeader = "# emde attribution v1";
constexpr std::string_view kReportHeader = "# emde aggregate report v1";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

double parse_number(const std::filesystem::path& path, std::size_t line, const std::string& s) {
  const auto v = parse_double(s);
  if (!v) throw FormatError(path.string(), line, "bad number '" + s + "'");
  return *v;
}

void write_records(std::ostream& out, std::string_view section, std::string_view id_label,
                   const std::vector<ItemAttribution>& records) {
  out << '[' << section << "]\n";
  out << "modality\t" << id_label << "\tscore\n";
  for (const auto& r : records) out << r.modality << '\t' << r.id << '\t' << format_double(r.score) << '\n';
}

void write_table(std::ostream& out, std::string_view section, std::string_view modality,
                 std::string_view id_label, const std::vector<RankedEntity>& rows) {
  out << '[' << section << ' ' << modality << "]\n";
  out << "rank\t" << id_label << "\tmean_score\tusers\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i + 1 << '\t' << rows[i].id << '\t' << format_double(rows[i].mean_score) << '\t' << rows[i].users << '\n';
}

}  // namespace

void write_user_attribution(const std::filesystem::path& path, const UserAttribution& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kUserHeader << '\n';
  out << "user_id\t" << a.user_id << '\n';
  out << "target_item\t" << a.target_item << '\n';
  out << "target_score\t" << format_double(a.target_score) << '\n';
  out << "ig_steps\t" << a.ig_steps << '\n';
  out << "ig_mode\t" << to_string(a.mode) << '\n';
  out << "target_at_input\t" << format_double(a.target_at_input) << '\n';
  out << "target_at_baseline\t" << format_double(a.target_at_baseline) << '\n';
  out << "completeness_gap\t" << format_double(a.completeness_gap) << '\n';
  out << "modalities\t";
  for (std::size_t i = 0; i < a.modalities.size(); ++i) out << (i ? "," : "") << a.modalities[i];
  out << '\n';
  write_records(out, "entities", "entity", a.entities);
  write_records(out, "items", "item", a.items);
  if (!out) throw DataError("write failed: " + path.string());
}

UserAttribution read_user_attribution(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kUserHeader)
    throw FormatError(path.string(), 1, "not an attribution file");
  UserAttribution a;
  std::vector<ItemAttribution>* section = nullptr;
  bool expect_columns = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "[entities]" || line == "[items]") {
      section = line == "[entities]" ? &a.entities : &a.items;
      expect_columns = true;
      continue;
    }
    if (expect_columns) {
      expect_columns = false;
      continue;
    }
    const auto f = split_tabs(line);
    if (section) {
      if (f.size() != 3) throw FormatError(path.string(), line_no, "expected modality, id, score");
      section->push_back({f[0], f[1], parse_number(path, line_no, f[2])});
      continue;
    }
    if (f.size() != 2) throw FormatError(path.string(), line_no, "expected key<TAB>value");
    const auto& key = f[0];
    const auto& value = f[1];
    if (key == "user_id") {
      a.user_id = value;
    } else if (key == "target_item") {
      a.target_item = value;
    } else if (key == "target_score") {
      a.target_score = parse_number(path, line_no, value);
    } else if (key == "ig_steps") {
      a.ig_steps = static_cast<int>(parse_number(path, line_no, value));
    } else if (key == "ig_mode") {
      a.mode = parse_target_mode(value);
    } else if (key == "target_at_input") {
      a.target_at_input = parse_number(path, line_no, value);
    } else if (key == "target_at_baseline") {
      a.target_at_baseline = parse_number(path, line_no, value);
    } else if (key == "completeness_gap") {
      a.completeness_gap = parse_number(path, line_no, value);
    } else if (key == "modalities") {
      std::istringstream names(value);
      std::string name;
      while (std::getline(names, name, ',')) a.modalities.push_back(name);
    } else {
      throw FormatError(path.string(), line_no, "unknown key '" + key + "'");
    }
  }
  if (a.user_id.empty() || a.target_item.empty())
    throw FormatError(path.string(), line_no, "missing user_id or target_item");
  return a;
}

void write_report(const std::filesystem::path& path, const AggregateReport& report, const ReportMetrics& metrics) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kReportHeader << '\n';
  out << "target_item\t" << report.target_item << '\n';
  out << "target_users\t" << report.user_count << '\n';
  out << "all_users\t" << metrics.all_user_count << '\n';

  out << "[modality_agreement]\n";
  out << "main\tsupporting\ttarget_users\tagreement\tall_users\tagreement_all\n";
  for (std::size_t i = 0; i < metrics.agreement.size(); ++i) {
    out << metrics.main_modality << '\t' << metrics.modalities[i + 1] << '\t' << metrics.agreement_users[i].first
        << '\t' << format_double(metrics.agreement[i].first) << '\t' << metrics.agreement_users[i].second << '\t'
        << format_double(metrics.agreement[i].second) << '\n';
  }
  out << "[mean_top_attribution]\n";
  out << "modality\ttarget_users\tall_users\n";
  for (std::size_t i = 0; i < metrics.mean_top.size(); ++i)
    out << metrics.modalities[i] << '\t' << format_double(metrics.mean_top[i].first) << '\t'
        << format_double(metrics.mean_top[i].second) << '\n';

  for (const auto& table : report.modalities) {
    write_table(out, "entities", table.modality, "entity", table.entities);
    write_table(out, "items", table.modality, "item", table.items);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace emde
