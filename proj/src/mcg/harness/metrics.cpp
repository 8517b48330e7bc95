#include "mcg/harness/metrics.hpp"

#include <algorithm>
#include <fstream>

namespace mcg::harness {

MetricsReport compute_metrics(const std::vector<ExampleRow>& rows) {
  if (rows.empty()) throw EmptyResults("no attack results to summarize");
  MetricsReport r;
  r.n_examples = (long)rows.size();
  std::vector<double> q;
  long first = 0;
  for (const auto& row : rows) {
    if (row.first_query_success && !row.success)
      throw DataError("row marked first-query success but not success");
    if (row.success) q.push_back((double)row.queries_used);
    if (row.first_query_success) ++first;
  }
  r.asr = (double)q.size() / (double)rows.size();
  r.fasr = (double)first / (double)rows.size();
  if (!q.empty()) {
    double sum = 0.0;
    for (double v : q) sum += v;
    r.mean_queries = sum / (double)q.size();
    std::sort(q.begin(), q.end());
    std::size_t m = q.size() / 2;
    r.median_queries = q.size() % 2 == 1
                           ? q[m]
                           : q[m - 1] + 0.5 * (q[m] - q[m - 1]);
  }
  return r;
}

std::vector<std::pair<std::uint64_t, double>> emit_curve(
    const std::vector<ExampleRow>& rows,
    const std::vector<std::uint64_t>& grid) {
  std::vector<std::pair<std::uint64_t, double>> curve;
  for (std::uint64_t q : grid) {
    long hits = 0;
    for (const auto& row : rows)
      if (row.success && row.queries_used <= q) ++hits;
    curve.emplace_back(q, rows.empty() ? 0.0
                                       : (double)hits / (double)rows.size());
  }
  return curve;
}

nlohmann::json row_to_json(const ExampleRow& row) {
  return {{"image_id", row.image_id},
          {"success", row.success},
          {"queries_used", row.queries_used},
          {"first_query_success", row.first_query_success},
          {"goal", row.goal},
          {"target_label", row.target_label}};
}

ExampleRow row_from_json(const nlohmann::json& j) {
  ExampleRow row;
  try {
    row.image_id = j.at("image_id").get<int>();
    row.success = j.at("success").get<bool>();
    row.queries_used = j.at("queries_used").get<std::uint64_t>();
    row.first_query_success = j.at("first_query_success").get<bool>();
    row.goal = j.at("goal").get<std::string>();
    row.target_label = j.at("target_label").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed result row: ") + e.what());
  }
  return row;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j = {{"n_examples", r.n_examples},
                      {"asr", r.asr},
                      {"fasr", r.fasr}};
  j["mean_queries"] =
      r.mean_queries ? nlohmann::json(*r.mean_queries) : nullptr;
  j["median_queries"] =
      r.median_queries ? nlohmann::json(*r.median_queries) : nullptr;
  return j;
}

void write_jsonl(const std::string& path,
                 const std::vector<ExampleRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& row : rows) out << row_to_json(row).dump() << "\n";
}

std::vector<ExampleRow> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<ExampleRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("bad JSONL line in " + path);
    rows.push_back(row_from_json(j));
  }
  return rows;
}

void write_csv(const std::string& path, const std::string& label,
               const MetricsReport& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "run,ASR,Mean,Median,FASR,N\n";
  char buf[256];
  auto opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("null");
  };
  std::snprintf(buf, sizeof(buf), "%s,%.1f,%s,%s,%.1f,%ld\n", label.c_str(),
                100.0 * r.asr, opt(r.mean_queries).c_str(),
                opt(r.median_queries).c_str(), 100.0 * r.fasr, r.n_examples);
  out << buf;
}

void write_curve_tsv(
    const std::string& path,
    const std::vector<std::pair<std::uint64_t, double>>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "query_budget\tasr\n";
  for (const auto& [q, asr] : curve) out << q << "\t" << asr << "\n";
}

}  // namespace mcg::harness
