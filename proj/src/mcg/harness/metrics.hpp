#ifndef MCG_HARNESS_METRICS_HPP
#define MCG_HARNESS_METRICS_HPP

#include <json.hpp>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcg/core.hpp"

namespace mcg::harness {

// One evaluation image's outcome, as persisted to JSONL.
struct ExampleRow {
  int image_id = 0;
  bool success = false;
  std::uint64_t queries_used = 0;
  bool first_query_success = false;
  std::string goal = "untargeted";
  int target_label = -1;  // -1 for untargeted
};

// Mean/Median are over successful attacks only and absent when there are
// none; FASR <= ASR always. Rates are fractions in [0, 1].
struct MetricsReport {
  long n_examples = 0;
  double asr = 0.0;
  double fasr = 0.0;
  std::optional<double> mean_queries;
  std::optional<double> median_queries;
};

MetricsReport compute_metrics(const std::vector<ExampleRow>& rows);

// ASR@q for each grid point: fraction with success and queries_used <= q.
std::vector<std::pair<std::uint64_t, double>> emit_curve(
    const std::vector<ExampleRow>& rows,
    const std::vector<std::uint64_t>& grid);

nlohmann::json row_to_json(const ExampleRow& row);
ExampleRow row_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const MetricsReport& r);

void write_jsonl(const std::string& path,
                 const std::vector<ExampleRow>& rows);
std::vector<ExampleRow> read_jsonl(const std::string& path);

// ASR/Mean/Median/FASR table row; percentages with one decimal.
void write_csv(const std::string& path, const std::string& label,
               const MetricsReport& r);
void write_curve_tsv(
    const std::string& path,
    const std::vector<std::pair<std::uint64_t, double>>& curve);

}  // namespace mcg::harness

#endif
