#include "permurank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "permurank/error.hpp"

namespace permurank::metrics {

double ndcg_at_k(const Ranking& ranking, const Judgments& judgments, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  std::vector<int> ideal = judgments.grades_for(ranking.query_id());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg <= 0.0) return 0.0;
  const auto* grades = judgments.query_map(ranking.query_id());
  double dcg = 0.0;
  const auto& entries = ranking.entries();
  for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) {
    auto it = grades->find(entries[i].docid);
    if (it == grades->end() || it->second == 0) continue;
    dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

double rbo(std::span<const std::string> a, std::span<const std::string> b, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("rbo: persistence must lie in (0, 1)");
  auto check_distinct = [](std::span<const std::string> list) {
    std::unordered_set<std::string_view> seen;
    for (const auto& item : list) {
      if (!seen.insert(item).second) throw std::invalid_argument("rbo: duplicate item '" + item + "'");
    }
  };
  check_distinct(a);
  check_distinct(b);
  if (std::equal(a.begin(), a.end(), b.begin(), b.end())) return 1.0;

  const auto shorter = a.size() <= b.size() ? a : b;
  const auto longer = a.size() <= b.size() ? b : a;
  const std::size_t s = shorter.size();
  const std::size_t l = longer.size();
  if (s == 0) return 0.0;

  std::unordered_set<std::string_view> seen_short;
  std::unordered_set<std::string_view> seen_long;
  double overlap = 0.0;   // X_d
  double x_s = 0.0;       // X_s
  double agreement = 0.0; // sum_d X_d / d * p^d
  double tail = 0.0;      // sum_{d>s} X_s (d - s) / (s d) * p^d
  double p_d = 1.0;
  for (std::size_t d = 1; d <= l; ++d) {
    p_d *= p;
    const std::string& y = longer[d - 1];
    if (d <= s) {
      const std::string& x = shorter[d - 1];
      if (x == y) {
        overlap += 1.0;
      } else {
        if (seen_long.contains(x)) overlap += 1.0;
        if (seen_short.contains(y)) overlap += 1.0;
      }
      seen_short.insert(x);
      seen_long.insert(y);
      if (d == s) x_s = overlap;
    } else if (seen_short.contains(y)) {
      overlap += 1.0;
    }
    const double dd = static_cast<double>(d);
    agreement += overlap / dd * p_d;
    if (d > s) {
      const double ss = static_cast<double>(s);
      tail += x_s * (dd - ss) / (ss * dd) * p_d;
    }
  }
  const double x_l = overlap;
  const double value = (1.0 - p) / p * (agreement + tail) +
                       ((x_l - x_s) / static_cast<double>(l) + x_s / static_cast<double>(s)) * p_d;
  return std::clamp(value, 0.0, 1.0);
}

std::string ndcg_name(std::size_t k) { return "ndcg_cut_" + std::to_string(k); }
std::string ndcg_label(std::size_t k) { return "nDCG@" + std::to_string(k); }

namespace {

void check_cutoffs(std::span<const std::size_t> cutoffs) {
  if (cutoffs.empty()) throw UsageError("at least one nDCG cutoff is required");
  for (auto k : cutoffs) {
    if (k == 0) throw UsageError("nDCG cutoffs must be >= 1");
  }
}

// Shared assembly so the serial and parallel paths aggregate identically.
EvalReport assemble(std::span<const Ranking> run, const Judgments& qrels, std::span<const std::size_t> cutoffs,
                    const std::vector<std::vector<double>>& values) {
  EvalReport report;
  report.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  std::vector<double> sums(cutoffs.size(), 0.0);
  for (std::size_t q = 0; q < run.size(); ++q) {
    if (!qrels.has_query(run[q].query_id())) {
      ++report.skipped;
      continue;
    }
    QueryMetrics qm{run[q].query_id(), {}};
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      qm.values[ndcg_name(cutoffs[c])] = values[q][c];
      sums[c] += values[q][c];
    }
    report.per_query.push_back(std::move(qm));
    ++report.evaluated;
  }
  if (report.evaluated == 0) throw DataError("no run query has relevance judgments");
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    report.averages[ndcg_name(cutoffs[c])] = sums[c] / static_cast<double>(report.evaluated);
  }
  return report;
}

std::vector<double> query_values(const Ranking& ranking, const Judgments& qrels,
                                 std::span<const std::size_t> cutoffs) {
  std::vector<double> v(cutoffs.size(), 0.0);
  if (!qrels.has_query(ranking.query_id())) return v;
  for (std::size_t c = 0; c < cutoffs.size(); ++c) v[c] = ndcg_at_k(ranking, qrels, cutoffs[c]);
  return v;
}

}  // namespace

EvalReport evaluate(std::span<const Ranking> run, const Judgments& qrels, std::span<const std::size_t> cutoffs) {
  check_cutoffs(cutoffs);
  std::vector<std::vector<double>> values(run.size());
  const auto n = static_cast<std::ptrdiff_t>(run.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < n; ++q) values[q] = query_values(run[q], qrels, cutoffs);
  return assemble(run, qrels, cutoffs, values);
}

EvalReport evaluate_serial(std::span<const Ranking> run, const Judgments& qrels,
                           std::span<const std::size_t> cutoffs) {
  check_cutoffs(cutoffs);
  std::vector<std::vector<double>> values;
  values.reserve(run.size());
  for (const auto& r : run) values.push_back(query_values(r, qrels, cutoffs));
  return assemble(run, qrels, cutoffs, values);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json root;
  root["evaluated"] = evaluated;
  root["skipped"] = skipped;
  root["cutoffs"] = cutoffs;
  nlohmann::ordered_json avg = nlohmann::ordered_json::object();
  for (auto k : cutoffs) avg[ndcg_name(k)] = averages.at(ndcg_name(k));
  root["averages"] = std::move(avg);
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& q : per_query) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (auto k : cutoffs) row[ndcg_name(k)] = q.values.at(ndcg_name(k));
    per[q.query_id] = std::move(row);
  }
  root["per_query"] = std::move(per);
  return root.dump(2);
}

void EvalReport::print_table(std::ostream& out, bool with_queries) const {
  const auto flags = out.flags();
  std::size_t width = 8;
  for (auto k : cutoffs) width = std::max(width, ndcg_label(k).size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "metric" << "value\n";
  out << std::fixed << std::setprecision(4);
  for (auto k : cutoffs) {
    out << std::left << std::setw(static_cast<int>(width)) << ndcg_label(k) << averages.at(ndcg_name(k)) << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "queries" << evaluated;
  if (skipped > 0) out << " (" << skipped << " without judgments skipped)";
  out << '\n';
  if (with_queries) {
    std::size_t qwidth = 6;
    for (const auto& q : per_query) qwidth = std::max(qwidth, q.query_id.size() + 2);
    out << '\n';
    for (const auto& q : per_query) {
      for (auto k : cutoffs) {
        out << std::left << std::setw(static_cast<int>(width)) << ndcg_label(k) << std::setw(static_cast<int>(qwidth))
            << q.query_id << q.values.at(ndcg_name(k)) << '\n';
      }
    }
  }
  out.flags(flags);
}

BehaviorStats collect_behavior(std::span<const WindowBehavior> windows, std::span<const double> rbo_samples) {
  BehaviorStats stats;
  for (const auto& w : windows) {
    stats.repetition += w.repetition;
    stats.missing += w.missing;
    stats.rejection += w.rejected ? 1 : 0;
  }
  stats.windows = static_cast<long long>(windows.size());
  double sum = 0.0;
  for (double r : rbo_samples) sum += r;
  stats.rbo_samples = static_cast<long long>(rbo_samples.size());
  stats.rbo_mean = rbo_samples.empty() ? 0.0 : sum / static_cast<double>(rbo_samples.size());
  return stats;
}

std::string BehaviorStats::to_json() const {
  nlohmann::ordered_json root = {{"windows", windows},         {"repetition", repetition},
                                 {"missing", missing},         {"rejection", rejection},
                                 {"rbo_mean", rbo_mean},       {"rbo_samples", rbo_samples}};
  return root.dump(2);
}

void BehaviorStats::print_table(std::ostream& out) const {
  const auto flags = out.flags();
  out << std::left << std::setw(12) << "windows" << windows << '\n'
      << std::setw(12) << "repetition" << repetition << '\n'
      << std::setw(12) << "missing" << missing << '\n'
      << std::setw(12) << "rejection" << rejection << '\n'
      << std::setw(12) << "rbo" << std::fixed << std::setprecision(4) << rbo_mean << " (" << rbo_samples
      << " samples)\n";
  out.flags(flags);
}

}  // namespace permurank::metrics
