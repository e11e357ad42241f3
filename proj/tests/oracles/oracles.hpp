#pragma once

// Independent reference implementations used as test oracles. They share
// no code with the library and favour directness over speed.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct ParseResult {
  std::vector<int> order;
  int repetition = 0;
  int missing = 0;
  bool rejected = false;
};

// Regex tokenization of digit runs; numeric comparison on the digit string.
inline ParseResult parse(const std::string& text, int m) {
  ParseResult r;
  const std::string m_str = std::to_string(m);
  std::set<int> seen;
  static const std::regex digits("[0-9]+");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), digits); it != std::sregex_iterator(); ++it) {
    std::string run = it->str();
    run.erase(0, std::min(run.find_first_not_of('0'), run.size()));
    if (run.empty()) continue;  // zero
    if (run.size() > m_str.size() || (run.size() == m_str.size() && run > m_str)) continue;
    const int v = std::stoi(run);
    if (seen.count(v)) {
      ++r.repetition;
    } else {
      seen.insert(v);
      r.order.push_back(v);
    }
  }
  if (r.order.empty()) {
    r.repetition = 0;
    r.rejected = true;
    for (int i = 1; i <= m; ++i) r.order.push_back(i);
    return r;
  }
  for (int i = 1; i <= m; ++i) {
    if (!seen.count(i)) {
      r.order.push_back(i);
      ++r.missing;
    }
  }
  return r;
}

// RBO_ext straight from the published definition, with explicit prefix sets.
inline double rbo_ext(const std::vector<std::string>& a, const std::vector<std::string>& b, double p) {
  const auto& S = a.size() <= b.size() ? a : b;
  const auto& L = a.size() <= b.size() ? b : a;
  const std::size_t s = S.size();
  const std::size_t l = L.size();
  if (l == 0) return 1.0;
  if (s == 0) return 0.0;
  auto X = [&](std::size_t d) {
    std::set<std::string> ps(S.begin(), S.begin() + static_cast<long>(std::min(d, s)));
    std::set<std::string> pl(L.begin(), L.begin() + static_cast<long>(d));
    std::size_t n = 0;
    for (const auto& x : ps) n += pl.count(x);
    return static_cast<double>(n);
  };
  const double xs = X(s);
  const double xl = X(l);
  double sum = 0.0;
  for (std::size_t d = 1; d <= l; ++d) sum += X(d) / static_cast<double>(d) * std::pow(p, static_cast<double>(d));
  for (std::size_t d = s + 1; d <= l; ++d) {
    sum += xs * static_cast<double>(d - s) / static_cast<double>(s * d) * std::pow(p, static_cast<double>(d));
  }
  return (1 - p) / p * sum +
         ((xl - xs) / static_cast<double>(l) + xs / static_cast<double>(s)) * std::pow(p, static_cast<double>(l));
}

inline double dcg(const std::vector<int>& gains, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < gains.size() && i < k; ++i) total += gains[i] / std::log2(static_cast<double>(i + 2));
  return total;
}

// nDCG with IDCG as the best DCG over every ordering of the judged grades
// (brute force for up to 8 judged documents, sorted otherwise).
inline double ndcg(const std::vector<std::string>& ranking, const std::map<std::string, int>& judged, std::size_t k) {
  std::vector<int> gains;
  for (const auto& d : ranking) {
    auto it = judged.find(d);
    gains.push_back(it == judged.end() ? 0 : it->second);
  }
  std::vector<int> all;
  for (const auto& [d, g] : judged) all.push_back(g);
  double ideal = 0.0;
  if (all.size() <= 8) {
    std::sort(all.begin(), all.end());
    do {
      ideal = std::max(ideal, dcg(all, k));
    } while (std::next_permutation(all.begin(), all.end()));
  } else {
    std::sort(all.rbegin(), all.rend());
    ideal = dcg(all, k);
  }
  return ideal > 0.0 ? dcg(gains, k) / ideal : 0.0;
}

// ASCII-only tokenizer for oracle corpora.
inline std::vector<std::string> ascii_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// BM25 by rescanning every document; docs are already tokenized.
inline double bm25(const std::vector<std::vector<std::string>>& docs, std::size_t doc, const std::string& query,
                   double k1, double b) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avg = total_len / n;
  auto terms = ascii_tokens(query);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  double score = 0.0;
  for (const auto& t : terms) {
    double df = 0.0;
    for (const auto& d : docs) df += std::count(d.begin(), d.end(), t) > 0 ? 1.0 : 0.0;
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), t));
    if (tf == 0.0) continue;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double len = static_cast<double>(docs[doc].size());
    score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
  }
  return score;
}

// 1-indexed inclusive window starts by direct simulation of the back-to-first rule.
inline std::vector<std::pair<int, int>> windows(int m, int w, int s) {
  std::vector<std::pair<int, int>> out;
  if (m <= w) return {{1, m}};
  int start = m - w + 1;
  while (true) {
    if (start < 1) start = 1;
    out.push_back({start, std::min(start + w - 1, m)});
    if (start == 1) break;
    start -= s;
  }
  return out;
}

}  // namespace oracle
