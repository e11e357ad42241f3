#include "permurank/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "permurank/error.hpp"
#include "permurank/random.hpp"

namespace permurank::synthetic {

namespace {

constexpr std::array<const char*, 20> kSyllables = {"ba", "ke", "lo", "mi", "nu", "pa", "re", "si", "to", "vu",
                                                    "da", "fe", "gi", "ho", "ju", "ka", "le", "mo", "ni", "po"};

std::string id_of(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

// Log-uniform slot: frequent words dominate, like natural text.
std::size_t background_slot(SplitMix64& rng, std::size_t vocabulary) {
  const double x = std::pow(static_cast<double>(vocabulary), rng.uniform());
  return std::min(vocabulary - 1, static_cast<std::size_t>(x) - 1);
}

std::vector<std::string> background_words(SplitMix64& rng, const CollectionSpec& spec) {
  const std::size_t span = spec.max_words - spec.min_words + 1;
  const std::size_t n = spec.min_words + static_cast<std::size_t>(rng.below(span));
  std::vector<std::string> words(n);
  for (auto& w : words) w = word(background_slot(rng, spec.vocabulary));
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

std::string word(std::size_t i) {
  std::size_t v = i + kSyllables.size();
  std::string out;
  while (v > 0) {
    out.insert(0, kSyllables[v % kSyllables.size()]);
    v /= kSyllables.size();
  }
  return out;
}

void CollectionSpec::validate() const {
  if (queries == 0) throw UsageError("synthetic collection needs at least one query");
  if (relevant_per_query == 0) throw UsageError("synthetic collection needs relevant passages per query");
  if (queries * relevant_per_query > passages) {
    throw UsageError("synthetic collection: queries x relevant_per_query exceeds the passage count");
  }
  if (query_terms == 0 || vocabulary < 4 * query_terms) throw UsageError("synthetic collection: vocabulary too small");
  if (min_words == 0 || min_words > max_words) throw UsageError("synthetic collection: need 1 <= min_words <= max_words");
}

Collection make_collection(const CollectionSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  Collection out;
  out.planted.resize(spec.queries);

  std::vector<std::vector<std::string>> terms(spec.queries);
  const std::size_t rare_begin = spec.vocabulary / 4;
  for (std::size_t q = 0; q < spec.queries; ++q) {
    auto& t = terms[q];
    while (t.size() < spec.query_terms) {
      auto w = word(rare_begin + static_cast<std::size_t>(rng.below(spec.vocabulary - rare_begin)));
      if (std::find(t.begin(), t.end(), w) == t.end()) t.push_back(std::move(w));
    }
    out.queries.push_back({id_of('q', q, 4), join(t)});
  }

  const int width = spec.passages >= 1000000 ? 7 : 6;
  std::vector<std::size_t> subset(spec.query_terms);
  for (std::size_t p = 0; p < spec.passages; ++p) {
    auto words = background_words(rng, spec);
    const std::string docid = id_of('d', p, width);
    const std::size_t owner = p / spec.relevant_per_query;
    if (owner < spec.queries) {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.below(spec.query_terms));
      std::iota(subset.begin(), subset.end(), std::size_t{0});
      shuffle(std::span<std::size_t>(subset), rng);
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t copies = 1 + static_cast<std::size_t>(rng.below(2));
        for (std::size_t c = 0; c < copies; ++c) {
          const auto at = static_cast<std::ptrdiff_t>(rng.below(words.size() + 1));
          words.insert(words.begin() + at, terms[owner][subset[i]]);
        }
      }
      out.planted[owner].push_back(docid);
      out.qrels.set(out.queries[owner].id, docid, static_cast<int>(std::min<std::size_t>(3, k - 1)));
    }
    out.corpus.add({docid, join(words), std::nullopt});
  }
  return out;
}

TeacherTask make_teacher_task(const TeacherSpec& spec, const sparse::Bm25Params& params) {
  const std::size_t total = spec.train_queries + spec.heldout_queries;
  if (total == 0 || spec.candidates < 2) throw UsageError("teacher task needs queries and at least 2 candidates");
  CollectionSpec cs;
  cs.queries = total;
  cs.relevant_per_query = spec.candidates;
  cs.passages = total * spec.candidates;
  cs.seed = spec.seed;
  TeacherTask task{make_collection(cs), {}, {}, {}};
  task.index = sparse::Index::build(task.collection.corpus);

  SplitMix64 rng(mix_seed(spec.seed, "teacher"));
  for (std::size_t q = 0; q < total; ++q) {
    const Query& query = task.collection.queries[q];
    std::vector<std::string> docids = task.collection.planted[q];
    shuffle(std::span<std::string>(docids), rng);
    std::vector<double> scores(docids.size());
    for (std::size_t i = 0; i < docids.size(); ++i) {
      const auto x = distill::extract_features(query, task.collection.corpus.at(docids[i]), task.index, params);
      double s = 0.0;
      for (std::size_t f = 0; f < distill::kFeatureCount; ++f) s += spec.hidden[f] * x[f];
      scores[i] = s;
    }
    std::vector<int> order(docids.size());
    std::iota(order.begin(), order.end(), 1);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a - 1] > scores[b - 1]; });
    textio::TeacherRecord record{query.id, query.text, std::move(docids), std::move(order)};
    (q < spec.train_queries ? task.train : task.heldout).push_back(std::move(record));
  }
  return task;
}

Judgments teacher_judgments(std::span<const textio::TeacherRecord> records) {
  Judgments out;
  for (const auto& r : records) {
    for (std::size_t p = 0; p < r.permutation.size(); ++p) {
      const int grade = p < 5 ? 3 : p < 10 ? 2 : p < 15 ? 1 : 0;
      out.set(r.query_id, r.docids[static_cast<std::size_t>(r.permutation[p] - 1)], grade);
    }
  }
  return out;
}

}  // namespace permurank::synthetic
