#include "permurank/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "permurank/error.hpp"

namespace permurank::sparse {

namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one code point starting at text[i]; advances i. Malformed
// sequences consume one byte and yield kInvalid.
char32_t decode_utf8(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return kInvalid;
  }
  if (i + static_cast<std::size_t>(len) > text.size()) {
    ++i;
    return kInvalid;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return kInvalid;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

bool is_word_char(char32_t cp) {
  if (cp == kInvalid) return false;
  if (cp < 0x80) {
    return in(cp, '0', '9') || in(cp, 'a', 'z') || in(cp, 'A', 'Z');
  }
  if (in(cp, 0x80, 0xBF)) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (in(cp, 0x2000, 0x2BFF)) return false;  // punctuation, currency, arrows, math, box drawing
  if (in(cp, 0x3000, 0x303F)) return false;  // CJK punctuation
  if (in(cp, 0xFE30, 0xFE4F) || in(cp, 0xFE50, 0xFE6F)) return false;
  if (in(cp, 0xFF00, 0xFF0F) || in(cp, 0xFF1A, 0xFF20) || in(cp, 0xFF3B, 0xFF40) || in(cp, 0xFF5B, 0xFF65)) {
    return false;
  }
  if (in(cp, 0xFFF0, 0xFFFF)) return false;
  if (in(cp, 0x1F000, 0x1FAFF)) return false;  // emoji and pictographs
  if (in(cp, 0xD800, 0xDFFF) || cp > 0x10FFFF) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (in(cp, 'A', 'Z')) return cp + 0x20;
  if (cp < 0x80) return cp;
  if (in(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 0x20;
  if (in(cp, 0x100, 0x137) || in(cp, 0x14A, 0x177)) return (cp % 2 == 0) ? cp + 1 : cp;
  if (in(cp, 0x139, 0x148) || in(cp, 0x179, 0x17E)) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp == 0x178) return 0xFF;
  if (in(cp, 0x391, 0x3A9) && cp != 0x3A2) return cp + 0x20;
  if (cp == 0x386) return 0x3AC;
  if (in(cp, 0x388, 0x38A)) return cp + 0x25;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 0x3F;
  if (in(cp, 0x410, 0x42F)) return cp + 0x20;
  if (in(cp, 0x400, 0x40F)) return cp + 0x50;
  if (in(cp, 0xFF21, 0xFF3A)) return cp + 0x20;
  return cp;
}

double term_weight(double idf, std::uint32_t tf, std::uint32_t doclen, double avg_doclen, const Bm25Params& p) {
  const double t = static_cast<double>(tf);
  const double norm = p.k1 * (1.0 - p.b + p.b * static_cast<double>(doclen) / avg_doclen);
  return idf * t * (p.k1 + 1.0) / (t + norm);
}

std::string indexed_text(const Passage& p) {
  if (!p.title || p.title->empty()) return p.text;
  return *p.title + " " + p.text;
}

constexpr int kIndexFormat = 1;

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    if (is_word_char(cp)) {
      encode_utf8(to_lower(cp), current);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> query_terms(std::string_view text) {
  auto terms = tokenize(text);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

void Bm25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw UsageError("bm25 k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw UsageError("bm25 b must be in [0, 1]");
}

Index Index::build(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("cannot index an empty corpus");
  Index index;
  index.passages_ = corpus.passages();
  index.doc_lengths_.reserve(index.passages_.size());
  for (std::size_t d = 0; d < index.passages_.size(); ++d) {
    const auto tokens = tokenize(indexed_text(index.passages_[d]));
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    }
  }
  index.finalize();
  return index;
}

void Index::finalize() {
  std::uint64_t total = 0;
  for (auto len : doc_lengths_) total += len;
  avg_doclen_ = static_cast<double>(total) / static_cast<double>(doc_lengths_.size());
  ordinals_.clear();
  for (std::size_t d = 0; d < passages_.size(); ++d) {
    if (!ordinals_.emplace(passages_[d].docid, static_cast<std::uint32_t>(d)).second) {
      throw DataError("duplicate docid '" + passages_[d].docid + "' in index");
    }
  }
}

std::span<const Posting> Index::postings(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  if (it == postings_.end()) return {};
  return it->second;
}

std::uint32_t Index::ordinal(std::string_view docid) const {
  auto it = ordinals_.find(std::string(docid));
  if (it == ordinals_.end()) throw DataError("docid '" + std::string(docid) + "' is not indexed");
  return it->second;
}

bool Index::contains(std::string_view docid) const { return ordinals_.contains(std::string(docid)); }

std::uint32_t Index::term_frequency(std::string_view term, std::uint32_t doc) const {
  const auto list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, std::uint32_t d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

double Index::idf(std::string_view term) const {
  const double n = static_cast<double>(doc_count());
  const double df = static_cast<double>(document_frequency(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

void Index::save(const std::filesystem::path& path) const {
  using nlohmann::json;
  json docs = json::array();
  for (std::size_t d = 0; d < passages_.size(); ++d) {
    json p = {{"docid", passages_[d].docid}, {"text", passages_[d].text}, {"len", doc_lengths_[d]}};
    if (passages_[d].title) p["title"] = *passages_[d].title;
    docs.push_back(std::move(p));
  }
  std::vector<std::string> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, list] : postings_) terms.push_back(term);
  std::sort(terms.begin(), terms.end());
  json postings = json::object();
  for (const auto& term : terms) {
    json flat = json::array();
    for (const auto& p : postings_.at(term)) {
      flat.push_back(p.doc);
      flat.push_back(p.tf);
    }
    postings[term] = std::move(flat);
  }
  json root = {{"format", "permurank-index"}, {"version", kIndexFormat}, {"docs", std::move(docs)},
               {"postings", std::move(postings)}};
  const auto partial = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + partial.string());
    out << root.dump() << '\n';
    if (!out) throw DataError("write failed: " + partial.string());
  }
  std::filesystem::rename(partial, path);
}

Index Index::load(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index " + path.string());
  Index index;
  try {
    const json root = json::parse(in);
    if (root.value("format", "") != "permurank-index" || root.value("version", 0) != kIndexFormat) {
      throw DataError(path.string() + " is not a permurank index");
    }
    for (const auto& d : root.at("docs")) {
      Passage p{d.at("docid").get<std::string>(), d.at("text").get<std::string>(), std::nullopt};
      if (d.contains("title")) p.title = d.at("title").get<std::string>();
      index.passages_.push_back(std::move(p));
      index.doc_lengths_.push_back(d.at("len").get<std::uint32_t>());
    }
    for (const auto& [term, flat] : root.at("postings").items()) {
      auto& list = index.postings_[term];
      for (std::size_t i = 0; i + 1 < flat.size(); i += 2) {
        list.push_back({flat[i].get<std::uint32_t>(), flat[i + 1].get<std::uint32_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (index.passages_.empty()) throw DataError(path.string() + ": index has no documents");
  index.finalize();
  return index;
}

double bm25_score(const Index& index, const Bm25Params& params, std::string_view query_text,
                  std::string_view docid) {
  const std::uint32_t doc = index.ordinal(docid);
  const std::uint32_t len = index.doc_lengths()[doc];
  double score = 0.0;
  for (const auto& term : query_terms(query_text)) {
    const std::uint32_t tf = index.term_frequency(term, doc);
    if (tf == 0) continue;
    score += term_weight(index.idf(term), tf, len, index.avg_doclen(), params);
  }
  return score;
}

CandidateList search(const Index& index, const Bm25Params& params, const Query& query, std::size_t k) {
  if (k == 0) throw UsageError("search depth k must be >= 1");
  const auto& lengths = index.doc_lengths();
  std::vector<double> scores(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  // Term order matches bm25_score so both paths sum identically.
  for (const auto& term : query_terms(query.text)) {
    const auto list = index.postings(term);
    if (list.empty()) continue;
    const double idf = index.idf(term);
    for (const auto& p : list) {
      if (scores[p.doc] == 0.0) touched.push_back(p.doc);
      scores[p.doc] += term_weight(idf, p.tf, lengths[p.doc], index.avg_doclen(), params);
    }
  }
  const auto& passages = index.passages();
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return passages[a].docid < passages[b].docid;
  };
  const std::size_t keep = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(keep), touched.end(), better);
  std::vector<Candidate> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto d = touched[i];
    out.push_back({passages[d], static_cast<int>(i) + 1, scores[d]});
  }
  return CandidateList(query, std::move(out));
}

std::vector<CandidateList> search_batch(const Index& index, const Bm25Params& params,
                                        std::span<const Query> queries, std::size_t k) {
  std::vector<CandidateList> out(queries.size());
  std::vector<std::exception_ptr> errors(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = search(index, params, queries[i], k);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<CandidateList> search_batch_serial(const Index& index, const Bm25Params& params,
                                               std::span<const Query> queries, std::size_t k) {
  std::vector<CandidateList> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(search(index, params, q, k));
  return out;
}

}  // namespace permurank::sparse
