#include "permurank/textio.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>
#include <unordered_map>

#include "json.hpp"
#include "permurank/error.hpp"

namespace permurank::textio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string at_line(const fs::path& path, std::size_t line_no) {
  return path.string() + " line " + std::to_string(line_no);
}

json parse_json_line(const std::string& line, const std::string& where) {
  try {
    json obj = json::parse(line);
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    return obj;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw DataError(where + ": missing string field '" + key + "'");
  return it->get<std::string>();
}

// Accepts strings and integers, since query ids are often numeric in JSONL exports.
std::string require_id(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it != obj.end() && it->is_number_integer()) return std::to_string(it->get<long long>());
  return require_string(obj, key, where);
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) strip_bom(line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    fn(line, line_no);
  }
}

}  // namespace

void strip_bom(std::string& line) {
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
}

AtomicFile::AtomicFile(fs::path path) : path_(std::move(path)), partial_(path_) {
  partial_ += ".partial";
  out_.open(partial_, std::ios::binary | std::ios::trunc);
  if (!out_) throw DataError("cannot open " + partial_.string() + " for writing");
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(partial_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) throw DataError("write failed: " + partial_.string());
  out_.close();
  fs::rename(partial_, path_);
  committed_ = true;
}

Judgments parse_qrels(std::istream& in) {
  Judgments judgments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) strip_bom(line);
    if (is_blank(line)) continue;
    const auto fields = split_fields(line);
    const std::string where = "qrels line " + std::to_string(line_no);
    if (fields.size() != 4) {
      throw DataError(where + ": expected 4 fields `qid iter docid rel`, got " + std::to_string(fields.size()));
    }
    long long rel = 0;
    if (!parse_number(fields[3], rel)) {
      throw DataError(where + ": relevance '" + std::string(fields[3]) + "' is not an integer");
    }
    if (rel < 0) throw DataError(where + ": negative relevance " + std::to_string(rel));
    if (rel > Judgments::kMaxGrade) {
      throw DataError(where + ": relevance " + std::to_string(rel) + " exceeds " +
                      std::to_string(Judgments::kMaxGrade));
    }
    judgments.set(std::string(fields[0]), std::string(fields[2]), static_cast<int>(rel));
  }
  return judgments;
}

Judgments read_qrels(const fs::path& path) {
  auto in = open_input(path);
  try {
    return parse_qrels(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_qrels(const Judgments& judgments, const fs::path& path) {
  AtomicFile file(path);
  for (const auto& qid : judgments.query_ids()) {
    const auto* docs = judgments.query_map(qid);
    std::map<std::string, int> sorted(docs->begin(), docs->end());
    for (const auto& [docid, grade] : sorted) file.stream() << qid << " 0 " << docid << ' ' << grade << '\n';
  }
  file.commit();
}

std::string format_score(double score) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), score);
  std::string out(buf, ptr);
  if (out.find_first_of(".eni") == std::string::npos) out += ".0";
  return out;
}

void write_run(std::span<const Ranking> rankings, std::string_view tag, std::ostream& out) {
  if (tag.empty() || contains_whitespace(tag)) throw DataError("run tag must be non-empty without whitespace");
  for (const auto& r : rankings) {
    if (r.query_id().empty() || contains_whitespace(r.query_id())) {
      throw DataError("query id '" + r.query_id() + "' cannot be written to a run file");
    }
    for (const auto& e : r.entries()) {
      if (contains_whitespace(e.docid)) throw DataError("docid '" + e.docid + "' contains whitespace");
    }
  }
  for (const auto& r : rankings) {
    int rank = 1;
    for (const auto& e : r.entries()) {
      out << r.query_id() << " Q0 " << e.docid << ' ' << rank++ << ' ' << format_score(e.score) << ' ' << tag
          << '\n';
    }
  }
}

void write_run(std::span<const Ranking> rankings, std::string_view tag, const fs::path& path) {
  std::ostringstream buffer;
  write_run(rankings, tag, buffer);  // validates before the file is touched
  AtomicFile file(path);
  file.stream() << buffer.str();
  file.commit();
}

std::vector<Ranking> parse_run(std::istream& in) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<RankedDoc>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) strip_bom(line);
    if (is_blank(line)) continue;
    const auto fields = split_fields(line);
    const std::string where = "run line " + std::to_string(line_no);
    if (fields.size() != 6) {
      throw DataError(where + ": expected 6 fields `qid Q0 docid rank score tag`, got " +
                      std::to_string(fields.size()));
    }
    long long rank = 0;
    double score = 0.0;
    if (!parse_number(fields[3], rank)) throw DataError(where + ": bad rank '" + std::string(fields[3]) + "'");
    if (!parse_number(fields[4], score)) throw DataError(where + ": bad score '" + std::string(fields[4]) + "'");
    std::string qid(fields[0]);
    auto [it, inserted] = entries.try_emplace(qid);
    if (inserted) order.push_back(qid);
    auto& list = it->second;
    if (rank != static_cast<long long>(list.size()) + 1) {
      throw DataError(where + ": query '" + qid + "' expected rank " + std::to_string(list.size() + 1) +
                      ", found " + std::to_string(rank));
    }
    list.push_back({std::string(fields[2]), score});
  }
  std::vector<Ranking> out;
  out.reserve(order.size());
  for (auto& qid : order) out.emplace_back(qid, std::move(entries[qid]));
  return out;
}

std::vector<Ranking> read_run(const fs::path& path) {
  auto in = open_input(path);
  try {
    return parse_run(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Corpus load_jsonl_corpus(const fs::path& path) {
  Corpus corpus;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const std::string where = at_line(path, line_no);
    json obj = parse_json_line(line, where);
    Passage p;
    p.docid = require_id(obj, "docid", where);
    p.text = require_string(obj, "text", where);
    if (auto t = obj.find("title"); t != obj.end() && t->is_string()) p.title = t->get<std::string>();
    try {
      corpus.add(std::move(p));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  });
  return corpus;
}

void write_jsonl_corpus(const Corpus& corpus, const fs::path& path) {
  AtomicFile file(path);
  for (const auto& p : corpus.passages()) {
    json obj = {{"docid", p.docid}, {"text", p.text}};
    if (p.title) obj["title"] = *p.title;
    file.stream() << obj.dump() << '\n';
  }
  file.commit();
}

std::vector<Query> load_queries(const fs::path& path) {
  std::vector<Query> queries;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const std::string where = at_line(path, line_no);
    Query q;
    if (line.front() == '{') {
      json obj = parse_json_line(line, where);
      q.id = require_id(obj, "qid", where);
      q.text = obj.contains("query") ? require_string(obj, "query", where) : require_string(obj, "text", where);
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError(where + ": expected `qid<TAB>text`");
      q.id = line.substr(0, tab);
      q.text = line.substr(tab + 1);
    }
    try {
      validate_query(q);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    queries.push_back(std::move(q));
  });
  return queries;
}

void write_queries_tsv(std::span<const Query> queries, const fs::path& path) {
  AtomicFile file(path);
  for (const auto& q : queries) {
    if (q.text.find_first_of("\t\n") != std::string::npos) {
      throw DataError("query '" + q.id + "' text contains a tab or newline");
    }
    file.stream() << q.id << '\t' << q.text << '\n';
  }
  file.commit();
}

GradedSet load_graded_set(const fs::path& path) {
  struct Group {
    Query query;
    std::vector<Passage> passages;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Group> groups;
  GradedSet set;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const std::string where = at_line(path, line_no);
    json obj = parse_json_line(line, where);
    Query q{require_id(obj, "qid", where), require_string(obj, "query", where)};
    Passage p{require_id(obj, "docid", where), require_string(obj, "text", where), std::nullopt};
    auto rel_it = obj.find("rel");
    if (rel_it == obj.end() || !rel_it->is_number_integer()) throw DataError(where + ": missing integer 'rel'");
    const auto rel = rel_it->get<long long>();
    if (rel < 0 || rel > 2) throw DataError(where + ": rel " + std::to_string(rel) + " outside {0,1,2}");
    auto [it, inserted] = groups.try_emplace(q.id);
    if (inserted) {
      order.push_back(q.id);
      it->second.query = q;
    } else if (it->second.query.text != q.text) {
      throw DataError(where + ": query '" + q.id + "' text differs from earlier rows");
    }
    set.judgments.set(q.id, p.docid, static_cast<int>(rel));
    it->second.passages.push_back(std::move(p));
  });
  for (const auto& qid : order) {
    auto& g = groups[qid];
    set.queries.push_back(g.query);
    try {
      set.candidates.push_back(CandidateList::from_passages(g.query, std::move(g.passages)));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return set;
}

TeacherPermutation TeacherRecord::to_permutation() const {
  return TeacherPermutation::from_order(query_id, docids, permutation);
}

std::vector<TeacherRecord> load_teacher_records(const fs::path& path) {
  std::vector<TeacherRecord> records;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const std::string where = at_line(path, line_no);
    json obj = parse_json_line(line, where);
    TeacherRecord r;
    r.query_id = require_id(obj, "qid", where);
    r.query_text = require_string(obj, "query", where);
    try {
      r.docids = obj.at("docids").get<std::vector<std::string>>();
      r.permutation = obj.at("permutation").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (r.permutation.size() != r.docids.size() || !is_rank_permutation(r.permutation)) {
      throw DataError(where + ": permutation is not a permutation of 1.." + std::to_string(r.docids.size()));
    }
    records.push_back(std::move(r));
  });
  return records;
}

void write_teacher_records(std::span<const TeacherRecord> records, const fs::path& path) {
  AtomicFile file(path);
  for (const auto& r : records) {
    json obj = {{"qid", r.query_id}, {"query", r.query_text}, {"docids", r.docids}, {"permutation", r.permutation}};
    file.stream() << obj.dump() << '\n';
  }
  file.commit();
}

}  // namespace permurank::textio
