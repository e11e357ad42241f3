#include "permurank/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "permurank/bm25.hpp"
#include "permurank/core.hpp"
#include "permurank/distill.hpp"
#include "permurank/error.hpp"
#include "permurank/gateway.hpp"
#include "permurank/metrics.hpp"
#include "permurank/prompting.hpp"
#include "permurank/rerank.hpp"
#include "permurank/synthetic.hpp"
#include "permurank/textio.hpp"

namespace permurank::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Output handling: everything is staged as .partial and renamed together.

class Outputs {
 public:
  void add(fs::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  void commit() {
    std::vector<fs::path> staged;
    try {
      for (const auto& [path, content] : files_) {
        const fs::path partial(path.string() + ".partial");
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        staged.push_back(partial);
        out << content;
        out.close();
        if (!out) throw DataError("failed writing " + path.string());
      }
      for (const auto& [path, content] : files_) fs::rename(fs::path(path.string() + ".partial"), path);
    } catch (...) {
      std::error_code ec;
      for (const auto& p : staged) fs::remove(p, ec);
      throw;
    }
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!first) first = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Subcommand options

struct IndexOpts {
  std::string corpus;
  std::string out;
};

struct RetrieveOpts {
  std::string index;
  std::string queries;
  std::size_t k = 100;
  double k1 = 0.9;
  double b = 0.4;
  std::string tag = "bm25";
  std::string out;
};

struct RerankOpts {
  std::string run;
  std::string corpus;
  std::string queries;
  std::string method = "pg-chat";
  int window = 20;
  int step = 0;
  int passes = 1;
  std::string initial_order = "as-retrieved";
  std::uint64_t seed = 0;
  std::size_t top_k_only = 0;
  std::string endpoint = "http://127.0.0.1:8000";
  std::string model = "gpt-3.5-turbo";
  int max_retries = 3;
  int timeout_ms = 60000;
  std::string mock_oracle;
  double fault_dup = 0.0;
  double fault_drop = 0.0;
  double fault_reject = 0.0;
  std::string trace;
  std::string request_log;
  int jobs = 4;
  std::size_t max_words = prompting::kDefaultMaxWords;
  std::string student;
  std::string index;
  double k1 = 0.9;
  double b = 0.4;
  std::string tag;
  std::string out;
};

struct EvalOpts {
  std::string run;
  std::string qrels;
  std::vector<std::size_t> ks{1, 5, 10};
  bool per_query = false;
  bool json = false;
};

struct StabilityOpts {
  std::string trace;
  bool json = false;
};

struct DistillOpts {
  std::string teacher;
  std::string corpus;
  std::string index;
  std::string loss = "ranknet";
  int epochs = 20;
  double lr = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  double k1 = 0.9;
  double b = 0.4;
  std::string out;
};

struct GradcheckOpts {
  std::string loss = "all";
  int instances = 100;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;
  double tolerance = 1e-6;
};

struct SynthOpts {
  std::string out_dir;
  std::size_t passages = 5000;
  std::size_t queries = 100;
  std::size_t vocabulary = 4000;
  std::uint64_t seed = 0;
  bool teacher = false;
  std::size_t train = 1000;
  std::size_t heldout = 200;
  std::size_t candidates = 20;
};

// ---------------------------------------------------------------------------
// Commands

int cmd_index(const IndexOpts& o, std::ostream& out) {
  const auto corpus = textio::load_jsonl_corpus(o.corpus);
  const auto index = sparse::Index::build(corpus);
  index.save(o.out);
  out << "indexed " << index.doc_count() << " passages, " << index.vocabulary_size() << " terms -> " << o.out
      << "\n";
  return 0;
}

int cmd_retrieve(const RetrieveOpts& o, std::ostream& out) {
  const sparse::Bm25Params params{o.k1, o.b};
  params.validate();
  if (o.k == 0) throw UsageError("--k must be >= 1");
  if (o.tag.empty() || contains_whitespace(o.tag)) throw UsageError("--tag must be non-empty without whitespace");
  const auto index = sparse::Index::load(o.index);
  const auto queries = textio::load_queries(o.queries);
  const auto lists = sparse::search_batch(index, params, queries, o.k);
  std::vector<Ranking> run;
  for (const auto& list : lists) {
    std::vector<RankedDoc> entries;
    for (const auto& c : list.candidates()) entries.push_back({c.passage.docid, c.initial_score});
    run.emplace_back(list.query().id, std::move(entries));
  }
  std::ostringstream buffer;
  textio::write_run(run, o.tag, buffer);
  Outputs outputs;
  outputs.add(o.out, buffer.str());
  outputs.commit();
  out << "retrieved " << run.size() << " queries -> " << o.out << "\n";
  return 0;
}

std::vector<CandidateList> candidate_lists(const std::vector<Ranking>& run, const Corpus& corpus,
                                           const std::vector<Query>& queries) {
  std::unordered_map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id.emplace(q.id, &q);
  std::vector<CandidateList> lists;
  for (const auto& r : run) {
    auto it = by_id.find(r.query_id());
    if (it == by_id.end()) throw DataError("run query '" + r.query_id() + "' is missing from the queries file");
    std::vector<Candidate> cands;
    int rank = 1;
    for (const auto& e : r.entries()) {
      const Passage* p = corpus.find(e.docid);
      if (!p) throw DataError("run query '" + r.query_id() + "': docid '" + e.docid + "' is not in the corpus");
      cands.push_back({*p, rank++, e.score});
    }
    lists.emplace_back(*it->second, std::move(cands));
  }
  return lists;
}

/// Pointwise scores for the first `limit` candidates; the tail keeps base order below them.
Ranking pointwise_ranking(const CandidateList& list, const std::vector<double>& head_scores) {
  const std::size_t k = head_scores.size();
  std::vector<Candidate> head(list.candidates().begin(), list.candidates().begin() + static_cast<long>(k));
  const auto head_list = CandidateList(list.query(), head);
  const auto ranked = rerank::rank_by_scores(head_list, head_scores);
  if (k == list.size()) return ranked;
  std::vector<RankedDoc> entries = ranked.entries();
  double floor = entries.empty() ? 0.0 : entries.back().score;
  for (std::size_t i = k; i < list.size(); ++i) {
    floor -= 1.0;
    entries.push_back({list[i].passage.docid, floor});
  }
  return Ranking(list.query().id, std::move(entries));
}

json trace_record(const rerank::WindowRecord& w) {
  json rec;
  rec["query_id"] = w.query_id;
  rec["pass"] = w.pass;
  rec["window"] = w.index;
  rec["start"] = w.start;
  rec["end"] = w.end;
  rec["prompt_hash"] = hex64(w.prompt_hash);
  rec["raw_text"] = w.raw_text;
  rec["docids"] = w.window_docids;
  rec["parsed_order"] = w.parsed_order;
  rec["repetition"] = w.anomalies.repetition;
  rec["missing"] = w.anomalies.missing;
  rec["rejected"] = w.anomalies.rejected;
  rec["rbo"] = w.rbo ? json(*w.rbo) : json(nullptr);
  return rec;
}

int cmd_rerank(RerankOpts o, const CLI::App& app, std::ostream& out) {
  // Flag validation happens before any file is read.
  const bool is_student = o.method == "student";
  std::optional<prompting::InstructionKind> kind;
  if (!is_student) kind = prompting::parse_instruction_kind(o.method);
  const bool permutation = kind && prompting::is_permutation(*kind);

  if (app.count("--step") == 0) o.step = std::max(1, o.window / 2);
  WindowConfig wc;
  wc.window = o.window;
  wc.step = o.step;
  wc.passes = o.passes;
  wc.initial_order = parse_initial_order(o.initial_order);
  wc.seed = o.seed;
  wc.validate();
  if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
  if (o.max_words < 1) throw UsageError("--max-words must be >= 1");
  if (o.tag.empty()) o.tag = o.method;
  if (contains_whitespace(o.tag)) throw UsageError("--tag must not contain whitespace");

  gateway::FaultRates faults{o.fault_dup, o.fault_drop, o.fault_reject, o.seed};
  faults.validate();
  const bool mock = !o.mock_oracle.empty();
  if (faults.any() && !mock) throw UsageError("--fault-* flags require --mock-oracle");
  if (mock && app.count("--endpoint") > 0) throw UsageError("--mock-oracle and --endpoint are mutually exclusive");
  if (!permutation && !o.trace.empty()) throw UsageError("--trace applies to permutation methods only");
  if (is_student) {
    if (o.student.empty()) throw UsageError("--method student requires --student");
    if (mock || app.count("--endpoint") > 0 || !o.request_log.empty()) {
      throw UsageError("--method student does not use a model endpoint");
    }
  } else if (!o.student.empty()) {
    throw UsageError("--student requires --method student");
  }
  if (app.count("--top-k-only") > 0 && o.top_k_only == 0) throw UsageError("--top-k-only must be >= 1");
  const std::optional<std::size_t> top_k =
      app.count("--top-k-only") > 0 ? std::optional<std::size_t>(o.top_k_only) : std::nullopt;
  sparse::Bm25Params bm25{o.k1, o.b};
  bm25.validate();

  const auto run = textio::read_run(o.run);
  const auto corpus = textio::load_jsonl_corpus(o.corpus);
  const auto queries = textio::load_queries(o.queries);
  auto lists = candidate_lists(run, corpus, queries);

  Outputs outputs;
  std::vector<Ranking> reranked(lists.size());

  if (is_student) {
    const auto student = distill::LinearStudent::load(o.student);
    const auto index = o.index.empty() ? sparse::Index::build(corpus) : sparse::Index::load(o.index);
    for (std::size_t i = 0; i < lists.size(); ++i) {
      if (lists[i].empty()) {
        reranked[i] = Ranking(lists[i].query().id, {});
        continue;
      }
      const std::size_t k = top_k ? std::min(*top_k, lists[i].size()) : lists[i].size();
      std::vector<Candidate> head(lists[i].candidates().begin(), lists[i].candidates().begin() + static_cast<long>(k));
      const auto ranked_head = distill::rank_with_student(student, CandidateList(lists[i].query(), head), index, bm25);
      std::vector<double> scores;
      std::unordered_map<std::string, double> by_doc;
      for (const auto& e : ranked_head.entries()) by_doc[e.docid] = e.score;
      for (const auto& c : head) scores.push_back(by_doc.at(c.passage.docid));
      reranked[i] = pointwise_ranking(lists[i], scores);
    }
    std::ostringstream buffer;
    textio::write_run(reranked, o.tag, buffer);
    outputs.add(o.out, buffer.str());
    outputs.commit();
    out << "reranked " << reranked.size() << " queries with the student -> " << o.out << "\n";
    return 0;
  }

  std::shared_ptr<gateway::LanguageModel> model;
  if (mock) {
    model = gateway::MockOracle::from_judgments(textio::read_qrels(o.mock_oracle), faults);
  } else {
    gateway::GatewayConfig gc;
    gc.endpoint_url = o.endpoint;
    gc.model_name = o.model;
    gc.max_retries = o.max_retries;
    gc.request_timeout = std::chrono::milliseconds(o.timeout_ms);
    gc.max_in_flight = o.jobs;
    gc.validate();
    model = std::make_shared<gateway::OpenAiClient>(gc);
  }
  gateway::Gateway gw(model, o.jobs);
  std::shared_ptr<std::ostringstream> request_log;
  if (!o.request_log.empty()) {
    request_log = std::make_shared<std::ostringstream>();
    gw.set_request_log(request_log);
  }

  std::vector<metrics::WindowBehavior> behavior;
  std::vector<double> rbo_samples;
  int rg_anomalies = 0;
  if (permutation) {
    rerank::RerankOptions ro;
    ro.kind = *kind;
    ro.max_words = o.max_words;
    const auto results = rerank::rerank_batch(lists, wc, gw, ro, o.jobs, top_k);
    std::string trace;
    for (std::size_t i = 0; i < results.size(); ++i) {
      reranked[i] = results[i].ranking;
      for (const auto& w : results[i].windows) {
        behavior.push_back({w.anomalies.repetition, w.anomalies.missing, w.anomalies.rejected});
        if (!o.trace.empty()) trace += dump_line(trace_record(w));
      }
      rbo_samples.insert(rbo_samples.end(), results[i].rbo_samples.begin(), results[i].rbo_samples.end());
    }
    if (!o.trace.empty()) outputs.add(o.trace, std::move(trace));
  } else {
    std::mutex mutex;
    parallel_for(lists.size(), o.jobs, [&](std::size_t i) {
      const auto& list = lists[i];
      if (list.empty()) {
        reranked[i] = Ranking(list.query().id, {});
        return;
      }
      const std::size_t k = top_k ? std::min(*top_k, list.size()) : list.size();
      std::vector<Candidate> head(list.candidates().begin(), list.candidates().begin() + static_cast<long>(k));
      const CandidateList head_list(list.query(), head);
      std::vector<double> scores;
      if (*kind == prompting::InstructionKind::QueryGen) {
        scores = rerank::score_query_gen(gw, head_list, o.max_words);
      } else {
        const bool few = *kind == prompting::InstructionKind::RelevanceGenFewShot;
        auto rg = rerank::score_relevance_gen(gw, head_list, few, o.max_words);
        scores = std::move(rg.scores);
        std::lock_guard lock(mutex);
        rg_anomalies += rg.anomalies;
      }
      reranked[i] = pointwise_ranking(list, scores);
    });
  }

  std::ostringstream buffer;
  textio::write_run(reranked, o.tag, buffer);
  outputs.add(o.out, buffer.str());
  if (request_log) {
    // Concurrent requests log in completion order; sort for stable output.
    std::vector<std::string> lines;
    std::istringstream in(request_log->str());
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    std::sort(lines.begin(), lines.end());
    std::string content;
    for (const auto& l : lines) content += l + "\n";
    outputs.add(o.request_log, std::move(content));
  }
  outputs.commit();

  const auto usage = gw.usage().totals();
  out << "reranked " << reranked.size() << " queries with " << o.method << " -> " << o.out << "\n";
  out << "requests " << usage.requests << ", tokens " << usage.tokens() << " (prompt " << usage.prompt_tokens
      << ", completion " << usage.completion_tokens << ")\n";
  if (permutation) metrics::collect_behavior(behavior, rbo_samples).print_table(out);
  if (*kind == prompting::InstructionKind::RelevanceGenFewShot ||
      *kind == prompting::InstructionKind::RelevanceGenZeroShot) {
    out << "unparsed judgments " << rg_anomalies << "\n";
  }
  return 0;
}

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  const auto run = textio::read_run(o.run);
  const auto qrels = textio::read_qrels(o.qrels);
  const auto report = metrics::evaluate(run, qrels, o.ks);
  if (o.json) {
    out << report.to_json() << "\n";
  } else {
    report.print_table(out, o.per_query);
  }
  return 0;
}

int cmd_stability(const StabilityOpts& o, std::ostream& out) {
  std::ifstream in(o.trace, std::ios::binary);
  if (!in) throw DataError("cannot open " + o.trace);
  std::vector<metrics::WindowBehavior> windows;
  std::vector<double> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) textio::strip_bom(line);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = o.trace + " line " + std::to_string(line_no);
    try {
      const auto rec = json::parse(line);
      metrics::WindowBehavior w;
      w.repetition = rec.at("repetition").get<int>();
      w.missing = rec.at("missing").get<int>();
      w.rejected = rec.at("rejected").get<bool>();
      if (w.repetition < 0 || w.missing < 0) throw DataError(where + ": negative counter");
      windows.push_back(w);
      const auto& rbo = rec.at("rbo");
      if (!rbo.is_null()) samples.push_back(rbo.get<double>());
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  const auto stats = metrics::collect_behavior(windows, samples);
  if (o.json) {
    out << stats.to_json() << "\n";
  } else {
    stats.print_table(out);
  }
  return 0;
}

int cmd_distill(const DistillOpts& o, std::ostream& out) {
  const auto kind = distill::parse_loss(o.loss);
  distill::TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.epochs = o.epochs;
  tc.l2 = o.l2;
  tc.seed = o.seed;
  tc.validate();
  const sparse::Bm25Params bm25{o.k1, o.b};
  bm25.validate();
  if (o.corpus.empty() && o.index.empty()) throw UsageError("distill needs --corpus or --index");

  const auto records = textio::load_teacher_records(o.teacher);
  const auto index = o.index.empty() ? sparse::Index::build(textio::load_jsonl_corpus(o.corpus))
                                     : sparse::Index::load(o.index);
  const auto data = distill::build_training_set(records, index, bm25);
  const auto result = distill::train(data, kind, tc);

  Outputs outputs;
  outputs.add(o.out, result.student.to_json() + "\n");
  outputs.commit();

  double agreement = 0.0;
  std::size_t counted = 0;
  for (const auto& q : data) {
    if (q.ranks.size() < 2) continue;
    std::vector<double> scores;
    for (const auto& f : q.features) scores.push_back(result.student.score(f));
    agreement += distill::pairwise_agreement(scores, q.ranks);
    ++counted;
  }
  out << "trained " << distill::loss_name(kind) << " on " << data.size() << " queries for " << o.epochs
      << " epochs -> " << o.out << "\n";
  if (!result.epoch_loss.empty()) {
    out << std::setprecision(6) << "loss first " << result.epoch_loss.front() << ", last "
        << result.epoch_loss.back() << "\n";
  }
  if (counted > 0) {
    out << std::fixed << std::setprecision(4) << "train pairwise agreement "
        << agreement / static_cast<double>(counted) << "\n";
  }
  return 0;
}

int cmd_gradcheck(const GradcheckOpts& o, std::ostream& out) {
  if (o.instances < 1) throw UsageError("--instances must be >= 1");
  if (!(o.tolerance > 0.0)) throw UsageError("--tolerance must be > 0");
  std::vector<distill::LossKind> kinds;
  if (o.loss == "all") {
    kinds.assign(distill::kAllLosses.begin(), distill::kAllLosses.end());
  } else {
    kinds.push_back(distill::parse_loss(o.loss));
  }
  bool ok = true;
  out << std::left << std::setw(12) << "loss" << std::setw(4) << "M" << "max_rel_error\n";
  for (auto kind : kinds) {
    for (std::size_t m : {2, 5, 20}) {
      double worst = 0.0;
      for (int i = 0; i < o.instances; ++i) {
        const auto inst = distill::random_instance(m, mix_seed(o.seed, std::to_string(m) + ":" + std::to_string(i)));
        worst = std::max(worst, distill::grad_check(kind, inst, o.epsilon));
      }
      const bool pass = worst < o.tolerance;
      ok = ok && pass;
      out << std::left << std::setw(12) << distill::loss_name(kind) << std::setw(4) << m << std::scientific
          << std::setprecision(3) << worst << (pass ? "" : "  FAIL") << "\n"
          << std::defaultfloat;
    }
  }
  if (!ok) throw DataError("gradient check exceeded tolerance");
  return 0;
}

int cmd_synth(const SynthOpts& o, std::ostream& out) {
  const fs::path dir(o.out_dir);
  if (!o.teacher) {
    synthetic::CollectionSpec spec;
    spec.passages = o.passages;
    spec.queries = o.queries;
    spec.vocabulary = o.vocabulary;
    spec.seed = o.seed;
    spec.validate();
    const auto c = synthetic::make_collection(spec);
    fs::create_directories(dir);
    textio::write_jsonl_corpus(c.corpus, dir / "corpus.jsonl");
    textio::write_queries_tsv(c.queries, dir / "queries.tsv");
    textio::write_qrels(c.qrels, dir / "qrels.txt");
    out << "wrote " << c.corpus.size() << " passages, " << c.queries.size() << " queries to " << dir.string()
        << "\n";
    return 0;
  }
  synthetic::TeacherSpec spec;
  spec.train_queries = o.train;
  spec.heldout_queries = o.heldout;
  spec.candidates = o.candidates;
  spec.seed = o.seed;
  const auto task = synthetic::make_teacher_task(spec);
  fs::create_directories(dir);
  textio::write_jsonl_corpus(task.collection.corpus, dir / "corpus.jsonl");
  textio::write_teacher_records(task.train, dir / "teacher.jsonl");
  textio::write_teacher_records(task.heldout, dir / "heldout-teacher.jsonl");
  textio::write_qrels(synthetic::teacher_judgments(task.heldout), dir / "heldout-qrels.txt");
  std::vector<Query> queries;
  std::vector<Ranking> run;
  for (const auto& r : task.heldout) {
    queries.push_back({r.query_id, r.query_text});
    run.push_back(Ranking::from_order(r.query_id, r.docids));
  }
  textio::write_queries_tsv(queries, dir / "heldout-queries.tsv");
  textio::write_run(run, "candidates", dir / "heldout-run.txt");
  out << "wrote teacher task (" << task.train.size() << " train, " << task.heldout.size() << " held-out) to "
      << dir.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"permurank: listwise LLM re-ranking, evaluation and distillation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  IndexOpts index_o;
  auto* index = app.add_subcommand("index", "Build a BM25 index from a JSONL corpus");
  index->add_option("--corpus", index_o.corpus, "JSONL corpus ({docid, text, title?})")->required();
  index->add_option("--out", index_o.out, "Index file to write")->required();

  RetrieveOpts ret_o;
  auto* retrieve = app.add_subcommand("retrieve", "BM25 first-stage retrieval to a TREC run");
  retrieve->add_option("--index", ret_o.index, "Index file")->required();
  retrieve->add_option("--queries", ret_o.queries, "Queries (TSV or JSONL)")->required();
  retrieve->add_option("--k", ret_o.k, "Candidates per query");
  retrieve->add_option("--k1", ret_o.k1, "BM25 k1");
  retrieve->add_option("--b", ret_o.b, "BM25 b");
  retrieve->add_option("--tag", ret_o.tag, "Run tag");
  retrieve->add_option("--out", ret_o.out, "Run file to write")->required();

  RerankOpts rr;
  auto* rerank = app.add_subcommand("rerank", "Re-rank a TREC run with a model or a trained student");
  rerank->add_option("--run", rr.run, "First-stage TREC run")->required();
  rerank->add_option("--corpus", rr.corpus, "JSONL corpus")->required();
  rerank->add_option("--queries", rr.queries, "Queries (TSV or JSONL)")->required();
  rerank->add_option("--method", rr.method, "pg-chat|pg-text|qg|rg-few|rg-zero|student")
      ->check(CLI::IsMember({"pg-chat", "pg-text", "qg", "rg-few", "rg-zero", "student"}));
  rerank->add_option("--window", rr.window, "Sliding window size");
  rerank->add_option("--step", rr.step, "Sliding window step (default: half the window)")->default_str("window/2");
  rerank->add_option("--passes", rr.passes, "Back-to-first passes");
  rerank->add_option("--initial-order", rr.initial_order, "as-retrieved|random|reversed")
      ->check(CLI::IsMember({"as-retrieved", "random", "reversed"}));
  rerank->add_option("--seed", rr.seed, "Seed for random initial order and injected faults");
  rerank->add_option("--top-k-only", rr.top_k_only, "Re-rank only the top N, keep the rest")->default_str("all");
  rerank->add_option("--endpoint", rr.endpoint, "OpenAI-compatible endpoint URL");
  rerank->add_option("--model", rr.model, "Model name sent to the endpoint");
  rerank->add_option("--max-retries", rr.max_retries, "Retries for 429/5xx/connection failures");
  rerank->add_option("--timeout-ms", rr.timeout_ms, "Per-request timeout in milliseconds");
  rerank->add_option("--mock-oracle", rr.mock_oracle, "Qrels file; use the offline oracle instead of an endpoint")
      ->default_str("none");
  rerank->add_option("--fault-dup", rr.fault_dup, "Mock oracle: per-identifier duplication probability");
  rerank->add_option("--fault-drop", rr.fault_drop, "Mock oracle: per-identifier drop probability");
  rerank->add_option("--fault-reject", rr.fault_reject, "Mock oracle: per-window rejection probability");
  rerank->add_option("--trace", rr.trace, "Write one JSONL record per window")->default_str("none");
  rerank->add_option("--request-log", rr.request_log, "Write one JSONL record per model request")
      ->default_str("none");
  rerank->add_option("--jobs", rr.jobs, "Queries re-ranked concurrently (also caps requests in flight)");
  rerank->add_option("--max-words", rr.max_words, "Passage truncation in words");
  rerank->add_option("--student", rr.student, "Student weights for --method student")->default_str("none");
  rerank->add_option("--index", rr.index, "Index for student features (default: built from --corpus)")
      ->default_str("none");
  rerank->add_option("--k1", rr.k1, "BM25 k1 for student features");
  rerank->add_option("--b", rr.b, "BM25 b for student features");
  rerank->add_option("--tag", rr.tag, "Run tag (default: the method name)")->default_str("method");
  rerank->add_option("--out", rr.out, "Run file to write")->required();

  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "nDCG@k of a run against qrels");
  eval->add_option("--run", ev.run, "TREC run")->required();
  eval->add_option("--qrels", ev.qrels, "TREC qrels")->required();
  eval->add_option("--k", ev.ks, "Comma-separated cutoffs")->delimiter(',')->default_str("1,5,10");
  eval->add_flag("--per-query", ev.per_query, "Also print one row per query");
  eval->add_flag("--json", ev.json, "Print JSON instead of a table");

  StabilityOpts st;
  auto* stability = app.add_subcommand("stability", "Behavior counters and RBO from a rerank trace");
  stability->add_option("--trace", st.trace, "Trace written by rerank --trace")->required();
  stability->add_flag("--json", st.json, "Print JSON instead of a table");

  DistillOpts di;
  auto* distill_cmd = app.add_subcommand("distill", "Train a linear student on teacher permutations");
  distill_cmd->add_option("--teacher", di.teacher, "Teacher JSONL ({qid, query, docids, permutation})")->required();
  distill_cmd->add_option("--corpus", di.corpus, "JSONL corpus (used to build the feature index)")
      ->default_str("none");
  distill_cmd->add_option("--index", di.index, "Prebuilt index (instead of --corpus)")->default_str("none");
  distill_cmd->add_option("--loss", di.loss, "ranknet|listwise-ce|lambda|bce")
      ->check(CLI::IsMember({"ranknet", "listwise-ce", "lambda", "bce"}));
  distill_cmd->add_option("--epochs", di.epochs, "Training epochs");
  distill_cmd->add_option("--lr", di.lr, "Learning rate");
  distill_cmd->add_option("--l2", di.l2, "L2 penalty on non-bias weights");
  distill_cmd->add_option("--seed", di.seed, "Shuffle seed");
  distill_cmd->add_option("--k1", di.k1, "BM25 k1 for features");
  distill_cmd->add_option("--b", di.b, "BM25 b for features");
  distill_cmd->add_option("--out", di.out, "Student JSON to write")->required();

  GradcheckOpts gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks for the losses");
  gradcheck->add_option("--loss", gc.loss, "all|ranknet|listwise-ce|lambda|bce")
      ->check(CLI::IsMember({"all", "ranknet", "listwise-ce", "lambda", "bce"}));
  gradcheck->add_option("--instances", gc.instances, "Random instances per loss and list size");
  gradcheck->add_option("--seed", gc.seed, "Instance seed");
  gradcheck->add_option("--epsilon", gc.epsilon, "Central-difference step");
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum accepted relative error");

  SynthOpts sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic collection or distillation task");
  synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  synth->add_option("--passages", sy.passages, "Passages (collection mode)");
  synth->add_option("--queries", sy.queries, "Queries (collection mode)");
  synth->add_option("--vocabulary", sy.vocabulary, "Vocabulary size (collection mode)");
  synth->add_option("--seed", sy.seed, "Generator seed");
  synth->add_flag("--teacher", sy.teacher, "Write a teacher task instead of a collection");
  synth->add_option("--train", sy.train, "Teacher mode: training queries");
  synth->add_option("--heldout", sy.heldout, "Teacher mode: held-out queries");
  synth->add_option("--candidates", sy.candidates, "Teacher mode: candidates per query");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*index) return cmd_index(index_o, out);
    if (*retrieve) return cmd_retrieve(ret_o, out);
    if (*rerank) return cmd_rerank(rr, *rerank, out);
    if (*eval) return cmd_eval(ev, out);
    if (*stability) return cmd_stability(st, out);
    if (*distill_cmd) return cmd_distill(di, out);
    if (*gradcheck) return cmd_gradcheck(gc, out);
    if (*synth) return cmd_synth(sy, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const GatewayError& e) {
    err << "gateway error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace permurank::cli
