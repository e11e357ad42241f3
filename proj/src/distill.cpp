#include "permurank/distill.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "permurank/error.hpp"
#include "permurank/random.hpp"

namespace permurank::distill {

namespace {

// log(1 + exp(z)) without overflow.
long double softplus(long double z) { return std::max(z, 0.0L) + std::log1p(std::exp(-std::abs(z))); }

// 1 / (1 + exp(-z)) without overflow.
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr long double kLn2 = 0.693147180559945309417232121458176568L;

void check_inputs(LossKind kind, std::span<const double> scores, std::span<const int> ranks) {
  if (scores.size() != ranks.size()) {
    throw std::invalid_argument("loss: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(ranks.size()) + " teacher ranks");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("loss: scores must be finite");
  }
  if (!is_rank_permutation(ranks)) throw std::invalid_argument("loss: teacher ranks are not a permutation of 1..M");
  const bool pairwise = kind == LossKind::RankNet || kind == LossKind::LambdaLoss;
  if (pairwise && ranks.size() < 2) throw std::invalid_argument("loss: pairwise losses need M >= 2");
  if (!pairwise && ranks.empty()) throw std::invalid_argument("loss: no passage has teacher rank 1");
}

std::size_t top_index(std::span<const int> ranks) {
  return static_cast<std::size_t>(std::find(ranks.begin(), ranks.end(), 1) - ranks.begin());
}

}  // namespace

FeatureVector extract_features(const Query& query, const Passage& passage, const sparse::Index& index,
                               const sparse::Bm25Params& params) {
  const std::uint32_t doc = index.ordinal(passage.docid);
  const auto terms = sparse::query_terms(query.text);
  double overlap = 0.0;
  double idf_overlap = 0.0;
  for (const auto& t : terms) {
    if (index.term_frequency(t, doc) > 0) {
      overlap += 1.0;
      idf_overlap += index.idf(t);
    }
  }
  const double coverage = terms.empty() ? 0.0 : overlap / static_cast<double>(terms.size());
  const double length_log = std::log1p(static_cast<double>(index.doc_lengths()[doc]));
  return {sparse::bm25_score(index, params, query.text, passage.docid), overlap, idf_overlap, coverage, length_log,
          1.0};
}

std::vector<PreferencePair> extract_pairs(std::span<const int> ranks) {
  if (!is_rank_permutation(ranks)) throw DataError("teacher ranks are not a permutation of 1..M");
  std::vector<std::size_t> by_rank(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) by_rank[ranks[i] - 1] = i;
  std::vector<PreferencePair> out;
  out.reserve(ranks.size() * (ranks.size() - (ranks.empty() ? 0 : 1)) / 2);
  for (std::size_t a = 0; a < by_rank.size(); ++a) {
    for (std::size_t b = a + 1; b < by_rank.size(); ++b) out.push_back({by_rank[a], by_rank[b]});
  }
  return out;
}

std::vector<PreferencePair> extract_pairs(const TeacherPermutation& teacher) { return extract_pairs(teacher.ranks()); }

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::RankNet: return "ranknet";
    case LossKind::ListwiseCE: return "listwise-ce";
    case LossKind::LambdaLoss: return "lambda";
    case LossKind::PointwiseBCE: return "bce";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (auto kind : kAllLosses) {
    if (loss_name(kind) == name) return kind;
  }
  throw UsageError("unknown loss '" + std::string(name) + "' (expected ranknet, listwise-ce, lambda or bce)");
}

std::vector<int> student_ranks(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> positions(scores.size());
  for (std::size_t p = 0; p < order.size(); ++p) positions[order[p]] = static_cast<int>(p) + 1;
  return positions;
}

LossResult loss_and_grad(LossKind kind, std::span<const double> scores, std::span<const int> teacher_ranks,
                         const LambdaConfig& lambda) {
  if (kind == LossKind::LambdaLoss) {
    const auto positions = student_ranks(scores);
    return loss_and_grad(kind, scores, teacher_ranks, positions, lambda);
  }
  return loss_and_grad(kind, scores, teacher_ranks, {}, lambda);
}

namespace {

// Loss in extended precision (finite differences subtract two nearly equal
// values) plus the gradient in double.
long double compute_loss(LossKind kind, std::span<const double> scores, std::span<const int> teacher_ranks,
                         std::span<const int> student_positions, const LambdaConfig& lambda, LossResult& out) {
  check_inputs(kind, scores, teacher_ranks);
  const std::size_t m = scores.size();
  out.grad.assign(m, 0.0);
  long double loss = 0.0L;

  switch (kind) {
    case LossKind::RankNet: {
      for (const auto& [i, j] : extract_pairs(teacher_ranks)) {
        const long double xl = static_cast<long double>(scores[i]) - scores[j];
        loss += softplus(-xl);
        const double g = sigmoid(-static_cast<double>(xl));
        out.grad[i] -= g;
        out.grad[j] += g;
      }
      break;
    }
    case LossKind::ListwiseCE: {
      const std::size_t top = top_index(teacher_ranks);
      const long double hi = *std::max_element(scores.begin(), scores.end());
      long double z = 0.0L;
      for (double s : scores) z += std::exp(s - hi);
      const long double log_z = hi + std::log(z);
      loss = log_z - scores[top];
      for (std::size_t i = 0; i < m; ++i) out.grad[i] = static_cast<double>(std::exp(scores[i] - log_z));
      out.grad[top] -= 1.0;
      break;
    }
    case LossKind::LambdaLoss: {
      if (student_positions.size() != m || !is_rank_permutation(student_positions)) {
        throw std::invalid_argument("loss: LambdaLoss needs student positions forming a permutation of 1..M");
      }
      const int mm = static_cast<int>(m);
      std::vector<double> gain(m);
      std::vector<double> inv_discount(m);
      for (std::size_t i = 0; i < m; ++i) {
        gain[i] = lambda.gain(teacher_ranks[i], mm);
        const double d = lambda.discount(student_positions[i]);
        if (!(d > 0.0)) throw std::invalid_argument("loss: LambdaLoss discount must be positive");
        inv_discount[i] = 1.0 / d;
      }
      for (const auto& [i, j] : extract_pairs(teacher_ranks)) {
        const double delta = std::abs(gain[i] - gain[j]) * std::abs(inv_discount[i] - inv_discount[j]);
        if (delta == 0.0) continue;
        const long double xl = static_cast<long double>(scores[i]) - scores[j];
        loss += delta * softplus(-xl) / kLn2;
        const double g = static_cast<double>(delta * sigmoid(-static_cast<double>(xl)) / kLn2);
        out.grad[i] -= g;
        out.grad[j] += g;
      }
      break;
    }
    case LossKind::PointwiseBCE: {
      for (std::size_t i = 0; i < m; ++i) {
        const bool positive = teacher_ranks[i] == 1;
        const long double sl = scores[i];
        loss += positive ? softplus(-sl) : softplus(sl);
        out.grad[i] = sigmoid(scores[i]) - (positive ? 1.0 : 0.0);
      }
      break;
    }
  }
  return loss;
}

}  // namespace

LossResult loss_and_grad(LossKind kind, std::span<const double> scores, std::span<const int> teacher_ranks,
                         std::span<const int> student_positions, const LambdaConfig& lambda) {
  LossResult out;
  out.loss = static_cast<double>(compute_loss(kind, scores, teacher_ranks, student_positions, lambda, out));
  return out;
}

GradCheckInstance random_instance(std::size_t m, std::uint64_t seed) {
  SplitMix64 rng(seed);
  GradCheckInstance inst;
  inst.scores.resize(m);
  for (auto& s : inst.scores) s = rng.normal();
  inst.ranks.resize(m);
  std::iota(inst.ranks.begin(), inst.ranks.end(), 1);
  shuffle(std::span<int>(inst.ranks), rng);
  return inst;
}

double grad_check(LossKind kind, const GradCheckInstance& instance, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) throw std::invalid_argument("grad_check: epsilon must be in (0, 1e-3]");
  std::vector<int> positions;
  if (kind == LossKind::LambdaLoss) positions = student_ranks(instance.scores);
  const auto analytic = loss_and_grad(kind, instance.scores, instance.ranks, positions);
  std::vector<double> probe = instance.scores;
  LossResult scratch;
  const LambdaConfig lambda;
  double worst = 0.0;
  for (std::size_t c = 0; c < probe.size(); ++c) {
    const double original = probe[c];
    const double hi = original + epsilon;
    const double lo = original - epsilon;
    probe[c] = hi;
    const long double up = compute_loss(kind, probe, instance.ranks, positions, lambda, scratch);
    probe[c] = lo;
    const long double down = compute_loss(kind, probe, instance.ranks, positions, lambda, scratch);
    probe[c] = original;
    // Divide by the step actually taken after rounding.
    const double numeric = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
    const double a = analytic.grad[c];
    const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

double LinearStudent::score(const FeatureVector& features) const {
  double s = 0.0;
  for (std::size_t f = 0; f < kFeatureCount; ++f) s += weights[f] * features[f];
  return s;
}

std::string LinearStudent::to_json() const {
  nlohmann::ordered_json root;
  root["weights"] = weights;
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  root["feature_names"] = names;
  return root.dump(2);
}

LinearStudent LinearStudent::from_json(std::string_view text) {
  LinearStudent student;
  try {
    const auto root = nlohmann::json::parse(text);
    const auto weights = root.at("weights").get<std::vector<double>>();
    const auto names = root.at("feature_names").get<std::vector<std::string>>();
    if (weights.size() != kFeatureCount || names.size() != kFeatureCount) {
      throw DataError("student must have " + std::to_string(kFeatureCount) + " weights and feature names");
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (names[f] != kFeatureNames[f]) {
        throw DataError("student feature " + std::to_string(f) + " is '" + names[f] + "', expected '" +
                        std::string(kFeatureNames[f]) + "'");
      }
      if (!std::isfinite(weights[f])) throw DataError("student weights must be finite");
      student.weights[f] = weights[f];
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed student: ") + e.what());
  }
  return student;
}

void LinearStudent::save(const std::filesystem::path& path) const {
  textio::AtomicFile file(path);
  file.stream() << to_json() << '\n';
  file.commit();
}

LinearStudent LinearStudent::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open student " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be >= 0");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(l2 >= 0.0)) throw UsageError("l2 must be >= 0");
}

namespace {

TrainingQuery make_training_query(const textio::TeacherRecord& record, const sparse::Index& index,
                                  const sparse::Bm25Params& params) {
  const Query query{record.query_id, record.query_text};
  TrainingQuery tq;
  tq.query_id = record.query_id;
  tq.ranks = record.to_permutation().ranks();
  tq.features.reserve(record.docids.size());
  for (const auto& docid : record.docids) {
    if (!index.contains(docid)) {
      throw DataError("teacher record '" + record.query_id + "' references unknown docid '" + docid + "'");
    }
    const Passage& p = index.passages()[index.ordinal(docid)];
    tq.features.push_back(extract_features(query, p, index, params));
  }
  return tq;
}

}  // namespace

std::vector<TrainingQuery> build_training_set(std::span<const textio::TeacherRecord> records,
                                              const sparse::Index& index, const sparse::Bm25Params& params) {
  std::vector<TrainingQuery> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = make_training_query(records[i], index, params);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<TrainingQuery> build_training_set_serial(std::span<const textio::TeacherRecord> records,
                                                     const sparse::Index& index, const sparse::Bm25Params& params) {
  std::vector<TrainingQuery> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_training_query(r, index, params));
  return out;
}

TrainResult train(std::span<const TrainingQuery> data, LossKind kind, const TrainConfig& config,
                  const LambdaConfig& lambda) {
  config.validate();
  if (data.empty()) throw DataError("cannot train on an empty teacher dataset");
  constexpr std::size_t kBias = kFeatureCount - 1;

  // Standardization statistics over every candidate.
  FeatureVector mean{};
  FeatureVector stddev{};
  std::size_t rows = 0;
  for (const auto& q : data) {
    if (q.features.size() != q.ranks.size()) throw DataError("query '" + q.query_id + "': feature/rank mismatch");
    for (const auto& x : q.features) {
      for (std::size_t f = 0; f < kBias; ++f) mean[f] += x[f];
      ++rows;
    }
  }
  if (rows == 0) throw DataError("teacher dataset has no candidates");
  for (std::size_t f = 0; f < kBias; ++f) mean[f] /= static_cast<double>(rows);
  for (const auto& q : data) {
    for (const auto& x : q.features) {
      for (std::size_t f = 0; f < kBias; ++f) stddev[f] += (x[f] - mean[f]) * (x[f] - mean[f]);
    }
  }
  for (std::size_t f = 0; f < kBias; ++f) {
    stddev[f] = std::sqrt(stddev[f] / static_cast<double>(rows));
    if (!(stddev[f] > 1e-12)) stddev[f] = 1.0;
  }
  mean[kBias] = 0.0;
  stddev[kBias] = 1.0;

  const bool pairwise = kind == LossKind::RankNet || kind == LossKind::LambdaLoss;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].ranks.size() >= (pairwise ? 2u : 1u)) usable.push_back(i);
  }
  if (usable.empty()) throw DataError("no teacher record has enough candidates for this loss");

  FeatureVector w{};
  TrainResult result;
  SplitMix64 rng(config.seed);
  std::vector<FeatureVector> z;
  std::vector<double> scores;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(usable), rng);
    double epoch_loss = 0.0;
    for (std::size_t qi : usable) {
      const auto& q = data[qi];
      const std::size_t m = q.features.size();
      z.resize(m);
      scores.resize(m);
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t f = 0; f < kFeatureCount; ++f) z[j][f] = (q.features[j][f] - mean[f]) / stddev[f];
        double s = 0.0;
        for (std::size_t f = 0; f < kFeatureCount; ++f) s += w[f] * z[j][f];
        scores[j] = s;
      }
      const auto lr = loss_and_grad(kind, scores, q.ranks, lambda);
      double terms = static_cast<double>(m);
      if (pairwise) terms = static_cast<double>(m * (m - 1) / 2);
      if (kind == LossKind::ListwiseCE) terms = 1.0;
      epoch_loss += lr.loss / terms;
      FeatureVector gw{};
      for (std::size_t j = 0; j < m; ++j) {
        const double g = lr.grad[j] / terms;
        for (std::size_t f = 0; f < kFeatureCount; ++f) gw[f] += g * z[j][f];
      }
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        if (f != kBias) gw[f] += config.l2 * w[f];
        w[f] -= config.learning_rate * gw[f];
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(usable.size()));
  }

  // Back to raw feature space: w_f / sd_f, bias absorbs the centering.
  double bias = w[kBias];
  for (std::size_t f = 0; f < kBias; ++f) {
    result.student.weights[f] = w[f] / stddev[f];
    bias -= w[f] * mean[f] / stddev[f];
  }
  result.student.weights[kBias] = bias;
  return result;
}

Ranking rank_with_student(const LinearStudent& student, const CandidateList& candidates, const sparse::Index& index,
                          const sparse::Bm25Params& params) {
  std::vector<std::string> ids;
  std::vector<double> scores;
  ids.reserve(candidates.size());
  scores.reserve(candidates.size());
  for (const auto& c : candidates.candidates()) {
    ids.push_back(c.passage.docid);
    scores.push_back(student.score(extract_features(candidates.query(), c.passage, index, params)));
  }
  return Ranking::from_scores(candidates.query().id, ids, scores);
}

double pairwise_agreement(std::span<const double> scores, std::span<const int> teacher_ranks) {
  const auto pairs = extract_pairs(teacher_ranks);
  if (pairs.empty()) return 1.0;
  std::size_t agree = 0;
  for (const auto& [i, j] : pairs) agree += scores[i] > scores[j] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

}  // namespace permurank::distill
