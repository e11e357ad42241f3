#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permurank/bm25.hpp"
#include "permurank/core.hpp"
#include "permurank/textio.hpp"

namespace permurank::distill {

inline constexpr std::size_t kFeatureCount = 6;
using FeatureVector = std::array<double, kFeatureCount>;

/// Feature order; the bias is always last and always 1.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "bm25_score", "term_overlap_count", "idf_weighted_overlap", "query_coverage_ratio", "passage_length_log", "bias"};

/// Lexical query-passage features. The passage must be indexed.
FeatureVector extract_features(const Query& query, const Passage& passage, const sparse::Index& index,
                               const sparse::Bm25Params& params);

struct PreferencePair {
  std::size_t preferred = 0;  // 0-based candidate index with the better teacher rank
  std::size_t other = 0;

  bool operator==(const PreferencePair&) const = default;
};

/// Every (i, j) with r_i < r_j, enumerated by teacher rank: M(M-1)/2 pairs.
std::vector<PreferencePair> extract_pairs(const TeacherPermutation& teacher);
std::vector<PreferencePair> extract_pairs(std::span<const int> ranks);

enum class LossKind { RankNet, ListwiseCE, LambdaLoss, PointwiseBCE };

std::string_view loss_name(LossKind kind);
/// Accepts ranknet, listwise-ce, lambda, bce.
LossKind parse_loss(std::string_view name);
inline constexpr std::array<LossKind, 4> kAllLosses = {LossKind::RankNet, LossKind::ListwiseCE,
                                                        LossKind::LambdaLoss, LossKind::PointwiseBCE};

struct LambdaConfig {
  /// Gain from teacher rank r and list size M. Default: M - r.
  std::function<double(int rank, int m)> gain = [](int rank, int m) { return static_cast<double>(m - rank); };
  /// Discount of a 1-indexed student position. Default: log2(1 + position).
  std::function<double(int position)> discount = [](int position) {
    return std::log2(1.0 + static_cast<double>(position));
  };
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d scores
};

/// Student positions (1-indexed) from scores: descending, ties by index.
std::vector<int> student_ranks(std::span<const double> scores);

/// Loss and exact gradient with respect to the scores. RankNet and
/// LambdaLoss sum over teacher-ordered pairs with the logistic term
/// log(1 + exp(-(s_i - s_j))); LambdaLoss weights each pair by
/// |G_i - G_j| * |1/D(pi_i) - 1/D(pi_j)| held constant and uses log2.
/// ListwiseCE is -log softmax at the teacher's top passage; PointwiseBCE
/// treats the teacher's top passage as the only positive.
LossResult loss_and_grad(LossKind kind, std::span<const double> scores, std::span<const int> teacher_ranks,
                         const LambdaConfig& lambda = {});
/// Same, with explicit student ranks for LambdaLoss.
LossResult loss_and_grad(LossKind kind, std::span<const double> scores, std::span<const int> teacher_ranks,
                         std::span<const int> student_positions, const LambdaConfig& lambda = {});

struct GradCheckInstance {
  std::vector<double> scores;
  std::vector<int> ranks;
};

/// Random scores ~ N(0, 1) and a random teacher permutation.
GradCheckInstance random_instance(std::size_t m, std::uint64_t seed);

/// Max over coordinates of |analytic - numeric| / max(1e-12, |analytic| + |numeric|),
/// numeric by central differences. LambdaLoss holds the student ranks of
/// the unperturbed scores fixed.
double grad_check(LossKind kind, const GradCheckInstance& instance, double epsilon = 1e-6);

struct LinearStudent {
  FeatureVector weights{};

  double score(const FeatureVector& features) const;
  std::string to_json() const;
  static LinearStudent from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static LinearStudent load(const std::filesystem::path& path);
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  std::uint64_t seed = 0;
  double l2 = 1e-4;

  void validate() const;
};

/// One query's training example: candidate features and teacher ranks.
struct TrainingQuery {
  std::string query_id;
  std::vector<FeatureVector> features;
  std::vector<int> ranks;
};

/// Features for every teacher record; records are processed in parallel.
std::vector<TrainingQuery> build_training_set(std::span<const textio::TeacherRecord> records,
                                              const sparse::Index& index, const sparse::Bm25Params& params);
/// Single-threaded reference for build_training_set.
std::vector<TrainingQuery> build_training_set_serial(std::span<const textio::TeacherRecord> records,
                                                     const sparse::Index& index, const sparse::Bm25Params& params);

struct TrainResult {
  LinearStudent student;
  std::vector<double> epoch_loss;  // mean per-query loss during each epoch
};

/// Per-query gradient descent over seeded shuffles of the queries.
///
/// Features are standardized with training-set statistics and each query's
/// loss is divided by its number of terms (pairs, M for BCE, 1 for listwise); the
/// returned weights are mapped back to raw feature space. Deterministic
/// given the data and config.
TrainResult train(std::span<const TrainingQuery> data, LossKind kind, const TrainConfig& config,
                  const LambdaConfig& lambda = {});

/// Scores candidates with the student; ties keep initial-rank order.
Ranking rank_with_student(const LinearStudent& student, const CandidateList& candidates, const sparse::Index& index,
                          const sparse::Bm25Params& params);

/// Fraction of teacher-ordered pairs whose student scores agree strictly.
double pairwise_agreement(std::span<const double> scores, std::span<const int> teacher_ranks);

}  // namespace permurank::distill
