#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace relpara::relation {

// Clamped log co-occurrence relevance between abnormality pairs. Counts are
// kept alongside the matrix so every entry can be audited.
struct RelationMatrix {
  Eigen::MatrixXd values;          // M x M, symmetric, zero diagonal, >= 0
  long nonzero_count = 0;          // ordered off-diagonal pairs with r > 0
  Eigen::VectorXd frequency;       // f(i): samples with abnormality i
  Eigen::MatrixXd co_frequency;    // f(i, j): samples with both
  double total = 0.0;              // F = sum_i f(i)

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  static RelationMatrix zeros(std::size_t m);
};

// r(i, j) = max(log(f(i,j) F / (f(i) f(j))), 0), natural log; zero when any
// count vanishes and on the diagonal.
RelationMatrix build_relation_matrix(std::span<const std::vector<int>> label_sets);

// (1 / R*) sum_i sum_j (a_i - a_j)^2 r(i, j); zero when R* = 0.
double constraint_loss(std::span<const double> probabilities, const RelationMatrix& relation);
std::vector<double> constraint_loss_gradient(std::span<const double> probabilities, const RelationMatrix& relation);

struct RankedPair {
  int i = 0;
  int j = 0;
  double value = 0.0;
};

// Unordered pairs (i < j) by decreasing relevance, ties by index.
std::vector<RankedPair> top_pairs(const RelationMatrix& relation, std::size_t k);

// Text file: one JSON header line {format, M, R_star, log_base, F, frequency},
// then M rows of M space-separated values in shortest round-trip form.
std::string serialize(const RelationMatrix& relation);
RelationMatrix parse(std::string_view text);
void save(const RelationMatrix& relation, const std::filesystem::path& path);
RelationMatrix load(const std::filesystem::path& path);

}  // namespace relpara::relation
