#include "relation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "util.hpp"

namespace relpara::relation {

RelationMatrix RelationMatrix::zeros(std::size_t m) {
  const auto n = static_cast<Eigen::Index>(m);
  RelationMatrix r;
  r.values = Eigen::MatrixXd::Zero(n, n);
  r.frequency = Eigen::VectorXd::Zero(n);
  r.co_frequency = Eigen::MatrixXd::Zero(n, n);
  return r;
}

RelationMatrix build_relation_matrix(std::span<const std::vector<int>> label_sets) {
  require(!label_sets.empty(), ErrorKind::InvalidArgument, "build_relation_matrix: no label sets");
  const std::size_t m = label_sets.front().size();
  require(m >= 1, ErrorKind::InvalidArgument, "build_relation_matrix: label vectors are empty");
  RelationMatrix r = RelationMatrix::zeros(m);
  const auto n = static_cast<Eigen::Index>(m);

  std::vector<Eigen::Index> active;
  for (const auto& labels : label_sets) {
    require(labels.size() == m, ErrorKind::Dimension, "build_relation_matrix: label vectors differ in length");
    active.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      require(y == 0 || y == 1, ErrorKind::InvalidArgument, "build_relation_matrix: labels must be binary");
      if (y == 1) active.push_back(i);
    }
    for (Eigen::Index i : active) {
      r.frequency[i] += 1.0;
      for (Eigen::Index j : active) {
        if (i != j) r.co_frequency(i, j) += 1.0;
      }
    }
  }
  r.total = r.frequency.sum();

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double fij = r.co_frequency(i, j);
      const double fi = r.frequency[i];
      const double fj = r.frequency[j];
      double v = 0.0;
      if (fij > 0.0 && fi > 0.0 && fj > 0.0) v = std::max(std::log(fij * r.total / (fi * fj)), 0.0);
      r.values(i, j) = v;
      r.values(j, i) = v;
      if (v > 0.0) r.nonzero_count += 2;
    }
  }
  return r;
}

double constraint_loss(std::span<const double> a, const RelationMatrix& relation) {
  const auto n = relation.values.rows();
  require(static_cast<Eigen::Index>(a.size()) == n, ErrorKind::Dimension,
          "constraint_loss: " + std::to_string(a.size()) + " probabilities for a " + std::to_string(n) + "x" +
              std::to_string(n) + " relation matrix");
  if (relation.nonzero_count == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = a[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(j)];
      total += d * d * relation.values(i, j);
    }
  }
  return total / static_cast<double>(relation.nonzero_count);
}

std::vector<double> constraint_loss_gradient(std::span<const double> a, const RelationMatrix& relation) {
  const auto n = relation.values.rows();
  require(static_cast<Eigen::Index>(a.size()) == n, ErrorKind::Dimension, "constraint_loss_gradient: size mismatch");
  std::vector<double> grad(a.size(), 0.0);
  if (relation.nonzero_count == 0) return grad;
  const double inv = 1.0 / static_cast<double>(relation.nonzero_count);
  for (Eigen::Index k = 0; k < n; ++k) {
    double g = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = a[static_cast<std::size_t>(k)] - a[static_cast<std::size_t>(j)];
      g += 2.0 * d * (relation.values(k, j) + relation.values(j, k));
    }
    grad[static_cast<std::size_t>(k)] = g * inv;
  }
  return grad;
}

std::vector<RankedPair> top_pairs(const RelationMatrix& relation, std::size_t k) {
  std::vector<RankedPair> pairs;
  const auto n = relation.values.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (relation.values(i, j) > 0.0) pairs.push_back({static_cast<int>(i), static_cast<int>(j), relation.values(i, j)});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const RankedPair& a, const RankedPair& b) { return a.value > b.value; });
  if (pairs.size() > k) pairs.resize(k);
  return pairs;
}

std::string serialize(const RelationMatrix& relation) {
  const auto n = relation.values.rows();
  std::vector<double> freq(relation.frequency.data(), relation.frequency.data() + relation.frequency.size());
  std::vector<std::vector<double>> co(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) co[static_cast<std::size_t>(i)].push_back(relation.co_frequency(i, j));
  }
  nlohmann::ordered_json header{{"format", "relpara-relation-matrix"},
                                {"M", n},
                                {"R_star", relation.nonzero_count},
                                {"log_base", "e"},
                                {"F", relation.total},
                                {"frequency", freq},
                                {"co_frequency", co}};
  std::ostringstream os;
  os << header.dump() << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j) os << ' ';
      os << format_double(relation.values(i, j));
    }
    os << '\n';
  }
  return os.str();
}

RelationMatrix parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, "relation file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("relation header is not valid JSON: ") + e.what());
  }
  require(header.value("format", "") == "relpara-relation-matrix", ErrorKind::Format, "not a relation matrix file");
  require(header.value("log_base", "") == "e", ErrorKind::Format, "relation file uses an unsupported log base");
  const auto m = header.at("M").get<std::size_t>();
  RelationMatrix r = RelationMatrix::zeros(m);
  r.nonzero_count = header.at("R_star").get<long>();
  r.total = header.at("F").get<double>();
  const auto freq = header.at("frequency").get<std::vector<double>>();
  const auto co = header.at("co_frequency").get<std::vector<std::vector<double>>>();
  require(freq.size() == m && co.size() == m, ErrorKind::Format, "relation header counts do not match M");
  const auto n = static_cast<Eigen::Index>(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.frequency[i] = freq[static_cast<std::size_t>(i)];
    require(co[static_cast<std::size_t>(i)].size() == m, ErrorKind::Format, "relation co_frequency row has wrong length");
    for (Eigen::Index j = 0; j < n; ++j) r.co_frequency(i, j) = co[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format,
            "relation file ends after " + std::to_string(i) + " of " + std::to_string(m) + " rows");
    std::istringstream row(line);
    for (Eigen::Index j = 0; j < n; ++j) {
      std::string tok;
      require(static_cast<bool>(row >> tok), ErrorKind::Format, "relation row " + std::to_string(i) + " is short");
      try {
        r.values(i, j) = std::stod(tok);
      } catch (const std::exception&) {
        fail(ErrorKind::Format, "relation row " + std::to_string(i) + " has a malformed value '" + tok + "'");
      }
    }
  }
  long nonzero = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    require(r.values(i, i) == 0.0, ErrorKind::Format, "relation matrix has a nonzero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      require(r.values(i, j) >= 0.0 && r.values(i, j) == r.values(j, i), ErrorKind::Format,
              "relation matrix is not symmetric and nonnegative");
      if (i != j && r.values(i, j) > 0.0) ++nonzero;
    }
  }
  require(nonzero == r.nonzero_count, ErrorKind::Format, "relation header R_star disagrees with the matrix");
  return r;
}

void save(const RelationMatrix& relation, const std::filesystem::path& path) { write_file(path, serialize(relation)); }

RelationMatrix load(const std::filesystem::path& path) { return parse(read_file(path)); }

}  // namespace relpara::relation
