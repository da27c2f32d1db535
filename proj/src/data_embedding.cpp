#include "trajattr/data_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "trajattr/error.hpp"

namespace trajattr {

std::string DataEmbedding::label() const {
  return complement_of ? fmt::format("complement:{}", *complement_of) : "original";
}

DataEmbedding data_embedding(const std::vector<Eigen::VectorXd>& embs, double normalizer,
                             double temperature) {
  if (!(normalizer > 0.0)) throw ContractViolation("normalizing factor M must be positive");
  if (!(temperature > 0.0)) throw ContractViolation("softmax temperature must be positive");
  if (embs.empty()) throw ContractViolation("data embedding needs at least one trajectory");
  const auto dim = embs.front().size();
  // Floating-point addition is not associative; summing in a canonical
  // order makes the result exactly independent of the input order.
  std::vector<const Eigen::VectorXd*> order;
  order.reserve(embs.size());
  for (const auto& e : embs) {
    if (e.size() != dim) throw ContractViolation("trajectory embeddings differ in dimension");
    order.push_back(&e);
  }
  std::sort(order.begin(), order.end(), [](const Eigen::VectorXd* a, const Eigen::VectorXd* b) {
    return std::lexicographical_compare(a->begin(), a->end(), b->begin(), b->end());
  });
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto* e : order) sum += *e;
  const Eigen::ArrayXd logits = (sum / normalizer / temperature).array();
  const Eigen::ArrayXd ex = (logits - logits.maxCoeff()).exp();
  return {(ex / ex.sum()).matrix(), std::nullopt};
}

DataEmbedding data_embedding(const std::vector<TrajectoryEmbedding>& embs, double normalizer,
                             double temperature) {
  std::vector<Eigen::VectorXd> vecs;
  vecs.reserve(embs.size());
  for (const auto& e : embs) vecs.push_back(e.vector);
  return data_embedding(vecs, normalizer, temperature);
}

double wasserstein_simplex(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) {
    throw ContractViolation(fmt::format("simplex dimensions differ: {} vs {}", p.size(), q.size()));
  }
  double cdf_gap = 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j + 1 < p.size(); ++j) {
    cdf_gap += p[j] - q[j];
    total += std::abs(cdf_gap);
  }
  return total;
}

double wasserstein_simplex(const DataEmbedding& p, const DataEmbedding& q) {
  return wasserstein_simplex(p.probs, q.probs);
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ContractViolation("simplex dimensions differ");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double simplex_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q, SimplexDistance kind) {
  return kind == SimplexDistance::Wasserstein ? wasserstein_simplex(p, q) : total_variation(p, q);
}

NormalizedDistances normalize_distances(const std::vector<std::pair<int, double>>& distances) {
  double max = 0.0;
  for (const auto& [id, d] : distances) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw ContractViolation(fmt::format("distance for cluster {} is not a finite non-negative number", id));
    }
    max = std::max(max, d);
  }
  NormalizedDistances out;
  out.all_zero = max == 0.0;
  for (const auto& [id, d] : distances) out.values.emplace_back(id, out.all_zero ? 0.0 : d / max);
  return out;
}

void write_data_embeddings_csv(const std::vector<DataEmbedding>& embs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto dim = embs.empty() ? 0 : embs.front().probs.size();
  out << "source";
  for (Eigen::Index j = 0; j < dim; ++j) out << ",p" << j;
  out << '\n';
  for (const auto& e : embs) {
    out << e.label();
    for (Eigen::Index j = 0; j < e.probs.size(); ++j) out << fmt::format(",{}", e.probs[j]);
    out << '\n';
  }
}

std::vector<DataEmbedding> read_data_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<DataEmbedding> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    DataEmbedding e;
    if (cell.rfind("complement:", 0) == 0) {
      e.complement_of = std::stoi(cell.substr(11));
    } else if (cell != "original") {
      throw SchemaError(fmt::format("{} line {}: unknown source '{}'", path, lineno, cell));
    }
    std::vector<double> vals;
    try {
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw SchemaError(fmt::format("{} line {}: non-numeric probability", path, lineno));
    }
    e.probs = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace trajattr
