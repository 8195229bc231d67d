#include "kqgc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace kqgc {

PrResult pr_auc(const std::vector<double>& scores,
                const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("pr_auc: length mismatch");
  }
  const Index total = std::ssize(scores);
  const Index positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0) throw std::invalid_argument("pr_auc: no positives");

  // Fixed-seed shuffle, then a stable sort: tie order is deterministic and
  // independent of the caller's input order quirks.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  PrResult result;
  result.num_positives = positives;
  result.num_total = total;
  Index seen_pos = 0;
  double ap = 0.0;
  for (Index rank = 1; rank <= total; ++rank) {
    if (labels[order[static_cast<std::size_t>(rank - 1)]] == 1) {
      ++seen_pos;
      const double precision =
          static_cast<double>(seen_pos) / static_cast<double>(rank);
      const double recall =
          static_cast<double>(seen_pos) / static_cast<double>(positives);
      ap += precision;
      result.curve.emplace_back(recall, precision);
    }
  }
  result.pr_auc = ap / static_cast<double>(positives);
  return result;
}

double LinearClassifier::score(const Vector& x) const {
  return 1.0 / (1.0 + std::exp(-(weights.dot(x) + bias)));
}

LinearClassifier train_linear_classifier(const Matrix& features,
                                         const std::vector<int>& labels,
                                         const ClassifierConfig& cfg) {
  if (features.rows() != std::ssize(labels)) {
    throw std::invalid_argument("train_linear_classifier: length mismatch");
  }
  const Index m = features.rows();
  const Index d = features.cols();
  LinearClassifier clf;
  clf.weights = Vector::Zero(d);
  clf.bias = 0.0;

  Vector y(m);
  for (Index i = 0; i < m; ++i) y(i) = labels[static_cast<std::size_t>(i)];

  for (Index iter = 0; iter < cfg.iterations; ++iter) {
    const Vector z = features * clf.weights + Vector::Constant(m, clf.bias);
    const Vector p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Vector err = p - y;
    const Vector gw =
        features.transpose() * err / static_cast<double>(m) + cfg.l2 * clf.weights;
    const double gb = err.sum() / static_cast<double>(m);
    if (!gw.allFinite()) {
      throw std::runtime_error("train_linear_classifier: non-finite gradient");
    }
    clf.weights -= cfg.learning_rate * gw;
    clf.bias -= cfg.learning_rate * gb;
  }
  return clf;
}

RankResult link_rank_eval(const EmbeddingTable& emb,
                          const std::vector<Triple>& held_out, Index k,
                          const std::vector<Triple>& known_triples) {
  std::set<Triple> known(known_triples.begin(), known_triples.end());
  RankResult out;
  if (held_out.empty()) return out;

  double rank_sum = 0.0;
  Index hits = 0;
  for (const Triple& t : held_out) {
    const Vector q = (emb.entities.row(t.head) + emb.relations.row(t.relation))
                         .transpose();
    const double true_score =
        (q - emb.entities.row(t.tail).transpose()).cwiseAbs().sum();
    Index rank = 1;
    for (Index e = 0; e < emb.entities.rows(); ++e) {
      if (e == t.tail) continue;
      if (known.contains({t.head, t.relation, e})) continue;  // filtered
      const double s = (q - emb.entities.row(e).transpose()).cwiseAbs().sum();
      if (s < true_score) ++rank;
    }
    rank_sum += static_cast<double>(rank);
    if (rank <= k) ++hits;
  }
  out.mean_rank = rank_sum / static_cast<double>(held_out.size());
  out.hits_at_k =
      static_cast<double>(hits) / static_cast<double>(held_out.size());
  return out;
}

SmoothingReport smoothing_report(const KnowledgeGraph& kg,
                                 const LayerState& state) {
  SmoothingReport rep;
  if (kg.triples.empty()) return rep;

  Matrix unit = state.node_h;
  for (Index i = 0; i < unit.rows(); ++i) {
    const double n = unit.row(i).norm();
    if (n > 0) unit.row(i) /= n;
  }

  double raw = 0.0, norm = 0.0, cosine = 0.0;
  for (const Triple& t : kg.triples) {
    raw += (state.node_h.row(t.head) + state.rel_h.row(t.relation) -
            state.node_h.row(t.tail))
               .cwiseAbs()
               .sum();
    norm += (unit.row(t.head) + state.rel_h.row(t.relation) -
             unit.row(t.tail))
                .cwiseAbs()
                .sum();
    const double nh = state.node_h.row(t.head).norm();
    const double nt = state.node_h.row(t.tail).norm();
    if (nh > 0 && nt > 0) {
      cosine += state.node_h.row(t.head).dot(state.node_h.row(t.tail)) / (nh * nt);
    }
  }
  const double count = static_cast<double>(kg.triples.size());
  rep.query_dist_raw = raw / count;
  rep.query_dist_norm = norm / count;
  rep.mean_cosine = cosine / count;
  return rep;
}

GradCheckResult grad_check(const LossEval& loss_eval, const Vector& point,
                           double step, double tol) {
  if (step <= 0) throw std::invalid_argument("grad_check: step must be > 0");
  const auto [loss0, analytic] = loss_eval(point);
  (void)loss0;

  GradCheckResult res;
  for (Index i = 0; i < point.size(); ++i) {
    Vector x = point;
    auto probe = [&](double h) {
      x(i) = point(i) + h;
      const double fp = loss_eval(x).first;
      x(i) = point(i) - h;
      const double fm = loss_eval(x).first;
      x(i) = point(i);
      return (fp - fm) / (2.0 * h);
    };
    const double full = probe(step);
    const double half = probe(step / 2.0);
    // A hinge or L1 kink inside the probe interval makes the two central
    // estimates disagree at leading order; smooth coordinates agree to
    // O(step^2).
    const double consistency =
        std::abs(full - half) / std::max(1.0, std::abs(half));
    if (consistency > 10.0 * tol) {
      ++res.skipped;
      continue;
    }
    ++res.checked;
    const double rel =
        std::abs(analytic(i) - half) / std::max(1.0, std::abs(half));
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  return res;
}

}  // namespace kqgc
