#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "kqgc/layer.hpp"
#include "kqgc/transe.hpp"

namespace kqgc {

struct PrResult {
  double pr_auc = 0.0;
  Index num_positives = 0;
  Index num_total = 0;
  // (recall, precision) at each positive hit in the descending-score sweep.
  std::vector<std::pair<double, double>> curve;
};

// Average precision over the descending-score ranking. Ties are broken by
// stable input order after a deterministic fixed-seed shuffle.
PrResult pr_auc(const std::vector<double>& scores,
                const std::vector<int>& labels);

struct ClassifierConfig {
  double l2 = 1e-4;
  Index iterations = 500;
  double learning_rate = 0.1;
};

struct LinearClassifier {
  Vector weights;
  double bias = 0.0;

  double score(const Vector& x) const;  // sigmoid probability
};

// L2-regularized logistic regression by full-batch gradient descent,
// deterministic zero initialization.
LinearClassifier train_linear_classifier(const Matrix& features,
                                         const std::vector<int>& labels,
                                         const ClassifierConfig& cfg);

struct RankResult {
  double hits_at_k = 0.0;
  double mean_rank = 0.0;
};

// Filtered tail ranking: for each held-out triple, rank the true tail among
// all entities by ascending L1 score, removing other known true tails.
RankResult link_rank_eval(const EmbeddingTable& emb,
                          const std::vector<Triple>& held_out, Index k,
                          const std::vector<Triple>& known_triples);

struct SmoothingReport {
  double query_dist_raw = 0.0;   // mean L1 |(h_src + h_r) - h_dst| as-is
  double query_dist_norm = 0.0;  // same on unit-normalized entity rows
  double mean_cosine = 0.0;      // mean cos(h_src, h_dst) over forward edges
};

SmoothingReport smoothing_report(const KnowledgeGraph& kg,
                                 const LayerState& state);

// loss_eval returns (loss, analytic gradient) at a parameter vector.
using LossEval = std::function<std::pair<double, Vector>(const Vector&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index checked = 0;
  Index skipped = 0;  // coordinates rejected as kinks
};

// Central differences per coordinate against the analytic gradient.
// Relative error is |analytic - numeric| / max(1, |numeric|). A coordinate
// is skipped as a kink when the half-step and full-step central estimates
// disagree, which happens exactly when a hinge or L1 sign flips inside the
// probe interval.
GradCheckResult grad_check(const LossEval& loss_eval, const Vector& point,
                           double step, double tol);

}  // namespace kqgc
