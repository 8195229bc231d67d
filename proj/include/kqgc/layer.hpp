#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "kqgc/graph.hpp"
#include "kqgc/transe.hpp"

namespace kqgc {

enum class Aggregator : std::uint8_t { Mean, AttnDot, AttnLearned };

struct LayerParams {
  Matrix W;  // H_out x H_in
  Vector b;  // H_out
  Aggregator aggregator = Aggregator::Mean;
  Vector a;  // 2*H_in, used only by AttnLearned
  double leaky_slope = 0.01;
  // Replaces the raw-score ratio normalization with softmax. Off by default;
  // the ratio form is the reference behavior.
  bool softmax_attention = false;
};

struct KqgcParams {
  std::vector<LayerParams> layers;

  void validate(Index input_dim) const;
  Index output_dim(Index input_dim) const;
};

struct LayerState {
  Matrix node_h;  // N x H
  Matrix rel_h;   // R x H
};

struct PairDataset {
  std::vector<std::pair<Index, Index>> positives;  // (user, item)
  Index purchase_relation = 0;
};

// Raw attention score sum below this magnitude triggers the uniform
// fallback instead of the e_i / sum(e_k) ratio.
inline constexpr double kAttentionGuard = 1e-8;

// h_src + h_r for forward edges, h_src - h_r for reverse edges.
Vector knowledge_query(const LayerState& state, const MessageEdge& edge);

// Elementwise mean; empty input yields the zero vector of the given dim.
Vector aggregate_mean(const std::vector<Vector>& queries, Index dim);

// Raw scores per the chosen mode, normalized by their plain sum (ratio, not
// softmax, unless softmax is requested). Falls back to uniform weights when
// the score sum is within kAttentionGuard of zero. Throws on empty input.
std::vector<double> attention_coefficients(const std::vector<Vector>& queries,
                                           const Vector& h_v, Aggregator mode,
                                           const Vector& a, double leaky_slope,
                                           bool softmax = false);

Vector aggregate_attention(const std::vector<Vector>& queries,
                           const std::vector<double>& coefficients);

// W * (h_v + m) + b. Strictly linear.
Vector update_node(const Vector& h_v, const Vector& m, const Matrix& W,
                   const Vector& b);

// Row-wise W * r + b with the same W, b as the node update.
Matrix update_relations(const Matrix& rel_h, const Matrix& W, const Vector& b);

struct SamplingSpec {
  Index fanout = 10;
  Rng* rng = nullptr;
};

// Per-layer intermediates recorded by forward for the backward pass.
struct LayerTape {
  LayerState input;
  std::vector<std::vector<MessageEdge>> edges;  // per node, as aggregated
  std::vector<Vector> message;                  // per node, m_v
  // Attention-only caches, empty for mean.
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> raw_score;
  std::vector<std::vector<double>> pre_act;  // attn_learned z_i
  std::vector<bool> guard;                   // uniform fallback taken
};

struct ForwardTape {
  std::vector<LayerTape> layers;
};

// Multi-layer forward pass. With sampling set, each node's neighborhood is
// subsampled via neighbor_sample; otherwise the full incoming lists are used.
LayerState forward(const KnowledgeGraph& kg, const LayerState& state0,
                   const KqgcParams& params,
                   std::optional<SamplingSpec> sampling = std::nullopt,
                   ForwardTape* tape = nullptr);

LayerState state_from_embeddings(const EmbeddingTable& emb);
EmbeddingTable embeddings_from_state(const LayerState& state);

// Replaces the item of a positive pair with a different uniform draw from
// the item pool.
std::pair<Index, Index> sample_negative_pair(std::pair<Index, Index> pos,
                                             Rng& rng,
                                             const std::vector<Index>& item_pool);

struct LayerGrad {
  Matrix dW;
  Vector db;
  Vector da;
};

struct KqgcGrads {
  std::vector<LayerGrad> layers;
};

// Margin ranking loss over user-item pairs scored with the L1 translation
// distance on the convolved state. Gradients are taken with respect to the
// layer parameters only; the input embeddings stay frozen.
std::pair<double, KqgcGrads> cf_loss_and_grad(
    const KnowledgeGraph& kg, const LayerState& state0,
    const KqgcParams& params,
    const std::vector<std::pair<Index, Index>>& pos,
    const std::vector<std::pair<Index, Index>>& neg, Index purchase_rel,
    double margin, std::optional<SamplingSpec> sampling = std::nullopt);

// Xavier-normal initialization for every layer parameter.
KqgcParams init_kqgc_params(Index layers, Index dim, Aggregator agg, Rng& rng);

struct KqgcTrainResult {
  KqgcParams params;
  LayerState final_state;  // full-neighborhood forward after training
};

KqgcTrainResult train_kqgc(const KnowledgeGraph& kg,
                           const EmbeddingTable& pretrained,
                           const PairDataset& pairs, KqgcParams params0,
                           const TrainConfig& cfg,
                           const std::function<void(Index, double)>& on_epoch = {});

// Extracts the (user, item) positives of the given relation from the KG.
PairDataset pairs_from_kg(const KnowledgeGraph& kg, Index purchase_rel);

}  // namespace kqgc
