#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "kqgc/graph.hpp"

namespace kqgc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EmbeddingTable {
  Index dim = 0;
  Matrix entities;   // N x H
  Matrix relations;  // R x H
};

struct TrainConfig {
  Index epochs = 10000;
  Index batch_size = 10000;
  double learning_rate = 0.001;
  double margin = 1.0;
  Index neg_ratio = 1;
  Index dim = 100;
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;  // 0 = no intermediate snapshots
  bool normalize_entities = true;
  Index fanout = 10;  // neighbor sampling fan-out (convolution stage only)

  void validate() const;
};

// L1 translation score |e_h + e_r - e_t|_1. Lower is a better fit.
double score_triple(const EmbeddingTable& emb, const Triple& t);

// Replaces head or tail (side chosen uniformly) by a uniform random entity
// different from the original at that slot. Relation is kept.
Triple corrupt_triple(const Triple& t, Rng& rng, Index num_entities);

// Sparse per-row gradient accumulator: (row index, is_relation, grad).
struct RowGrad {
  Index row;
  bool relation;
  Vector grad;
};

// Margin ranking loss over aligned positive/negative batches with exact L1
// subgradients (sign(0) = 0). Returns the summed loss and one RowGrad per
// touched row (rows merged, deterministic order).
std::pair<double, std::vector<RowGrad>> kge_loss_and_grad(
    const EmbeddingTable& emb, const std::vector<Triple>& pos,
    const std::vector<Triple>& neg, double margin);

// Rescales every entity row to unit L2 norm; zero rows become e1. Relation
// rows are left untouched.
void normalize_entities(EmbeddingTable& emb);

EmbeddingTable init_embeddings(Index num_entities, Index num_relations,
                               Index dim, Rng& rng);

struct EpochCallback {
  // Called after each epoch with (epoch, mean loss, table). Return value
  // ignored; used for checkpointing and logging.
  std::function<void(Index, double, const EmbeddingTable&)> fn;
};

// Minibatch SGD over shuffled triples with neg_ratio fresh negatives per
// positive each epoch. Deterministic for a fixed seed.
EmbeddingTable train_kge(const KnowledgeGraph& kg, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

// Resume variant: continues from an existing table at start_epoch+1 and
// keeps the epoch numbering.
EmbeddingTable train_kge_from(const KnowledgeGraph& kg, const TrainConfig& cfg,
                              EmbeddingTable initial, Index start_epoch,
                              const EpochCallback& on_epoch = {});

}  // namespace kqgc
