#pragma once

#include <string>
#include <vector>

#include "kqgc/graph.hpp"
#include "kqgc/transe.hpp"

namespace kqgc {

struct SyntheticSpec {
  Index num_users = 200;
  Index num_items = 400;
  Index num_attributes = 50;
  Index num_clusters = 5;
  double intra_cluster_purchase_prob = 0.05;
  double cross_cluster_purchase_prob = 0.005;
  Index attr_per_item = 2;
  double noise_std = 1.0;  // scale of the distractor noise in stand-in features
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split : std::uint8_t { Train, Validation, Test };

struct LabeledExample {
  Index user = 0;
  int label = 0;
  Split split = Split::Train;
};

struct LabeledDataset {
  std::string brand;
  std::vector<LabeledExample> examples;
};

// Relation ids emitted by generate_cluster_kg, in interning order.
inline constexpr Index kPurchaseRelation = 0;
inline constexpr Index kHasAttributeRelation = 1;
inline constexpr Index kUserAttributeRelation = 2;

struct ClusterBenchmark {
  KnowledgeGraph kg;
  std::vector<int> cluster_of_entity;  // users and items; attributes too
  std::vector<LabeledDataset> brands;  // one per cluster
};

// Planted-cluster user/item/attribute KG with one brand dataset per
// cluster. Entity layout: users [0, U), items [U, U+I), attributes
// [U+I, U+I+A). Purchase edges are Bernoulli draws with the intra/cross
// probabilities; attribute links mostly stay inside the cluster pool.
ClusterBenchmark generate_cluster_kg(const SyntheticSpec& spec);

struct TranslationFixture {
  KnowledgeGraph kg;
  EmbeddingTable planted;
};

// Entities placed on an integer lattice spanned by the relation vectors, so
// that every emitted triple satisfies e_h + e_r = e_t up to rounding when
// noise_std is 0. Triples are emitted by an L1-distance threshold chosen so
// that the mean out-degree lands in [2, 10]; noise perturbs the planted
// table after emission.
TranslationFixture generate_translation_kg(Index num_entities,
                                           Index num_relations, Index dim,
                                           double noise_std,
                                           std::uint64_t seed);

// Weakly informative per-user stand-in features: a noisy cluster indicator
// plus pure-noise distractor columns. Rows follow entity order for users.
Matrix baseline_features(const ClusterBenchmark& bench, Index num_users,
                         Index dim, std::uint64_t seed);

void write_labels(const std::vector<LabeledDataset>& brands,
                  const std::string& path);
std::vector<LabeledDataset> read_labels(const std::string& path);

void write_features(const Matrix& features, const std::string& path);
Matrix read_features(const std::string& path);

}  // namespace kqgc
