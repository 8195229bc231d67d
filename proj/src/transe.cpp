#include "kqgc/transe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace kqgc {

void TrainConfig::validate() const {
  if (margin <= 0) throw std::invalid_argument("margin must be > 0");
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (neg_ratio < 1) throw std::invalid_argument("neg_ratio must be >= 1");
  if (fanout < 1) throw std::invalid_argument("fanout must be >= 1");
}

double score_triple(const EmbeddingTable& emb, const Triple& t) {
  if (t.head < 0 || t.head >= emb.entities.rows() || t.tail < 0 ||
      t.tail >= emb.entities.rows() || t.relation < 0 ||
      t.relation >= emb.relations.rows()) {
    throw std::out_of_range("score_triple: triple index out of range");
  }
  return (emb.entities.row(t.head) + emb.relations.row(t.relation) -
          emb.entities.row(t.tail))
      .cwiseAbs()
      .sum();
}

Triple corrupt_triple(const Triple& t, Rng& rng, Index num_entities) {
  if (num_entities < 2) {
    throw std::invalid_argument("corrupt_triple: need at least 2 entities");
  }
  Triple out = t;
  std::uniform_int_distribution<int> coin(0, 1);
  const bool corrupt_head = coin(rng) == 0;
  const Index keep = corrupt_head ? t.head : t.tail;
  // Draw from the n-1 entities other than the original at this slot.
  std::uniform_int_distribution<Index> pick(0, num_entities - 2);
  Index e = pick(rng);
  if (e >= keep) ++e;
  (corrupt_head ? out.head : out.tail) = e;
  return out;
}

namespace {

// sign with sign(0) = 0, applied elementwise
inline Vector l1_sign(const Vector& v) {
  return v.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

struct GradAccum {
  std::map<std::pair<bool, Index>, Vector> rows;  // (is_relation, row) -> grad
  Index dim;

  void add(bool relation, Index row, const Vector& g) {
    auto [it, inserted] = rows.try_emplace({relation, row}, g);
    if (!inserted) it->second += g;
  }
};

}  // namespace

std::pair<double, std::vector<RowGrad>> kge_loss_and_grad(
    const EmbeddingTable& emb, const std::vector<Triple>& pos,
    const std::vector<Triple>& neg, double margin) {
  if (pos.empty()) {
    if (!neg.empty()) {
      throw std::invalid_argument("kge_loss_and_grad: negatives without positives");
    }
    return {0.0, {}};
  }
  if (neg.size() % pos.size() != 0) {
    throw std::invalid_argument(
        "kge_loss_and_grad: |neg| must be a multiple of |pos|");
  }
  const std::size_t ratio = neg.size() / pos.size();
  double loss = 0.0;
  GradAccum acc{{}, emb.dim};

  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Triple& p = pos[i];
    const Vector dp = (emb.entities.row(p.head) + emb.relations.row(p.relation) -
                       emb.entities.row(p.tail))
                          .transpose();
    const double fp = dp.cwiseAbs().sum();
    for (std::size_t j = 0; j < ratio; ++j) {
      const Triple& n = neg[i * ratio + j];
      const Vector dn =
          (emb.entities.row(n.head) + emb.relations.row(n.relation) -
           emb.entities.row(n.tail))
              .transpose();
      const double fn = dn.cwiseAbs().sum();
      const double hinge = margin + fp - fn;
      if (hinge <= 0) continue;
      loss += hinge;
      const Vector sp = l1_sign(dp);
      const Vector sn = l1_sign(dn);
      acc.add(false, p.head, sp);
      acc.add(true, p.relation, sp);
      acc.add(false, p.tail, -sp);
      acc.add(false, n.head, -sn);
      acc.add(true, n.relation, -sn);
      acc.add(false, n.tail, sn);
    }
  }

  std::vector<RowGrad> grads;
  grads.reserve(acc.rows.size());
  for (auto& [key, g] : acc.rows) {
    grads.push_back({key.second, key.first, std::move(g)});
  }
  return {loss, std::move(grads)};
}

void normalize_entities(EmbeddingTable& emb) {
  for (Index i = 0; i < emb.entities.rows(); ++i) {
    const double norm = emb.entities.row(i).norm();
    if (norm == 0.0) {
      emb.entities.row(i).setZero();
      emb.entities(i, 0) = 1.0;
    } else {
      emb.entities.row(i) /= norm;
    }
  }
}

EmbeddingTable init_embeddings(Index num_entities, Index num_relations,
                               Index dim, Rng& rng) {
  EmbeddingTable emb;
  emb.dim = dim;
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uni(-bound, bound);
  emb.entities.resize(num_entities, dim);
  emb.relations.resize(num_relations, dim);
  for (Index i = 0; i < num_entities; ++i)
    for (Index d = 0; d < dim; ++d) emb.entities(i, d) = uni(rng);
  for (Index i = 0; i < num_relations; ++i)
    for (Index d = 0; d < dim; ++d) emb.relations(i, d) = uni(rng);
  normalize_entities(emb);
  return emb;
}

namespace {
EmbeddingTable train_kge_loop(const KnowledgeGraph& kg, const TrainConfig& cfg,
                              EmbeddingTable emb, Index start_epoch, Rng rng,
                              const EpochCallback& on_epoch);
}  // namespace

EmbeddingTable train_kge(const KnowledgeGraph& kg, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  if (kg.triples.empty()) throw std::invalid_argument("train_kge: empty KG");
  Rng rng(cfg.seed);
  EmbeddingTable emb =
      init_embeddings(kg.num_entities, kg.num_relations, cfg.dim, rng);
  return train_kge_loop(kg, cfg, std::move(emb), 0, std::move(rng), on_epoch);
}

EmbeddingTable train_kge_from(const KnowledgeGraph& kg, const TrainConfig& cfg,
                              EmbeddingTable initial, Index start_epoch,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (kg.triples.empty()) throw std::invalid_argument("train_kge: empty KG");
  // Offset the stream so a resumed run does not replay epoch-1 draws.
  Rng rng(cfg.seed + 0x100000001ULL * static_cast<std::uint64_t>(start_epoch));
  return train_kge_loop(kg, cfg, std::move(initial), start_epoch,
                        std::move(rng), on_epoch);
}

namespace {

EmbeddingTable train_kge_loop(const KnowledgeGraph& kg, const TrainConfig& cfg,
                              EmbeddingTable emb, Index start_epoch, Rng rng,
                              const EpochCallback& on_epoch) {
  std::vector<std::size_t> order(kg.triples.size());
  std::iota(order.begin(), order.end(), 0);

  for (Index epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Triple> pos, neg;
      pos.reserve(end - start);
      neg.reserve((end - start) * static_cast<std::size_t>(cfg.neg_ratio));
      for (std::size_t i = start; i < end; ++i) {
        const Triple& t = kg.triples[order[i]];
        pos.push_back(t);
        for (Index j = 0; j < cfg.neg_ratio; ++j) {
          neg.push_back(corrupt_triple(t, rng, kg.num_entities));
        }
      }
      auto [loss, grads] = kge_loss_and_grad(emb, pos, neg, cfg.margin);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_kge: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch starting " +
                                 std::to_string(start));
      }
      epoch_loss += loss;
      for (const RowGrad& g : grads) {
        if (g.relation) {
          emb.relations.row(g.row) -= cfg.learning_rate * g.grad.transpose();
        } else {
          emb.entities.row(g.row) -= cfg.learning_rate * g.grad.transpose();
        }
      }
      if (cfg.normalize_entities) normalize_entities(emb);
    }
    if (on_epoch.fn) {
      on_epoch.fn(epoch, epoch_loss / static_cast<double>(kg.triples.size()),
                  emb);
    }
  }
  return emb;
}

}  // namespace

}  // namespace kqgc
