#include "kqgc/layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kqgc {

void KqgcParams::validate(Index input_dim) const {
  Index dim = input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerParams& lp = layers[l];
    if (lp.W.cols() != dim) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  ": W has " + std::to_string(lp.W.cols()) +
                                  " cols, expected " + std::to_string(dim));
    }
    if (lp.b.size() != lp.W.rows()) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  ": b size does not match W rows");
    }
    if (lp.aggregator == Aggregator::AttnLearned && lp.a.size() != 2 * dim) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  ": attention vector must have size 2*H_in");
    }
    dim = lp.W.rows();
  }
}

Index KqgcParams::output_dim(Index input_dim) const {
  return layers.empty() ? input_dim : layers.back().W.rows();
}

Vector knowledge_query(const LayerState& state, const MessageEdge& edge) {
  const double sign = edge.direction == EdgeDirection::Forward ? 1.0 : -1.0;
  return state.node_h.row(edge.source).transpose() +
         sign * state.rel_h.row(edge.relation).transpose();
}

Vector aggregate_mean(const std::vector<Vector>& queries, Index dim) {
  Vector m = Vector::Zero(dim);
  if (queries.empty()) return m;
  // Accumulate coefficient-times-query in input order so that attention with
  // exactly uniform coefficients reproduces this bit-for-bit.
  const double w = 1.0 / static_cast<double>(queries.size());
  for (const Vector& q : queries) m += w * q;
  return m;
}

namespace {

double leaky_relu(double x, double slope) { return x >= 0 ? x : slope * x; }

struct AttnScores {
  std::vector<double> raw;      // e_i
  std::vector<double> pre_act;  // z_i, attn_learned only
  std::vector<double> alpha;
  bool guard = false;
};

AttnScores attention_scores(const std::vector<Vector>& queries,
                            const Vector& h_v, Aggregator mode,
                            const Vector& a, double leaky_slope,
                            bool softmax) {
  AttnScores out;
  const std::size_t k = queries.size();
  out.raw.resize(k);
  out.alpha.resize(k);
  if (mode == Aggregator::AttnDot) {
    for (std::size_t i = 0; i < k; ++i) out.raw[i] = queries[i].dot(h_v);
  } else {
    const Index h = h_v.size();
    out.pre_act.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double z = a.head(h).dot(queries[i]) + a.tail(h).dot(h_v);
      out.pre_act[i] = z;
      out.raw[i] = leaky_relu(z, leaky_slope);
    }
  }
  if (softmax) {
    const double mx = *std::max_element(out.raw.begin(), out.raw.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      out.alpha[i] = std::exp(out.raw[i] - mx);
      sum += out.alpha[i];
    }
    for (double& v : out.alpha) v /= sum;
    return out;
  }
  const double sum = std::accumulate(out.raw.begin(), out.raw.end(), 0.0);
  if (std::abs(sum) < kAttentionGuard) {
    out.guard = true;
    std::fill(out.alpha.begin(), out.alpha.end(), 1.0 / static_cast<double>(k));
  } else {
    for (std::size_t i = 0; i < k; ++i) out.alpha[i] = out.raw[i] / sum;
  }
  return out;
}

}  // namespace

std::vector<double> attention_coefficients(const std::vector<Vector>& queries,
                                           const Vector& h_v, Aggregator mode,
                                           const Vector& a, double leaky_slope,
                                           bool softmax) {
  if (queries.empty()) {
    throw std::invalid_argument("attention_coefficients: empty neighborhood");
  }
  if (mode == Aggregator::Mean) {
    throw std::invalid_argument("attention_coefficients: mean has no scores");
  }
  return attention_scores(queries, h_v, mode, a, leaky_slope, softmax).alpha;
}

Vector aggregate_attention(const std::vector<Vector>& queries,
                           const std::vector<double>& coefficients) {
  if (queries.size() != coefficients.size()) {
    throw std::invalid_argument("aggregate_attention: length mismatch");
  }
  if (queries.empty()) {
    throw std::invalid_argument("aggregate_attention: empty neighborhood");
  }
  Vector m = Vector::Zero(queries.front().size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    m += coefficients[i] * queries[i];
  }
  return m;
}

Vector update_node(const Vector& h_v, const Vector& m, const Matrix& W,
                   const Vector& b) {
  if (h_v.size() != W.cols() || m.size() != W.cols() || b.size() != W.rows()) {
    throw std::invalid_argument("update_node: shape mismatch");
  }
  return W * (h_v + m) + b;
}

Matrix update_relations(const Matrix& rel_h, const Matrix& W, const Vector& b) {
  if (rel_h.cols() != W.cols() || b.size() != W.rows()) {
    throw std::invalid_argument("update_relations: shape mismatch");
  }
  return ((rel_h * W.transpose()).rowwise() + b.transpose()).eval();
}

LayerState forward(const KnowledgeGraph& kg, const LayerState& state0,
                   const KqgcParams& params,
                   std::optional<SamplingSpec> sampling, ForwardTape* tape) {
  if (!kg.has_message_graph() && kg.num_entities > 0) {
    throw std::invalid_argument("forward: message graph not built");
  }
  params.validate(state0.node_h.cols());
  if (tape) tape->layers.clear();

  LayerState state = state0;
  const Index n = kg.num_entities;
  for (const LayerParams& lp : params.layers) {
    const Index h_in = lp.W.cols();
    const Index h_out = lp.W.rows();
    LayerTape lt;
    if (tape) {
      lt.input = state;
      lt.edges.resize(static_cast<std::size_t>(n));
      lt.message.resize(static_cast<std::size_t>(n));
      lt.alpha.resize(static_cast<std::size_t>(n));
      lt.raw_score.resize(static_cast<std::size_t>(n));
      lt.pre_act.resize(static_cast<std::size_t>(n));
      lt.guard.assign(static_cast<std::size_t>(n), false);
    }

    LayerState next;
    next.node_h.resize(n, h_out);
    next.rel_h = update_relations(state.rel_h, lp.W, lp.b);

    for (Index v = 0; v < n; ++v) {
      std::vector<MessageEdge> edges =
          sampling ? neighbor_sample(kg, v, sampling->fanout, *sampling->rng)
                   : kg.incoming[static_cast<std::size_t>(v)];
      std::vector<Vector> queries;
      queries.reserve(edges.size());
      for (const MessageEdge& e : edges) {
        queries.push_back(knowledge_query(state, e));
      }

      Vector m;
      if (queries.empty() || lp.aggregator == Aggregator::Mean) {
        m = aggregate_mean(queries, h_in);
      } else {
        AttnScores sc = attention_scores(
            queries, state.node_h.row(v).transpose(), lp.aggregator, lp.a,
            lp.leaky_slope, lp.softmax_attention);
        m = aggregate_attention(queries, sc.alpha);
        if (tape) {
          auto vi = static_cast<std::size_t>(v);
          lt.alpha[vi] = std::move(sc.alpha);
          lt.raw_score[vi] = std::move(sc.raw);
          lt.pre_act[vi] = std::move(sc.pre_act);
          lt.guard[vi] = sc.guard;
        }
      }
      next.node_h.row(v) =
          (lp.W * (state.node_h.row(v).transpose() + m) + lp.b).transpose();
      if (tape) {
        auto vi = static_cast<std::size_t>(v);
        lt.edges[vi] = std::move(edges);
        lt.message[vi] = std::move(m);
      }
    }
    if (tape) tape->layers.push_back(std::move(lt));
    state = std::move(next);
  }
  return state;
}

LayerState state_from_embeddings(const EmbeddingTable& emb) {
  return {emb.entities, emb.relations};
}

EmbeddingTable embeddings_from_state(const LayerState& state) {
  EmbeddingTable emb;
  emb.dim = state.node_h.cols();
  emb.entities = state.node_h;
  emb.relations = state.rel_h;
  return emb;
}

std::pair<Index, Index> sample_negative_pair(std::pair<Index, Index> pos,
                                             Rng& rng,
                                             const std::vector<Index>& item_pool) {
  if (item_pool.size() < 2) {
    throw std::invalid_argument("sample_negative_pair: item pool too small");
  }
  const auto it = std::find(item_pool.begin(), item_pool.end(), pos.second);
  const auto skip =
      it == item_pool.end() ? std::ssize(item_pool) : it - item_pool.begin();
  const Index span = it == item_pool.end() ? std::ssize(item_pool)
                                           : std::ssize(item_pool) - 1;
  std::uniform_int_distribution<Index> pick(0, span - 1);
  Index j = pick(rng);
  if (j >= skip) ++j;
  return {pos.first, item_pool[static_cast<std::size_t>(j)]};
}

namespace {

inline Vector l1_sign(const Vector& v) {
  return v.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

// One layer of reverse-mode: consumes gradients w.r.t. the layer output and
// produces gradients w.r.t. the layer input plus parameter gradients.
void backward_layer(const LayerParams& lp, const LayerTape& lt,
                    const Matrix& g_node, const Matrix& g_rel,
                    LayerGrad& grad, Matrix& g_in_node, Matrix& g_in_rel) {
  const Index n = g_node.rows();
  const Index h_in = lp.W.cols();

  Matrix node_plus_m = lt.input.node_h;
  for (Index v = 0; v < n; ++v) {
    node_plus_m.row(v) += lt.message[static_cast<std::size_t>(v)].transpose();
  }

  grad.dW += g_node.transpose() * node_plus_m + g_rel.transpose() * lt.input.rel_h;
  grad.db += g_node.colwise().sum().transpose() + g_rel.colwise().sum().transpose();

  g_in_node = g_node * lp.W;  // row v = W^T g_v
  g_in_rel = g_rel * lp.W;

  for (Index v = 0; v < n; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    const auto& edges = lt.edges[vi];
    const std::size_t k = edges.size();
    if (k == 0) continue;
    const Vector c = (g_node.row(v) * lp.W).transpose();  // dL/dm_v

    std::vector<Vector> queries(k);
    for (std::size_t i = 0; i < k; ++i) {
      queries[i] = knowledge_query(lt.input, edges[i]);
    }

    std::vector<Vector> dq(k, Vector::Zero(h_in));
    if (lp.aggregator == Aggregator::Mean || lt.guard[vi]) {
      const double inv_k = 1.0 / static_cast<double>(k);
      for (std::size_t i = 0; i < k; ++i) dq[i] = inv_k * c;
    } else {
      const auto& alpha = lt.alpha[vi];
      std::vector<double> p(k);
      double alpha_dot_p = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        p[i] = c.dot(queries[i]);
        alpha_dot_p += alpha[i] * p[i];
      }
      std::vector<double> de(k);
      if (lp.softmax_attention) {
        for (std::size_t i = 0; i < k; ++i) {
          de[i] = alpha[i] * (p[i] - alpha_dot_p);
        }
      } else {
        const double sum =
            std::accumulate(lt.raw_score[vi].begin(), lt.raw_score[vi].end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
          de[i] = (p[i] - alpha_dot_p) / sum;
        }
      }
      const Vector h_v = lt.input.node_h.row(v).transpose();
      for (std::size_t i = 0; i < k; ++i) {
        dq[i] = alpha[i] * c;
        if (lp.aggregator == Aggregator::AttnDot) {
          dq[i] += de[i] * h_v;
          g_in_node.row(v) += de[i] * queries[i].transpose();
        } else {
          const double act =
              lt.pre_act[vi][i] >= 0 ? 1.0 : lp.leaky_slope;
          const double dz = de[i] * act;
          grad.da.head(h_in) += dz * queries[i];
          grad.da.tail(h_in) += dz * h_v;
          dq[i] += dz * lp.a.head(h_in);
          g_in_node.row(v) += dz * lp.a.tail(h_in).transpose();
        }
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      const MessageEdge& e = edges[i];
      const double sign = e.direction == EdgeDirection::Forward ? 1.0 : -1.0;
      g_in_node.row(e.source) += dq[i].transpose();
      g_in_rel.row(e.relation) += sign * dq[i].transpose();
    }
  }
}

}  // namespace

std::pair<double, KqgcGrads> cf_loss_and_grad(
    const KnowledgeGraph& kg, const LayerState& state0,
    const KqgcParams& params,
    const std::vector<std::pair<Index, Index>>& pos,
    const std::vector<std::pair<Index, Index>>& neg, Index purchase_rel,
    double margin, std::optional<SamplingSpec> sampling) {
  if (pos.empty() || neg.size() % pos.size() != 0) {
    throw std::invalid_argument("cf_loss_and_grad: batch length mismatch");
  }
  const std::size_t ratio = neg.size() / pos.size();

  ForwardTape tape;
  const LayerState out = forward(kg, state0, params, sampling, &tape);

  double loss = 0.0;
  Matrix g_node = Matrix::Zero(out.node_h.rows(), out.node_h.cols());
  Matrix g_rel = Matrix::Zero(out.rel_h.rows(), out.rel_h.cols());
  const auto rel_p = out.rel_h.row(purchase_rel);

  for (std::size_t i = 0; i < pos.size(); ++i) {
    const auto [u, item] = pos[i];
    const Vector dp =
        (out.node_h.row(u) + rel_p - out.node_h.row(item)).transpose();
    const double fp = dp.cwiseAbs().sum();
    for (std::size_t j = 0; j < ratio; ++j) {
      const auto [u2, item_neg] = neg[i * ratio + j];
      const Vector dn =
          (out.node_h.row(u2) + rel_p - out.node_h.row(item_neg)).transpose();
      const double fn = dn.cwiseAbs().sum();
      const double hinge = margin + fp - fn;
      if (hinge <= 0) continue;
      loss += hinge;
      const Vector sp = l1_sign(dp);
      const Vector sn = l1_sign(dn);
      g_node.row(u) += sp.transpose();
      g_rel.row(purchase_rel) += sp.transpose();
      g_node.row(item) -= sp.transpose();
      g_node.row(u2) -= sn.transpose();
      g_rel.row(purchase_rel) -= sn.transpose();
      g_node.row(item_neg) += sn.transpose();
    }
  }
  if (!std::isfinite(loss)) {
    throw std::runtime_error("cf_loss_and_grad: non-finite loss");
  }

  KqgcGrads grads;
  grads.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& lp = params.layers[l];
    grads.layers[l].dW = Matrix::Zero(lp.W.rows(), lp.W.cols());
    grads.layers[l].db = Vector::Zero(lp.b.size());
    grads.layers[l].da = Vector::Zero(lp.a.size());
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    Matrix g_in_node, g_in_rel;
    backward_layer(params.layers[l], tape.layers[l], g_node, g_rel,
                   grads.layers[l], g_in_node, g_in_rel);
    g_node = std::move(g_in_node);
    g_rel = std::move(g_in_rel);
  }
  // g_node / g_rel now hold gradients w.r.t. the frozen input; dropped.
  return {loss, std::move(grads)};
}

KqgcParams init_kqgc_params(Index layers, Index dim, Aggregator agg, Rng& rng) {
  KqgcParams params;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double std_w = std::sqrt(2.0 / static_cast<double>(dim + dim));
  for (Index l = 0; l < layers; ++l) {
    LayerParams lp;
    lp.aggregator = agg;
    lp.W.resize(dim, dim);
    for (Index i = 0; i < dim; ++i)
      for (Index j = 0; j < dim; ++j) lp.W(i, j) = std_w * normal(rng);
    lp.b.resize(dim);
    for (Index i = 0; i < dim; ++i) lp.b(i) = std_w * normal(rng);
    if (agg == Aggregator::AttnLearned) {
      lp.a.resize(2 * dim);
      const double std_a = std::sqrt(2.0 / static_cast<double>(2 * dim));
      for (Index i = 0; i < 2 * dim; ++i) lp.a(i) = std_a * normal(rng);
    }
    params.layers.push_back(std::move(lp));
  }
  return params;
}

PairDataset pairs_from_kg(const KnowledgeGraph& kg, Index purchase_rel) {
  PairDataset pairs;
  pairs.purchase_relation = purchase_rel;
  for (const Triple& t : kg.triples) {
    if (t.relation == purchase_rel) {
      pairs.positives.emplace_back(t.head, t.tail);
    }
  }
  return pairs;
}

KqgcTrainResult train_kqgc(const KnowledgeGraph& kg,
                           const EmbeddingTable& pretrained,
                           const PairDataset& pairs, KqgcParams params0,
                           const TrainConfig& cfg,
                           const std::function<void(Index, double)>& on_epoch) {
  cfg.validate();
  const LayerState state0 = state_from_embeddings(pretrained);
  params0.validate(state0.node_h.cols());

  std::vector<Index> item_pool;
  for (const auto& [u, it] : pairs.positives) item_pool.push_back(it);
  std::sort(item_pool.begin(), item_pool.end());
  item_pool.erase(std::unique(item_pool.begin(), item_pool.end()),
                  item_pool.end());

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(pairs.positives.size());
  std::iota(order.begin(), order.end(), 0);

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::pair<Index, Index>> pos, neg;
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = pairs.positives[order[i]];
        pos.push_back(p);
        for (Index j = 0; j < cfg.neg_ratio; ++j) {
          neg.push_back(sample_negative_pair(p, rng, item_pool));
        }
      }
      SamplingSpec sampling{cfg.fanout, &rng};
      auto [loss, grads] =
          cf_loss_and_grad(kg, state0, params0, pos, neg,
                           pairs.purchase_relation, cfg.margin, sampling);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_kqgc: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      epoch_loss += loss;
      for (std::size_t l = 0; l < params0.layers.size(); ++l) {
        params0.layers[l].W -= cfg.learning_rate * grads.layers[l].dW;
        params0.layers[l].b -= cfg.learning_rate * grads.layers[l].db;
        if (params0.layers[l].a.size() > 0) {
          params0.layers[l].a -= cfg.learning_rate * grads.layers[l].da;
        }
      }
    }
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  KqgcTrainResult result;
  result.final_state = forward(kg, state0, params0, std::nullopt);
  result.params = std::move(params0);
  return result;
}

}  // namespace kqgc
