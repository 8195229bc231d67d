#include "kqgc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kqgc {

void SyntheticSpec::validate() const {
  if (num_users < 1 || num_items < 1 || num_attributes < 1 || num_clusters < 1) {
    throw std::invalid_argument("synthetic spec: counts must be >= 1");
  }
  if (intra_cluster_purchase_prob <= cross_cluster_purchase_prob) {
    throw std::invalid_argument(
        "synthetic spec: intra_cluster_purchase_prob must exceed "
        "cross_cluster_purchase_prob");
  }
  if (intra_cluster_purchase_prob > 1.0 || cross_cluster_purchase_prob < 0.0) {
    throw std::invalid_argument("synthetic spec: probabilities must be in [0,1]");
  }
  if (attr_per_item > num_attributes) {
    throw std::invalid_argument(
        "synthetic spec: attr_per_item exceeds num_attributes");
  }
  if (num_clusters > num_users || num_clusters > num_items ||
      num_clusters > num_attributes) {
    throw std::invalid_argument("synthetic spec: more clusters than entities");
  }
}

namespace {

// k distinct draws from pool, without replacement
std::vector<Index> draw_distinct(const std::vector<Index>& pool, Index k,
                                 Rng& rng) {
  std::vector<Index> tmp = pool;
  std::vector<Index> out;
  for (Index i = 0; i < k && !tmp.empty(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, tmp.size() - 1);
    const std::size_t j = pick(rng);
    out.push_back(tmp[j]);
    tmp.erase(tmp.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

}  // namespace

ClusterBenchmark generate_cluster_kg(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const Index users = spec.num_users;
  const Index items = spec.num_items;
  const Index attrs = spec.num_attributes;
  const Index c = spec.num_clusters;

  ClusterBenchmark bench;
  KnowledgeGraph& kg = bench.kg;
  kg.num_entities = users + items + attrs;
  kg.num_relations = 3;
  kg.entity_kind.resize(static_cast<std::size_t>(kg.num_entities));
  bench.cluster_of_entity.resize(static_cast<std::size_t>(kg.num_entities));

  auto cluster_of = [c](Index i) { return static_cast<int>(i % c); };
  for (Index u = 0; u < users; ++u) {
    kg.entity_kind[static_cast<std::size_t>(u)] = EntityKind::User;
    bench.cluster_of_entity[static_cast<std::size_t>(u)] = cluster_of(u);
  }
  for (Index i = 0; i < items; ++i) {
    kg.entity_kind[static_cast<std::size_t>(users + i)] = EntityKind::Item;
    bench.cluster_of_entity[static_cast<std::size_t>(users + i)] = cluster_of(i);
  }
  std::vector<std::vector<Index>> attr_pool(static_cast<std::size_t>(c));
  for (Index a = 0; a < attrs; ++a) {
    kg.entity_kind[static_cast<std::size_t>(users + items + a)] =
        EntityKind::Attribute;
    bench.cluster_of_entity[static_cast<std::size_t>(users + items + a)] =
        cluster_of(a);
    attr_pool[static_cast<std::size_t>(cluster_of(a))].push_back(
        users + items + a);
  }

  std::uniform_real_distribution<double> coin(0.0, 1.0);

  // Purchase edges.
  for (Index u = 0; u < users; ++u) {
    for (Index i = 0; i < items; ++i) {
      const double p = cluster_of(u) == cluster_of(i)
                           ? spec.intra_cluster_purchase_prob
                           : spec.cross_cluster_purchase_prob;
      if (coin(rng) < p) {
        kg.triples.push_back({u, kPurchaseRelation, users + i});
      }
    }
  }

  // Attribute links, mostly from the entity's own cluster pool.
  auto link_attrs = [&](Index entity, int cluster, Index relation) {
    std::set<Index> chosen;
    for (Index t = 0; t < spec.attr_per_item; ++t) {
      const bool own = coin(rng) < 0.9;
      const auto& pool = own ? attr_pool[static_cast<std::size_t>(cluster)]
                             : attr_pool[static_cast<std::size_t>(
                                   std::uniform_int_distribution<int>(
                                       0, static_cast<int>(c) - 1)(rng))];
      if (pool.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      chosen.insert(pool[pick(rng)]);
    }
    for (Index a : chosen) kg.triples.push_back({entity, relation, a});
  };
  for (Index i = 0; i < items; ++i) {
    link_attrs(users + i, cluster_of(i), kHasAttributeRelation);
  }
  for (Index u = 0; u < users; ++u) {
    link_attrs(u, cluster_of(u), kUserAttributeRelation);
  }

  build_message_graph(kg);

  // Brand datasets: positives are the cluster's users; negatives 3x from the
  // rest. Train/validation users and test users come from disjoint pools.
  std::vector<Index> all_users(static_cast<std::size_t>(users));
  std::iota(all_users.begin(), all_users.end(), 0);
  std::shuffle(all_users.begin(), all_users.end(), rng);
  const std::size_t trainval_count = all_users.size() * 7 / 10;
  const std::vector<Index> pool_trainval(all_users.begin(),
                                         all_users.begin() + trainval_count);
  const std::vector<Index> pool_test(all_users.begin() + trainval_count,
                                     all_users.end());

  for (int brand = 0; brand < static_cast<int>(c); ++brand) {
    LabeledDataset ds;
    ds.brand = "brand" + std::to_string(brand);

    auto add_block = [&](const std::vector<Index>& pool, bool is_test) {
      std::vector<Index> positives, others;
      for (Index u : pool) {
        (bench.cluster_of_entity[static_cast<std::size_t>(u)] == brand
             ? positives
             : others)
            .push_back(u);
      }
      const Index want_neg = std::min<Index>(3 * std::ssize(positives),
                                             std::ssize(others));
      std::vector<Index> negatives = draw_distinct(others, want_neg, rng);

      auto push = [&](Index u, int label, Split split) {
        ds.examples.push_back({u, label, split});
      };
      if (is_test) {
        for (Index u : positives) push(u, 1, Split::Test);
        for (Index u : negatives) push(u, 0, Split::Test);
      } else {
        // 6:4 train:validation within the trainval pool.
        const std::size_t pos_train = positives.size() * 6 / 10;
        const std::size_t neg_train = negatives.size() * 6 / 10;
        for (std::size_t i = 0; i < positives.size(); ++i) {
          push(positives[i], 1, i < pos_train ? Split::Train : Split::Validation);
        }
        for (std::size_t i = 0; i < negatives.size(); ++i) {
          push(negatives[i], 0, i < neg_train ? Split::Train : Split::Validation);
        }
      }
    };
    add_block(pool_trainval, false);
    add_block(pool_test, true);
    bench.brands.push_back(std::move(ds));
  }
  return bench;
}

TranslationFixture generate_translation_kg(Index num_entities,
                                           Index num_relations, Index dim,
                                           double noise_std,
                                           std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("generate_translation_kg: dim >= 2");
  if (num_entities < 2 || num_relations < 1) {
    throw std::invalid_argument("generate_translation_kg: too few entities");
  }
  Rng rng(seed);

  // Smallest lattice box that holds num_entities cells.
  Index side = 2;
  auto capacity = [&](Index s) {
    double cap = 1.0;
    for (Index j = 0; j < num_relations; ++j) cap *= static_cast<double>(s);
    return cap;
  };
  while (capacity(side) < static_cast<double>(num_entities)) ++side;

  // Row-major prefix of the box keeps the occupied region contiguous.
  std::vector<std::vector<Index>> coords(static_cast<std::size_t>(num_entities));
  for (Index e = 0; e < num_entities; ++e) {
    std::vector<Index> coord(static_cast<std::size_t>(num_relations));
    Index rem = e;
    for (Index j = num_relations; j-- > 0;) {
      coord[static_cast<std::size_t>(j)] = rem % side;
      rem /= side;
    }
    coords[static_cast<std::size_t>(e)] = std::move(coord);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix rel(num_relations, dim);
  for (Index j = 0; j < num_relations; ++j) {
    for (Index d = 0; d < dim; ++d) rel(j, d) = 0.3 * normal(rng);
  }
  Vector base(dim);
  for (Index d = 0; d < dim; ++d) base(d) = normal(rng);
  base /= base.norm();

  TranslationFixture fx;
  fx.planted.dim = dim;
  fx.planted.relations = rel;
  fx.planted.entities.resize(num_entities, dim);
  for (Index e = 0; e < num_entities; ++e) {
    Vector pos = base;
    for (Index j = 0; j < num_relations; ++j) {
      pos += static_cast<double>(coords[static_cast<std::size_t>(e)]
                                       [static_cast<std::size_t>(j)]) *
             rel.row(j).transpose();
    }
    fx.planted.entities.row(e) = pos.transpose();
  }

  // All candidate (h, r, t) distances, then the smallest threshold whose
  // edge count puts the mean out-degree in [2, 10].
  struct Cand {
    double dist;
    Triple t;
  };
  std::vector<Cand> cands;
  for (Index h = 0; h < num_entities; ++h) {
    for (Index r = 0; r < num_relations; ++r) {
      const Vector q = fx.planted.entities.row(h).transpose() +
                       fx.planted.relations.row(r).transpose();
      for (Index t = 0; t < num_entities; ++t) {
        if (t == h) continue;
        const double d =
            (q - fx.planted.entities.row(t).transpose()).cwiseAbs().sum();
        cands.push_back({d, {h, r, t}});
      }
    }
  }
  std::sort(cands.begin(), cands.end(),
            [](const Cand& a, const Cand& b) { return a.dist < b.dist; });
  const std::size_t min_edges = static_cast<std::size_t>(2 * num_entities);
  const std::size_t max_edges = static_cast<std::size_t>(10 * num_entities);
  if (cands.size() < min_edges) {
    throw std::runtime_error(
        "generate_translation_kg: not enough candidate edges; increase "
        "num_entities or num_relations");
  }
  // Cut at min_edges, then extend through any tie plateau (distances within
  // 1e-12 of the cut are kept together).
  std::size_t count = min_edges;
  while (count < cands.size() &&
         cands[count].dist <= cands[count - 1].dist + 1e-12) {
    ++count;
  }
  if (count > max_edges) {
    throw std::runtime_error(
        "generate_translation_kg: threshold search failed (degree plateau "
        "exceeds 10 per entity); adjust num_relations or num_entities");
  }

  fx.kg.num_entities = num_entities;
  fx.kg.num_relations = num_relations;
  for (std::size_t i = 0; i < count; ++i) fx.kg.triples.push_back(cands[i].t);
  std::sort(fx.kg.triples.begin(), fx.kg.triples.end());
  fx.kg.entity_kind.assign(static_cast<std::size_t>(num_entities),
                           EntityKind::Item);
  build_message_graph(fx.kg);

  if (noise_std > 0) {
    for (Index e = 0; e < num_entities; ++e) {
      for (Index d = 0; d < dim; ++d) {
        fx.planted.entities(e, d) += noise_std * normal(rng);
      }
    }
  }
  return fx;
}

Matrix baseline_features(const ClusterBenchmark& bench, Index num_users,
                         Index dim, std::uint64_t seed) {
  const Index c =
      1 + *std::max_element(bench.cluster_of_entity.begin(),
                            bench.cluster_of_entity.begin() + num_users);
  if (dim < c) throw std::invalid_argument("baseline_features: dim < clusters");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix f = Matrix::Zero(num_users, dim);
  // Weak cluster indicator drowned in noise, then pure distractor columns.
  for (Index u = 0; u < num_users; ++u) {
    f(u, bench.cluster_of_entity[static_cast<std::size_t>(u)]) = 0.5;
    for (Index d = 0; d < dim; ++d) f(u, d) += normal(rng);
  }
  return f;
}

void write_labels(const std::vector<LabeledDataset>& brands,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const LabeledDataset& ds : brands) {
    for (const LabeledExample& ex : ds.examples) {
      const char* split = ex.split == Split::Train       ? "train"
                          : ex.split == Split::Validation ? "validation"
                                                          : "test";
      out << ex.user << '\t' << ex.label << '\t' << split << '\t' << ds.brand
          << '\n';
    }
  }
}

std::vector<LabeledDataset> read_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open labels file: " + path);
  std::vector<LabeledDataset> brands;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    LabeledExample ex;
    std::string split, brand;
    int label;
    if (!(ls >> ex.user >> label >> split >> brand)) {
      throw ParseError("labels line " + std::to_string(line_no) +
                       ": expected user, label, split, brand");
    }
    ex.label = label;
    if (split == "train") ex.split = Split::Train;
    else if (split == "validation") ex.split = Split::Validation;
    else if (split == "test") ex.split = Split::Test;
    else throw ParseError("labels line " + std::to_string(line_no) +
                          ": unknown split '" + split + "'");
    auto it = std::find_if(brands.begin(), brands.end(),
                           [&](const LabeledDataset& d) { return d.brand == brand; });
    if (it == brands.end()) {
      brands.push_back({brand, {}});
      it = brands.end() - 1;
    }
    it->examples.push_back(ex);
  }
  return brands;
}

void write_features(const Matrix& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.precision(17);
  for (Index u = 0; u < features.rows(); ++u) {
    out << u;
    for (Index d = 0; d < features.cols(); ++d) out << '\t' << features(u, d);
    out << '\n';
  }
}

Matrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open features file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Index id;
    ls >> id;
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("features file empty: " + path);
  Matrix f(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw std::runtime_error("features file ragged at row " +
                               std::to_string(i));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      f(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return f;
}

}  // namespace kqgc
