#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "kqgc/graph.hpp"

using namespace kqgc;

TEST_CASE("parse_triples interns ids in first-appearance order") {
  const auto kg = parse_triples("u1\tpurchase\ti1\nu1\tpurchase\ti2\n",
                                IdMode::StringInterned);
  CHECK(kg.num_entities == 3);
  CHECK(kg.num_relations == 1);
  CHECK(kg.triples.size() == 2);
  CHECK(kg.entity_names[0] == "u1");
  CHECK(kg.entity_names[1] == "i1");
  CHECK(kg.triples[0] == Triple{0, 0, 1});
  CHECK(kg.triples[1] == Triple{0, 0, 2});
}

TEST_CASE("duplicate triples are deduplicated") {
  const auto kg = parse_triples("u1\tpurchase\ti1\nu1\tpurchase\ti1\n",
                                IdMode::StringInterned);
  CHECK(kg.triples.size() == 1);
}

TEST_CASE("malformed line names its line number") {
  CHECK_THROWS_WITH_AS(parse_triples("u1\tpurchase\n", IdMode::StringInterned),
                       doctest::Contains("line 1"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_triples("a\tr\tb\nx\ty\n", IdMode::StringInterned),
      doctest::Contains("line 2"), ParseError);
}

TEST_CASE("self-loops are rejected with a count") {
  CHECK_THROWS_WITH_AS(
      parse_triples("a\tr\ta\nb\tr\tb\na\tr\tb\n", IdMode::StringInterned),
      doctest::Contains("2 self-loop"), ParseError);
}

TEST_CASE("empty input is an error") {
  CHECK_THROWS_AS(parse_triples("", IdMode::StringInterned), ParseError);
  CHECK_THROWS_AS(parse_triples("# only a comment\n", IdMode::StringInterned),
                  ParseError);
}

TEST_CASE("comments and kind tags parse") {
  const auto kg = parse_triples(
      "# header\nu1\tpurchase\ti1\tuser\ni1\thas_attr\ta1\titem\n",
      IdMode::StringInterned);
  CHECK(kg.entity_kind[0] == EntityKind::User);
  CHECK(kg.entity_kind[1] == EntityKind::Item);
  // a1 never appears as head, so it keeps the default kind
  CHECK(kg.entity_kind[2] == EntityKind::Item);
}

TEST_CASE("integer id mode keeps the given ids") {
  const auto kg = parse_triples("5\t1\t2\n", IdMode::Integer);
  CHECK(kg.num_entities == 6);
  CHECK(kg.num_relations == 2);
  CHECK(kg.triples[0] == Triple{5, 1, 2});
}

TEST_CASE("build_message_graph materializes both directions") {
  KnowledgeGraph kg;
  kg.num_entities = 2;
  kg.num_relations = 1;
  kg.triples = {{0, 0, 1}};
  build_message_graph(kg);
  REQUIRE(kg.incoming.size() == 2);
  CHECK(kg.incoming[1] ==
        std::vector<MessageEdge>{{0, 0, EdgeDirection::Forward}});
  CHECK(kg.incoming[0] ==
        std::vector<MessageEdge>{{1, 0, EdgeDirection::Reverse}});
}

TEST_CASE("triangle gives every node two incoming edges") {
  KnowledgeGraph kg;
  kg.num_entities = 3;
  kg.num_relations = 1;
  kg.triples = {{0, 0, 1}, {1, 0, 2}, {2, 0, 0}};
  build_message_graph(kg);
  for (const auto& edges : kg.incoming) CHECK(edges.size() == 2);
}

TEST_CASE("empty triple list gives empty adjacency") {
  KnowledgeGraph kg;
  kg.num_entities = 4;
  kg.num_relations = 1;
  build_message_graph(kg);
  for (const auto& edges : kg.incoming) CHECK(edges.empty());
}

TEST_CASE("incoming edge count is twice the triple count") {
  KnowledgeGraph kg;
  kg.num_entities = 10;
  kg.num_relations = 2;
  Rng rng(7);
  std::set<Triple> triples;
  std::uniform_int_distribution<Index> ent(0, 9), rel(0, 1);
  while (triples.size() < 20) {
    Triple t{ent(rng), rel(rng), ent(rng)};
    if (t.head != t.tail) triples.insert(t);
  }
  kg.triples.assign(triples.begin(), triples.end());
  build_message_graph(kg);
  std::size_t total = 0;
  for (const auto& edges : kg.incoming) total += edges.size();
  CHECK(total == 2 * kg.triples.size());

  // every message edge maps back to exactly one triple
  for (Index v = 0; v < kg.num_entities; ++v) {
    for (const MessageEdge& e : kg.incoming[v]) {
      const Triple back = e.direction == EdgeDirection::Forward
                              ? Triple{e.source, e.relation, v}
                              : Triple{v, e.relation, e.source};
      CHECK(std::count(kg.triples.begin(), kg.triples.end(), back) == 1);
    }
  }

  // idempotent
  auto before = kg.incoming;
  build_message_graph(kg);
  CHECK(kg.incoming == before);
}

TEST_CASE("neighbor_sample passes small neighborhoods through") {
  KnowledgeGraph kg;
  kg.num_entities = 4;
  kg.num_relations = 1;
  kg.triples = {{1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  build_message_graph(kg);
  Rng rng(1);
  CHECK(neighbor_sample(kg, 0, 10, rng).size() == 3);
  CHECK(neighbor_sample(kg, 0, 10, rng) == kg.incoming[0]);
}

TEST_CASE("neighbor_sample of an isolated node is empty") {
  KnowledgeGraph kg;
  kg.num_entities = 3;
  kg.num_relations = 1;
  kg.triples = {{0, 0, 1}};
  build_message_graph(kg);
  Rng rng(1);
  CHECK(neighbor_sample(kg, 2, 10, rng).empty());
}

TEST_CASE("neighbor_sample is seed-deterministic without replacement") {
  KnowledgeGraph kg;
  kg.num_entities = 101;
  kg.num_relations = 1;
  for (Index i = 1; i <= 100; ++i) kg.triples.push_back({i, 0, 0});
  build_message_graph(kg);

  Rng rng_a(42), rng_b(42);
  const auto sample_a = neighbor_sample(kg, 0, 10, rng_a);
  const auto sample_b = neighbor_sample(kg, 0, 10, rng_b);
  REQUIRE(sample_a.size() == 10);
  CHECK(sample_a == sample_b);

  std::set<MessageEdge> distinct(sample_a.begin(), sample_a.end());
  CHECK(distinct.size() == 10);  // without replacement

  Rng rng_c(43);
  CHECK(neighbor_sample(kg, 0, 10, rng_c) != sample_a);
}

TEST_CASE("neighbor_sample rejects out-of-range nodes") {
  KnowledgeGraph kg;
  kg.num_entities = 2;
  kg.num_relations = 1;
  kg.triples = {{0, 0, 1}};
  build_message_graph(kg);
  Rng rng(0);
  CHECK_THROWS_AS(neighbor_sample(kg, 5, 1, rng), std::out_of_range);
}
