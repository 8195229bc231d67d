#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kqgc {

using Index = std::int64_t;
using Rng = std::mt19937_64;

struct Triple {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

enum class EdgeDirection : std::uint8_t { Forward, Reverse };

// One incoming message edge of a destination node. Forward means the
// underlying triple is (source, relation, dst); reverse means (dst,
// relation, source), whose relation embedding enters queries negated.
struct MessageEdge {
  Index source = 0;
  Index relation = 0;
  EdgeDirection direction = EdgeDirection::Forward;

  friend bool operator==(const MessageEdge&, const MessageEdge&) = default;
  friend auto operator<=>(const MessageEdge&, const MessageEdge&) = default;
};

enum class EntityKind : std::uint8_t { User, Item, Attribute };

struct KnowledgeGraph {
  Index num_entities = 0;
  Index num_relations = 0;
  std::vector<Triple> triples;
  // incoming[v]: one MessageEdge per triple incident to v, one per direction.
  // Empty until build_message_graph runs.
  std::vector<std::vector<MessageEdge>> incoming;
  std::vector<EntityKind> entity_kind;
  // Present only in string-interned mode; entity_names[i] is the token that
  // was assigned dense index i.
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;

  bool has_message_graph() const { return !incoming.empty(); }
};

enum class IdMode { StringInterned, Integer };

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads the tab-separated triple file. Lines starting with '#' are skipped.
// Duplicate triples are dropped; self-loops are rejected. The message graph
// is not built here.
KnowledgeGraph load_triples(const std::string& path, IdMode id_mode);

// Same parser over an already-loaded buffer (used by load_triples and tests).
KnowledgeGraph parse_triples(const std::string& text, IdMode id_mode);

// Populates incoming: for every triple (h,r,t), incoming[t] gains
// (h,r,forward) and incoming[h] gains (t,r,reverse). Lists are sorted by
// (source, relation, direction). Idempotent.
void build_message_graph(KnowledgeGraph& kg);

// Returns incoming[v] whole when it has at most k edges, otherwise a uniform
// sample of k edges without replacement. Deterministic for a given rng state.
std::vector<MessageEdge> neighbor_sample(const KnowledgeGraph& kg, Index v,
                                         Index k, Rng& rng);

void write_triples(const KnowledgeGraph& kg, const std::string& path);

}  // namespace kqgc
