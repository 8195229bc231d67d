#include "kqgc/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace kqgc {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

EntityKind parse_kind(const std::string& tag, int line_no) {
  if (tag == "user") return EntityKind::User;
  if (tag == "item") return EntityKind::Item;
  if (tag == "attribute" || tag == "attr") return EntityKind::Attribute;
  throw ParseError("line " + std::to_string(line_no) +
                   ": unknown entity kind '" + tag + "'");
}

Index parse_index(const std::string& tok, int line_no) {
  Index value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || value < 0) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": expected non-negative integer id, got '" + tok + "'");
  }
  return value;
}

}  // namespace

KnowledgeGraph parse_triples(const std::string& text, IdMode id_mode) {
  KnowledgeGraph kg;
  std::unordered_map<std::string, Index> entity_ids;
  std::unordered_map<std::string, Index> relation_ids;
  std::set<Triple> seen;
  std::vector<std::pair<Index, EntityKind>> kind_tags;
  int self_loops = 0;

  auto intern_entity = [&](const std::string& tok, int line_no) -> Index {
    if (id_mode == IdMode::Integer) return parse_index(tok, line_no);
    auto [it, inserted] = entity_ids.try_emplace(tok, kg.num_entities);
    if (inserted) {
      ++kg.num_entities;
      kg.entity_names.push_back(tok);
    }
    return it->second;
  };
  auto intern_relation = [&](const std::string& tok, int line_no) -> Index {
    if (id_mode == IdMode::Integer) return parse_index(tok, line_no);
    auto [it, inserted] = relation_ids.try_emplace(tok, kg.num_relations);
    if (inserted) {
      ++kg.num_relations;
      kg.relation_names.push_back(tok);
    }
    return it->second;
  };

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    any_content = true;
    auto fields = split_tabs(line);
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 or 4 "
                       "tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    Triple t;
    t.head = intern_entity(fields[0], line_no);
    t.relation = intern_relation(fields[1], line_no);
    t.tail = intern_entity(fields[2], line_no);
    if (t.head == t.tail) {
      ++self_loops;
      continue;
    }
    if (fields.size() == 4) {
      // Kind tag applies to the head entity of the line.
      kind_tags.emplace_back(t.head, parse_kind(fields[3], line_no));
    }
    if (seen.insert(t).second) kg.triples.push_back(t);
  }

  if (!any_content) throw ParseError("no triples in input");
  if (self_loops > 0) {
    throw ParseError("rejected " + std::to_string(self_loops) +
                     " self-loop triple(s)");
  }

  if (id_mode == IdMode::Integer) {
    for (const Triple& t : kg.triples) {
      kg.num_entities = std::max({kg.num_entities, t.head + 1, t.tail + 1});
      kg.num_relations = std::max(kg.num_relations, t.relation + 1);
    }
  }

  kg.entity_kind.assign(static_cast<std::size_t>(kg.num_entities),
                        EntityKind::Item);
  for (auto [e, kind] : kind_tags) {
    kg.entity_kind[static_cast<std::size_t>(e)] = kind;
  }
  return kg;
}

KnowledgeGraph load_triples(const std::string& path, IdMode id_mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open triple file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_triples(buf.str(), id_mode);
}

void build_message_graph(KnowledgeGraph& kg) {
  kg.incoming.assign(static_cast<std::size_t>(kg.num_entities), {});
  for (const Triple& t : kg.triples) {
    kg.incoming[static_cast<std::size_t>(t.tail)].push_back(
        {t.head, t.relation, EdgeDirection::Forward});
    kg.incoming[static_cast<std::size_t>(t.head)].push_back(
        {t.tail, t.relation, EdgeDirection::Reverse});
  }
  for (auto& edges : kg.incoming) std::sort(edges.begin(), edges.end());
}

std::vector<MessageEdge> neighbor_sample(const KnowledgeGraph& kg, Index v,
                                         Index k, Rng& rng) {
  if (v < 0 || v >= kg.num_entities) {
    throw std::out_of_range("neighbor_sample: entity index " +
                            std::to_string(v) + " out of range");
  }
  const auto& edges = kg.incoming[static_cast<std::size_t>(v)];
  if (std::ssize(edges) <= k) return edges;

  // Partial Fisher-Yates over an index vector keeps draws independent of
  // the neighborhood size beyond the first k swaps.
  std::vector<std::size_t> idx(edges.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<MessageEdge> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(
        static_cast<std::size_t>(i), idx.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
    out.push_back(edges[idx[static_cast<std::size_t>(i)]]);
  }
  return out;
}

void write_triples(const KnowledgeGraph& kg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const bool named = !kg.entity_names.empty();
  for (const Triple& t : kg.triples) {
    const auto h = static_cast<std::size_t>(t.head);
    if (named) {
      out << kg.entity_names[h] << '\t'
          << kg.relation_names[static_cast<std::size_t>(t.relation)] << '\t'
          << kg.entity_names[static_cast<std::size_t>(t.tail)];
    } else {
      out << t.head << '\t' << t.relation << '\t' << t.tail;
    }
    if (!kg.entity_kind.empty()) {
      switch (kg.entity_kind[h]) {
        case EntityKind::User: out << "\tuser"; break;
        case EntityKind::Item: out << "\titem"; break;
        case EntityKind::Attribute: out << "\tattribute"; break;
      }
    }
    out << '\n';
  }
}

}  // namespace kqgc
