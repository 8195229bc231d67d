#pragma once

#include <map>
#include <string>

#include "kqgc/layer.hpp"
#include "kqgc/transe.hpp"

namespace kqgc {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary checkpoint: "KQGC" magic, little-endian 64-bit version (1), then N,
// R, H counts and row-major 64-bit floats, entities first. Round-trips
// bit-exactly.
void write_embeddings(const EmbeddingTable& emb, const std::string& path);
EmbeddingTable read_embeddings(const std::string& path);

// Same envelope with version 2: layer count, then per layer H_out, H_in,
// aggregator code, attention-vector length and the row-major payloads.
void write_kqgc_params(const KqgcParams& params, const std::string& path);
KqgcParams read_kqgc_params(const std::string& path);

// Sidecar text file ("<path>.meta") with key = value lines.
void write_sidecar(const std::string& path,
                   const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> read_sidecar(const std::string& path);

// "entity_id<TAB>v0<TAB>...<TAB>v{H-1}" rows, entities then relations
// prefixed with 'r'.
void export_tsv(const EmbeddingTable& emb, const std::string& path);

}  // namespace kqgc
