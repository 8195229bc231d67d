#include "kqgc/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace kqgc {

namespace {

constexpr char kMagic[4] = {'K', 'Q', 'G', 'C'};
constexpr std::uint64_t kEmbeddingsVersion = 1;
constexpr std::uint64_t kParamsVersion = 2;

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in, const std::string& what) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("checkpoint truncated while reading " + what);
  return v;
}

void write_f64(std::ofstream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

double read_f64(std::ifstream& in, const std::string& what) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("checkpoint truncated while reading " + what);
  return v;
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) write_f64(out, m(i, j));
}

void read_matrix(std::ifstream& in, Matrix& m, const std::string& what) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(in, what);
}

std::ifstream open_checked(const std::string& path, std::uint64_t want_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic in " + path + " (expected KQGC)");
  }
  const std::uint64_t version = read_u64(in, "version");
  if (version != want_version) {
    throw FormatError("unsupported format version " + std::to_string(version) +
                      " in " + path + " (expected " +
                      std::to_string(want_version) + ")");
  }
  return in;
}

}  // namespace

void write_embeddings(const EmbeddingTable& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_u64(out, kEmbeddingsVersion);
  write_u64(out, static_cast<std::uint64_t>(emb.entities.rows()));
  write_u64(out, static_cast<std::uint64_t>(emb.relations.rows()));
  write_u64(out, static_cast<std::uint64_t>(emb.dim));
  write_matrix(out, emb.entities);
  write_matrix(out, emb.relations);
  if (!out) throw FormatError("write failed: " + path);
}

EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream in = open_checked(path, kEmbeddingsVersion);
  EmbeddingTable emb;
  const auto n = static_cast<Index>(read_u64(in, "entity count"));
  const auto r = static_cast<Index>(read_u64(in, "relation count"));
  emb.dim = static_cast<Index>(read_u64(in, "dimension"));
  emb.entities.resize(n, emb.dim);
  emb.relations.resize(r, emb.dim);
  read_matrix(in, emb.entities, "entity rows");
  read_matrix(in, emb.relations, "relation rows");
  return emb;
}

void write_kqgc_params(const KqgcParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_u64(out, kParamsVersion);
  write_u64(out, params.layers.size());
  for (const LayerParams& lp : params.layers) {
    write_u64(out, static_cast<std::uint64_t>(lp.W.rows()));
    write_u64(out, static_cast<std::uint64_t>(lp.W.cols()));
    write_u64(out, static_cast<std::uint64_t>(lp.aggregator));
    write_u64(out, static_cast<std::uint64_t>(lp.a.size()));
    write_f64(out, lp.leaky_slope);
    write_u64(out, lp.softmax_attention ? 1 : 0);
    write_matrix(out, lp.W);
    for (Index i = 0; i < lp.b.size(); ++i) write_f64(out, lp.b(i));
    for (Index i = 0; i < lp.a.size(); ++i) write_f64(out, lp.a(i));
  }
  if (!out) throw FormatError("write failed: " + path);
}

KqgcParams read_kqgc_params(const std::string& path) {
  std::ifstream in = open_checked(path, kParamsVersion);
  KqgcParams params;
  const std::uint64_t layers = read_u64(in, "layer count");
  for (std::uint64_t l = 0; l < layers; ++l) {
    LayerParams lp;
    const auto rows = static_cast<Index>(read_u64(in, "W rows"));
    const auto cols = static_cast<Index>(read_u64(in, "W cols"));
    const std::uint64_t agg = read_u64(in, "aggregator");
    if (agg > 2) throw FormatError("unknown aggregator code in " + path);
    lp.aggregator = static_cast<Aggregator>(agg);
    const auto a_len = static_cast<Index>(read_u64(in, "attention length"));
    lp.leaky_slope = read_f64(in, "leaky slope");
    lp.softmax_attention = read_u64(in, "softmax flag") != 0;
    lp.W.resize(rows, cols);
    lp.b.resize(rows);
    lp.a.resize(a_len);
    read_matrix(in, lp.W, "W");
    for (Index i = 0; i < rows; ++i) lp.b(i) = read_f64(in, "b");
    for (Index i = 0; i < a_len; ++i) lp.a(i) = read_f64(in, "a");
    params.layers.push_back(std::move(lp));
  }
  return params;
}

void write_sidecar(const std::string& path,
                   const std::map<std::string, std::string>& entries) {
  std::ofstream out(path + ".meta", std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path + ".meta");
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> read_sidecar(const std::string& path) {
  std::ifstream in(path + ".meta", std::ios::binary);
  if (!in) throw FormatError("cannot open sidecar: " + path + ".meta");
  std::map<std::string, std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return entries;
}

void export_tsv(const EmbeddingTable& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.precision(17);
  for (Index i = 0; i < emb.entities.rows(); ++i) {
    out << i;
    for (Index d = 0; d < emb.dim; ++d) out << '\t' << emb.entities(i, d);
    out << '\n';
  }
  for (Index i = 0; i < emb.relations.rows(); ++i) {
    out << 'r' << i;
    for (Index d = 0; d < emb.dim; ++d) out << '\t' << emb.relations(i, d);
    out << '\n';
  }
}

}  // namespace kqgc
