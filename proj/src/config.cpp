#include "kqgc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kqgc {

namespace {

Index to_index(const std::string& v, const std::string& key) {
  try {
    return static_cast<Index>(std::stoll(v));
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad integer '" + v + "'");
  }
}

double to_real(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad number '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': bad flag '" + v + "'");
}

}  // namespace

Aggregator parse_aggregator(const std::string& name) {
  if (name == "mean") return Aggregator::Mean;
  if (name == "attn1" || name == "attn_dot") return Aggregator::AttnDot;
  if (name == "attn2" || name == "attn_learned") return Aggregator::AttnLearned;
  throw std::invalid_argument("unknown aggregator '" + name +
                              "' (use mean, attn1 or attn2)");
}

std::string aggregator_name(Aggregator agg) {
  switch (agg) {
    case Aggregator::Mean: return "mean";
    case Aggregator::AttnDot: return "attn1";
    case Aggregator::AttnLearned: return "attn2";
  }
  return "mean";
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  auto stage = [&](TrainConfig& cfg, const std::string& field) -> bool {
    if (field == "epochs") cfg.epochs = to_index(value, key);
    else if (field == "batch_size") cfg.batch_size = to_index(value, key);
    else if (field == "learning_rate") cfg.learning_rate = to_real(value, key);
    else if (field == "margin") cfg.margin = to_real(value, key);
    else if (field == "neg_ratio") cfg.neg_ratio = to_index(value, key);
    else if (field == "dim") cfg.dim = to_index(value, key);
    else if (field == "checkpoint_every") cfg.checkpoint_every = to_index(value, key);
    else if (field == "normalize_entities") cfg.normalize_entities = to_bool(value, key);
    else if (field == "fanout") cfg.fanout = to_index(value, key);
    else return false;
    return true;
  };

  if (key.starts_with("kge.")) {
    if (stage(kge, key.substr(4))) return;
  } else if (key.starts_with("kqgc.")) {
    if (stage(kqgc, key.substr(5))) return;
  } else if (key.starts_with("synth.")) {
    const std::string f = key.substr(6);
    if (f == "num_users") synth.num_users = to_index(value, key);
    else if (f == "num_items") synth.num_items = to_index(value, key);
    else if (f == "num_attributes") synth.num_attributes = to_index(value, key);
    else if (f == "num_clusters") synth.num_clusters = to_index(value, key);
    else if (f == "intra_cluster_purchase_prob")
      synth.intra_cluster_purchase_prob = to_real(value, key);
    else if (f == "cross_cluster_purchase_prob")
      synth.cross_cluster_purchase_prob = to_real(value, key);
    else if (f == "attr_per_item") synth.attr_per_item = to_index(value, key);
    else if (f == "noise_std") synth.noise_std = to_real(value, key);
    else
      throw std::invalid_argument("unknown config key '" + key + "'");
    return;
  } else if (key == "layers") {
    layers = to_index(value, key);
    return;
  } else if (key == "aggregator") {
    aggregator = parse_aggregator(value);
    return;
  } else if (key == "softmax_attention") {
    softmax_attention = to_bool(value, key);
    return;
  } else if (key == "feature_dim") {
    feature_dim = to_index(value, key);
    return;
  } else if (key == "out_dir") {
    out_dir = value;
    return;
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(to_index(value, key));
    return;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::map<std::string, std::string> PipelineConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto put_stage = [&](const std::string& prefix, const TrainConfig& cfg) {
    m[prefix + "epochs"] = std::to_string(cfg.epochs);
    m[prefix + "batch_size"] = std::to_string(cfg.batch_size);
    m[prefix + "learning_rate"] = std::to_string(cfg.learning_rate);
    m[prefix + "margin"] = std::to_string(cfg.margin);
    m[prefix + "neg_ratio"] = std::to_string(cfg.neg_ratio);
    m[prefix + "dim"] = std::to_string(cfg.dim);
    m[prefix + "checkpoint_every"] = std::to_string(cfg.checkpoint_every);
    m[prefix + "normalize_entities"] = cfg.normalize_entities ? "true" : "false";
    m[prefix + "fanout"] = std::to_string(cfg.fanout);
  };
  put_stage("kge.", kge);
  put_stage("kqgc.", kqgc);
  m["synth.num_users"] = std::to_string(synth.num_users);
  m["synth.num_items"] = std::to_string(synth.num_items);
  m["synth.num_attributes"] = std::to_string(synth.num_attributes);
  m["synth.num_clusters"] = std::to_string(synth.num_clusters);
  m["synth.intra_cluster_purchase_prob"] =
      std::to_string(synth.intra_cluster_purchase_prob);
  m["synth.cross_cluster_purchase_prob"] =
      std::to_string(synth.cross_cluster_purchase_prob);
  m["synth.attr_per_item"] = std::to_string(synth.attr_per_item);
  m["synth.noise_std"] = std::to_string(synth.noise_std);
  m["layers"] = std::to_string(layers);
  m["aggregator"] = aggregator_name(aggregator);
  m["softmax_attention"] = softmax_attention ? "true" : "false";
  m["feature_dim"] = std::to_string(feature_dim);
  m["out_dir"] = out_dir;
  m["seed"] = std::to_string(seed);
  return m;
}

void PipelineConfig::validate() const {
  kge.validate();
  kqgc.validate();
  synth.validate();
  if (layers < 1) throw std::invalid_argument("layers must be >= 1");
  if (feature_dim < synth.num_clusters) {
    throw std::invalid_argument("feature_dim must be >= synth.num_clusters");
  }
}

PipelineConfig preset_config(const std::string& name) {
  PipelineConfig cfg;
  if (name == "paper") {
    cfg.kge.epochs = 10000;
    cfg.kge.batch_size = 10000;
    cfg.kge.learning_rate = 0.001;
    cfg.kge.margin = 1.0;
    cfg.kge.neg_ratio = 1;
    cfg.kge.dim = 100;
    cfg.kge.checkpoint_every = 5000;
    cfg.kqgc = cfg.kge;
    cfg.kqgc.neg_ratio = 3;
    cfg.kqgc.fanout = 10;
    cfg.layers = 1;
    return cfg;
  }
  if (name == "desk") {
    cfg.kge.epochs = 150;
    cfg.kge.batch_size = 512;
    cfg.kge.learning_rate = 0.01;
    cfg.kge.margin = 1.0;
    cfg.kge.neg_ratio = 1;
    cfg.kge.dim = 16;
    cfg.kge.checkpoint_every = 50;
    cfg.kqgc = cfg.kge;
    cfg.kqgc.epochs = 30;
    cfg.kqgc.batch_size = 512;
    cfg.kqgc.learning_rate = 0.001;
    cfg.kqgc.neg_ratio = 3;
    cfg.kqgc.fanout = 10;
    cfg.layers = 1;
    cfg.synth.num_users = 200;
    cfg.synth.num_items = 400;
    cfg.synth.num_attributes = 50;
    cfg.synth.num_clusters = 5;
    cfg.synth.intra_cluster_purchase_prob = 0.05;
    cfg.synth.cross_cluster_purchase_prob = 0.005;
    cfg.synth.attr_per_item = 2;
    cfg.feature_dim = 8;
    return cfg;
  }
  throw std::invalid_argument("unknown preset '" + name +
                              "' (use paper or desk)");
}

PipelineConfig load_config(const std::string& path, const PipelineConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  PipelineConfig cfg = base;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  return cfg;
}

}  // namespace kqgc
