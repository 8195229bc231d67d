#pragma once

#include <map>
#include <string>

#include "kqgc/layer.hpp"
#include "kqgc/synth.hpp"
#include "kqgc/transe.hpp"

namespace kqgc {

struct PipelineConfig {
  TrainConfig kge;
  TrainConfig kqgc;
  SyntheticSpec synth;
  Index layers = 1;
  Aggregator aggregator = Aggregator::Mean;
  bool softmax_attention = false;
  Index feature_dim = 8;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  // Applies one "key = value" assignment; throws on unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  void validate() const;
};

PipelineConfig preset_config(const std::string& name);  // "paper" or "desk"

// Flat "key = value" file, '#' comments and blank lines ignored.
PipelineConfig load_config(const std::string& path,
                           const PipelineConfig& base);

Aggregator parse_aggregator(const std::string& name);  // mean | attn1 | attn2
std::string aggregator_name(Aggregator agg);

}  // namespace kqgc
