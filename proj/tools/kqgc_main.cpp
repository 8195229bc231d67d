#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "kqgc/config.hpp"
#include "kqgc/io.hpp"
#include "kqgc/metrics.hpp"
#include "kqgc/synth.hpp"

namespace fs = std::filesystem;
using namespace kqgc;

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("KQGC_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "error") return LogLevel::Error;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[kqgc] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[kqgc] " << msg << "\n";
}

struct CommonOpts {
  std::string config_path;
  std::string preset = "desk";
  std::string out_dir;
  std::int64_t seed = -1;
  std::string aggregator;
  Index layers = -1;
  std::string checkpoint;
};

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig cfg = preset_config(opts.preset);
  if (!opts.config_path.empty()) cfg = load_config(opts.config_path, cfg);
  // CLI flags win over the config file.
  if (opts.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(opts.seed);
  }
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.aggregator.empty()) cfg.aggregator = parse_aggregator(opts.aggregator);
  if (opts.layers > 0) cfg.layers = opts.layers;
  cfg.kge.seed = cfg.seed;
  cfg.kqgc.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string path_in(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
}

void run_gen(const PipelineConfig& cfg) {
  ensure_out_dir(cfg);
  ClusterBenchmark bench = generate_cluster_kg(cfg.synth);
  write_triples(bench.kg, path_in(cfg, "kg.tsv"));
  write_labels(bench.brands, path_in(cfg, "labels.tsv"));
  const Matrix feats = baseline_features(bench, cfg.synth.num_users,
                                         cfg.feature_dim, cfg.seed + 17);
  write_features(feats, path_in(cfg, "features.tsv"));
  log_info("gen: " + std::to_string(bench.kg.num_entities) + " entities, " +
           std::to_string(bench.kg.triples.size()) + " triples -> " +
           cfg.out_dir);
}

KnowledgeGraph load_kg(const PipelineConfig& cfg) {
  KnowledgeGraph kg = load_triples(path_in(cfg, "kg.tsv"), IdMode::Integer);
  build_message_graph(kg);
  return kg;
}

void write_kge_checkpoint(const PipelineConfig& cfg, const EmbeddingTable& emb,
                          Index epoch, const std::string& name) {
  const std::string path = path_in(cfg, name);
  write_embeddings(emb, path);
  auto meta = cfg.to_map();
  meta["epoch"] = std::to_string(epoch);
  write_sidecar(path, meta);
}

void run_train_kge(const PipelineConfig& cfg, const std::string& resume) {
  ensure_out_dir(cfg);
  const KnowledgeGraph kg = load_kg(cfg);
  EpochCallback cb;
  cb.fn = [&](Index epoch, double loss, const EmbeddingTable& emb) {
    log_debug("kge epoch " + std::to_string(epoch) + " mean loss " +
              std::to_string(loss));
    if (cfg.kge.checkpoint_every > 0 && epoch % cfg.kge.checkpoint_every == 0) {
      write_kge_checkpoint(cfg, emb, epoch,
                           "kge_epoch" + std::to_string(epoch) + ".ckpt");
    }
  };
  EmbeddingTable emb;
  if (resume.empty()) {
    emb = train_kge(kg, cfg.kge, cb);
  } else {
    EmbeddingTable initial = read_embeddings(resume);
    const auto meta = read_sidecar(resume);
    const Index start = std::stoll(meta.at("epoch"));
    log_info("resuming from " + resume + " at epoch " + std::to_string(start));
    emb = train_kge_from(kg, cfg.kge, std::move(initial), start, cb);
  }
  write_kge_checkpoint(cfg, emb, cfg.kge.epochs, "kge_final.ckpt");
  log_info("train-kge: wrote " + path_in(cfg, "kge_final.ckpt"));
}

void run_train_kqgc(const PipelineConfig& cfg, const std::string& checkpoint) {
  ensure_out_dir(cfg);
  const KnowledgeGraph kg = load_kg(cfg);
  const std::string ckpt =
      checkpoint.empty() ? path_in(cfg, "kge_final.ckpt") : checkpoint;
  const EmbeddingTable pretrained = read_embeddings(ckpt);
  const PairDataset pairs = pairs_from_kg(kg, kPurchaseRelation);
  Rng rng(cfg.seed ^ 0x5bd1e995);
  KqgcParams params0 =
      init_kqgc_params(cfg.layers, pretrained.dim, cfg.aggregator, rng);
  for (auto& lp : params0.layers) lp.softmax_attention = cfg.softmax_attention;
  const KqgcTrainResult result =
      train_kqgc(kg, pretrained, pairs, std::move(params0), cfg.kqgc,
                 [&](Index epoch, double loss) {
                   log_debug("kqgc epoch " + std::to_string(epoch) + " loss " +
                             std::to_string(loss));
                 });
  const std::string params_path = path_in(cfg, "kqgc_params.ckpt");
  write_kqgc_params(result.params, params_path);
  write_sidecar(params_path, cfg.to_map());
  const std::string emb_path = path_in(cfg, "kqgc_embeddings.ckpt");
  write_embeddings(embeddings_from_state(result.final_state), emb_path);
  write_sidecar(emb_path, cfg.to_map());
  log_info("train-kqgc: wrote " + params_path + " and " + emb_path);
}

Matrix concat_features(const Matrix& base, const Matrix& emb, Index num_users) {
  Matrix out(num_users, base.cols() + emb.cols());
  out.leftCols(base.cols()) = base.topRows(num_users);
  out.rightCols(emb.cols()) = emb.topRows(num_users);
  return out;
}

double brand_pr_auc(const LabeledDataset& ds, const Matrix& features) {
  Matrix train_x;
  std::vector<int> train_y;
  std::vector<Index> test_users;
  std::vector<int> test_y;
  Index n_train = 0;
  for (const auto& ex : ds.examples) {
    if (ex.split == Split::Train) ++n_train;
  }
  train_x.resize(n_train, features.cols());
  Index row = 0;
  for (const auto& ex : ds.examples) {
    if (ex.split == Split::Train) {
      train_x.row(row++) = features.row(ex.user);
      train_y.push_back(ex.label);
    } else if (ex.split == Split::Test) {
      test_users.push_back(ex.user);
      test_y.push_back(ex.label);
    }
  }
  const LinearClassifier clf =
      train_linear_classifier(train_x, train_y, ClassifierConfig{});
  std::vector<double> scores;
  scores.reserve(test_users.size());
  for (Index u : test_users) {
    scores.push_back(clf.score(features.row(u).transpose()));
  }
  return pr_auc(scores, test_y).pr_auc;
}

void run_eval(const PipelineConfig& cfg, const std::string& kge_ckpt,
              const std::string& kqgc_ckpt) {
  ensure_out_dir(cfg);
  const auto brands = read_labels(path_in(cfg, "labels.tsv"));
  const Matrix base = read_features(path_in(cfg, "features.tsv"));
  const Index num_users = base.rows();

  struct FeatureSet {
    std::string name;
    Matrix features;
  };
  std::vector<FeatureSet> sets;
  sets.push_back({"baseline", base});
  const std::string kge_path =
      kge_ckpt.empty() ? path_in(cfg, "kge_final.ckpt") : kge_ckpt;
  if (fs::exists(kge_path)) {
    const EmbeddingTable kge = read_embeddings(kge_path);
    sets.push_back({"transe", concat_features(base, kge.entities, num_users)});
  }
  const std::string kqgc_path =
      kqgc_ckpt.empty() ? path_in(cfg, "kqgc_embeddings.ckpt") : kqgc_ckpt;
  if (fs::exists(kqgc_path)) {
    const EmbeddingTable conv = read_embeddings(kqgc_path);
    sets.push_back({"kqgc", concat_features(base, conv.entities, num_users)});
  }

  std::ostringstream table, tsv;
  table << std::fixed << std::setprecision(3);
  table << "input_features";
  for (const auto& ds : brands) table << '\t' << ds.brand;
  table << "\tAVG.\n";

  std::vector<double> baseline_scores;
  for (const auto& set : sets) {
    table << set.name;
    double sum = 0.0;
    for (std::size_t b = 0; b < brands.size(); ++b) {
      const double auc = brand_pr_auc(brands[b], set.features);
      sum += auc;
      tsv << "pr_auc_" << set.name << '\t' << brands[b].brand << '\t'
          << std::setprecision(17) << auc << '\n';
      table << '\t' << auc;
      if (set.name == "baseline") {
        baseline_scores.push_back(auc);
      } else {
        table << " (" << std::showpos
              << 100.0 * (auc - baseline_scores[b]) / baseline_scores[b]
              << std::noshowpos << ")";
      }
    }
    const double avg = sum / static_cast<double>(brands.size());
    table << '\t' << avg;
    tsv << "pr_auc_" << set.name << "\tAVG\t" << std::setprecision(17) << avg
        << '\n';
    if (set.name == "baseline") {
      baseline_scores.push_back(avg);
    } else {
      table << " ("
            << std::showpos
            << 100.0 * (avg - baseline_scores[brands.size()]) /
                   baseline_scores[brands.size()]
            << std::noshowpos << ")";
    }
    table << '\n';
  }

  std::ofstream report(path_in(cfg, "report.txt"), std::ios::binary);
  report << table.str();
  std::ofstream mreport(path_in(cfg, "report.tsv"), std::ios::binary);
  mreport << tsv.str();
  std::cout << table.str();
  log_info("eval: wrote " + path_in(cfg, "report.txt"));
}

void run_export(const std::string& checkpoint, const std::string& out_path) {
  const EmbeddingTable emb = read_embeddings(checkpoint);
  export_tsv(emb, out_path);
  log_info("export: wrote " + out_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TransE pre-training with knowledge-query graph convolution"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string resume, kge_ckpt, kqgc_ckpt, export_out;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "flat key = value config file");
    cmd->add_option("--preset", opts.preset, "paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed", opts.seed, "RNG seed override");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--aggregator", opts.aggregator, "mean, attn1 or attn2")
        ->check(CLI::IsMember({"mean", "attn1", "attn2"}));
    cmd->add_option("--layers", opts.layers, "number of convolution layers");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic KG and labels");
  add_common(gen);
  auto* train_kge_cmd = app.add_subcommand("train-kge", "pre-train TransE");
  add_common(train_kge_cmd);
  train_kge_cmd->add_option("--resume", resume, "checkpoint to resume from");
  auto* train_kqgc_cmd =
      app.add_subcommand("train-kqgc", "train the convolution layer");
  add_common(train_kqgc_cmd);
  train_kqgc_cmd->add_option("--checkpoint", opts.checkpoint,
                             "input KGE checkpoint");
  auto* eval_cmd = app.add_subcommand("eval", "per-brand PR-AUC report");
  add_common(eval_cmd);
  eval_cmd->add_option("--kge-checkpoint", kge_ckpt, "TransE checkpoint");
  eval_cmd->add_option("--kqgc-checkpoint", kqgc_ckpt, "convolved checkpoint");
  auto* export_cmd = app.add_subcommand("export", "checkpoint to TSV");
  add_common(export_cmd);
  export_cmd->add_option("--checkpoint", opts.checkpoint, "input checkpoint")
      ->required();
  export_cmd->add_option("--tsv", export_out, "output TSV path")->required();
  auto* pipeline_cmd =
      app.add_subcommand("pipeline", "gen, train-kge, train-kqgc, eval");
  add_common(pipeline_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (export_cmd->parsed()) {
      run_export(opts.checkpoint, export_out);
      return 0;
    }
    const PipelineConfig cfg = resolve_config(opts);
    if (gen->parsed()) {
      run_gen(cfg);
    } else if (train_kge_cmd->parsed()) {
      run_train_kge(cfg, resume);
    } else if (train_kqgc_cmd->parsed()) {
      run_train_kqgc(cfg, opts.checkpoint);
    } else if (eval_cmd->parsed()) {
      run_eval(cfg, kge_ckpt, kqgc_ckpt);
    } else if (pipeline_cmd->parsed()) {
      run_gen(cfg);
      run_train_kge(cfg, "");
      run_train_kqgc(cfg, "");
      run_eval(cfg, "", "");
    }
  } catch (const std::exception& e) {
    std::cerr << "kqgc: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
