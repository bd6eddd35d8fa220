// Command-line front end: data generation, training, embedding, decoding, evaluation
// and full experiment runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ele/contrastive.hpp"
#include "ele/dataset.hpp"
#include "ele/decoder.hpp"
#include "ele/embedder.hpp"
#include "ele/errors.hpp"
#include "ele/evaluation.hpp"
#include "ele/experiment.hpp"
#include "ele/regressor.hpp"
#include "ele/synthetic.hpp"
#include "ele/tensor_file.hpp"

namespace {

using namespace ele;

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  return f;
}

template <typename Log>
void write_metrics(const std::string& path, const std::vector<Log>& log) {
  if (path.empty()) return;
  auto f = open_out(path);
  f << "step,train_loss,val_loss\n";
  char line[128];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%ld,%.9g,%.9g\n", e.step, e.train_loss, e.val_loss);
    f << line;
  }
}

struct ContrastiveArgs {
  std::string data, init, out, metrics;
  int m_max = 0;
  EmbedderConfig model{2, 64, 64};
  ContrastiveConfig train;
};

void add_contrastive_options(CLI::App* cmd, ContrastiveArgs& a, bool pretrain) {
  cmd->add_option("--data", a.data, "Output graphs (dataset JSONL)")->required();
  cmd->add_option("--pretrain-ckpt", a.init, "Initial embedder checkpoint");
  cmd->add_option("--out", a.out, "Embedder checkpoint to write")->required();
  cmd->add_option("--metrics", a.metrics, "Progress CSV (step, train_loss, val_loss)");
  cmd->add_option("--m-max", a.m_max, "Padded node count (default: largest graph in --data)");
  cmd->add_option("--layers", a.model.layers, "R-GCN layers");
  cmd->add_option("--hidden", a.model.hidden, "R-GCN width");
  cmd->add_option("--dim", a.model.dim, "Embedding dimension");
  cmd->add_option("--tau", a.train.temperature, "InfoNCE temperature");
  cmd->add_option("--epsilon", a.train.epsilon, "InfoNCE epsilon");
  cmd->add_option("--drop-rate", a.train.drop_rate, "Node dropping rate");
  cmd->add_option("--batch", a.train.batch_size, "Batch size");
  cmd->add_option("--lr", a.train.learning_rate, "Adam learning rate");
  cmd->add_option("--steps", pretrain ? a.train.pretrain_steps : a.train.max_steps, "Optimization steps");
  cmd->add_option("--patience", a.train.patience, "Evaluations without improvement before stopping");
  cmd->add_option("--eval-every", a.train.eval_every, "Steps between validation evaluations");
  cmd->add_option("--val-fraction", a.train.val_fraction, "Held-out share of --data");
  cmd->add_option("--seed", a.train.seed, "RNG seed");
}

EmbedderParams<float> initial_embedder(const ContrastiveArgs& a, const Dataset& data) {
  if (!a.init.empty()) return EmbedderParams<float>::load(a.init);
  const int m = a.m_max > 0 ? a.m_max : data.max_nodes();
  return EmbedderParams<float>::init(data.space(m), a.model, a.train.seed);
}

int run_contrastive(const ContrastiveArgs& a, bool pretrain) {
  const Dataset data = load_dataset(a.data);
  auto init = initial_embedder(a, data);
  const auto outputs = padded_outputs(data, init.space.m_max);
  std::vector<ContrastiveMetrics> log;
  const auto params = pretrain ? pretrain_output(outputs, a.train, std::move(init), &log)
                               : train_contrastive(outputs, a.train, std::move(init), &log);
  params.save(a.out);
  write_metrics(a.metrics, log);
  std::cout << "wrote " << a.out << " (" << log.size() << " metric rows)\n";
  return 0;
}

std::vector<TrainingPair> pairs(const Dataset& data, const GraphSpace& space) {
  std::vector<TrainingPair> out;
  for (const auto& r : data.records) {
    if (!r.has_graph) throw InputError("record without a graph in a training file");
    out.push_back({r.input, pad(r.graph, space)});
  }
  return out;
}

void write_predictions(const std::string& path, const LabelAlphabets& alphabets, const std::vector<std::string>& in,
                       const std::vector<Decoded<float>>& decoded) {
  Dataset out;
  out.alphabets = alphabets;
  for (std::size_t i = 0; i < decoded.size(); ++i) out.records.push_back({in[i], decoded[i].graph, true});
  save_dataset(path, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph prediction with learned output embeddings"};
  app.require_subcommand(1);

  // gen-data
  SyntheticConfig gen;
  std::string gen_out, gen_dir;
  int split_train = 2000, split_val = 200, split_test = 500;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic string-to-graph corpus");
  gen_cmd->add_option("--count", gen.count, "Records (single-file mode)");
  gen_cmd->add_option("--m-max", gen.m_max, "Largest node count (2..9)");
  gen_cmd->add_option("--node-labels", gen.node_labels, "Node label count T");
  gen_cmd->add_option("--edge-labels", gen.edge_labels, "Edge label count S, including no-edge");
  gen_cmd->add_option("--extra-edge-prob", gen.extra_edge_probability, "Probability of each non-tree edge");
  gen_cmd->add_option("--max-length", gen.max_length, "Longest serialization");
  gen_cmd->add_flag("--unique", gen.unique, "Draw distinct graphs only");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("--out", gen_out, "Single dataset file");
  gen_cmd->add_option("--out-dir", gen_dir, "Directory for train/val/test.jsonl (distinct graphs)");
  gen_cmd->add_option("--train", split_train, "Training records (with --out-dir)");
  gen_cmd->add_option("--val", split_val, "Validation records (with --out-dir)");
  gen_cmd->add_option("--test", split_test, "Test records (with --out-dir)");
  gen_cmd->callback([&] {
    if (gen_out.empty() == gen_dir.empty()) throw CLI::ValidationError("gen-data", "give exactly one of --out, --out-dir");
  });

  ContrastiveArgs pre, fine;
  auto* pre_cmd = app.add_subcommand("pretrain-output", "Contrastive pre-training on auxiliary output graphs");
  add_contrastive_options(pre_cmd, pre, true);
  auto* train_out_cmd = app.add_subcommand("train-output", "Contrastive training of the output embedder");
  add_contrastive_options(train_out_cmd, fine, false);

  // embed
  std::string embed_ckpt, embed_data, embed_out;
  auto* embed_cmd = app.add_subcommand("embed", "Embed dataset graphs with a trained embedder");
  embed_cmd->add_option("--embedder-ckpt", embed_ckpt)->required();
  embed_cmd->add_option("--data", embed_data)->required();
  embed_cmd->add_option("--out", embed_out, "Named-tensor file with a 'targets' tensor")->required();

  // train-regressor
  std::string reg_data, reg_val, reg_ckpt, reg_out, reg_metrics, reg_cache;
  RegressorConfig reg_model;
  RegressionTrainConfig reg_train;
  auto* reg_cmd = app.add_subcommand("train-regressor", "Fit the input encoder to the output embeddings");
  reg_cmd->add_option("--data", reg_data)->required();
  reg_cmd->add_option("--val", reg_val)->required();
  reg_cmd->add_option("--embedder-ckpt", reg_ckpt)->required();
  reg_cmd->add_option("--out", reg_out)->required();
  reg_cmd->add_option("--metrics", reg_metrics, "Progress CSV (step, train_loss, val_loss)");
  reg_cmd->add_option("--cache-dir", reg_cache, "Directory for cached targets");
  reg_cmd->add_option("--layers", reg_model.layers);
  reg_cmd->add_option("--width", reg_model.width);
  reg_cmd->add_option("--heads", reg_model.heads);
  reg_cmd->add_option("--ffn", reg_model.ffn);
  reg_cmd->add_option("--max-len", reg_model.max_len);
  reg_cmd->add_option("--batch", reg_train.batch_size);
  reg_cmd->add_option("--lr", reg_train.learning_rate);
  reg_cmd->add_option("--steps", reg_train.max_steps);
  reg_cmd->add_option("--eval-every", reg_train.eval_every);
  reg_cmd->add_option("--patience", reg_train.patience);
  reg_cmd->add_option("--seed", reg_train.seed);

  // decode
  std::string dec_inputs, dec_reg, dec_emb, dec_cands, dec_out, dec_trace, dec_strategy = "candidate";
  double dec_ratio = 1.0;
  bool dec_last = false;
  DecodeOptions dec;
  auto* dec_cmd = app.add_subcommand("decode", "Predict graphs for input strings");
  dec_cmd->add_option("--input-data", dec_inputs, "Dataset whose inputs are decoded")->required();
  dec_cmd->add_option("--regressor-ckpt", dec_reg)->required();
  dec_cmd->add_option("--embedder-ckpt", dec_emb)->required();
  dec_cmd->add_option("--candidates", dec_cands, "Candidate graphs, normally the training set")->required();
  dec_cmd->add_option("--ratio", dec_ratio, "Share of candidates kept, drawn with --seed");
  dec_cmd->add_option("--strategy", dec_strategy)->check(CLI::IsMember({"candidate", "pgd-random", "pgd-best"}));
  dec_cmd->add_option("--eta", dec.pgd.step_size, "PGD step size");
  dec_cmd->add_option("--steps", dec.pgd.steps, "PGD steps");
  dec_cmd->add_flag("--last-iterate", dec_last, "Return the final PGD iterate instead of the best");
  dec_cmd->add_option("--seed", dec.seed);
  dec_cmd->add_option("--out", dec_out, "Predictions (dataset JSONL)")->required();
  dec_cmd->add_option("--trace", dec_trace, "Per-iteration objective CSV");

  // evaluate
  std::string ev_pred, ev_ref, ev_out;
  bool ev_unlabeled = false;
  auto* ev_cmd = app.add_subcommand("evaluate", "Graph edit distance between predictions and references");
  ev_cmd->add_option("--predictions", ev_pred)->required();
  ev_cmd->add_option("--references", ev_ref)->required();
  ev_cmd->add_flag("--no-edge-labels", ev_unlabeled, "Compare edges as present or absent");
  ev_cmd->add_option("--out", ev_out, "Per-example CSV (index, ged)");

  // run-experiment
  std::string exp_config, exp_out = "experiment-out";
  auto* exp_cmd = app.add_subcommand("run-experiment", "Full pipeline over seeds, strategies and candidate ratios");
  exp_cmd->add_option("--config", exp_config, "experiment.toml")->required();
  exp_cmd->add_option("--out", exp_out, "Report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      if (!gen_out.empty()) {
        save_dataset(gen_out, gen_synthetic_corpus(gen));
        std::cout << "wrote " << gen.count << " records to " << gen_out << "\n";
      } else {
        ExperimentConfig c;
        c.corpus = gen;
        c.corpus.unique = true;
        c.train_size = split_train;
        c.val_size = split_val;
        c.test_size = split_test;
        const Splits s = make_splits(c, gen.seed);
        std::filesystem::create_directories(gen_dir);
        save_dataset(gen_dir + "/train.jsonl", s.train);
        save_dataset(gen_dir + "/val.jsonl", s.val);
        save_dataset(gen_dir + "/test.jsonl", s.test);
        std::cout << "wrote train/val/test to " << gen_dir << "\n";
      }
    } else if (*pre_cmd) {
      return run_contrastive(pre, true);
    } else if (*train_out_cmd) {
      return run_contrastive(fine, false);
    } else if (*embed_cmd) {
      const auto emb = EmbedderParams<float>::load(embed_ckpt);
      const Dataset data = load_dataset(embed_data);
      TensorFile f;
      f.metadata() = {{"kind", "targets"}, {"embedder_checksum", emb.checksum()}};
      f.put("targets", embed_padded(padded_outputs(data, emb.space.m_max), emb));
      f.save(embed_out);
      std::cout << "wrote " << data.records.size() << " embeddings to " << embed_out << "\n";
    } else if (*reg_cmd) {
      const auto emb = EmbedderParams<float>::load(reg_ckpt);
      const Dataset train = load_dataset(reg_data);
      const Dataset val = load_dataset(reg_val);
      reg_model.dim = emb.config.dim;
      auto init = RegressorParams<float>::init(Vocabulary::build(inputs(train)), reg_model, reg_train.seed);
      std::vector<RegressionMetrics> log;
      const auto params = train_regressor(pairs(train, emb.space), pairs(val, emb.space), emb, reg_train,
                                          std::move(init), &log, reg_cache);
      params.save(reg_out);
      write_metrics(reg_metrics, log);
      std::cout << "wrote " << reg_out << " (" << log.size() << " metric rows)\n";
    } else if (*dec_cmd) {
      const auto emb = EmbedderParams<float>::load(dec_emb);
      const auto reg = RegressorParams<float>::load(dec_reg);
      const Dataset cands = load_dataset(dec_cands);
      const Dataset data = load_dataset(dec_inputs);
      auto index = CandidateIndex<float>::build(padded_outputs(cands, emb.space.m_max), emb);
      if (dec_ratio < 1.0) index = index.subset(candidate_subset(index.size(), dec_ratio, dec.seed));
      dec.strategy = parse_strategy(dec_strategy);
      dec.pgd.track_best = !dec_last;
      dec.keep_trace = !dec_trace.empty();
      const auto in = inputs(data);
      const auto decoded = decode(in, reg, emb, index, dec);
      write_predictions(dec_out, cands.alphabets, in, decoded);
      if (!dec_trace.empty()) {
        auto f = open_out(dec_trace);
        f << "example,iteration,objective\n";
        char line[96];
        for (std::size_t i = 0; i < decoded.size(); ++i) {
          for (std::size_t t = 0; t < decoded[i].trace.size(); ++t) {
            std::snprintf(line, sizeof line, "%zu,%zu,%.9g\n", i, t, static_cast<double>(decoded[i].trace[t]));
            f << line;
          }
        }
      }
      std::cout << "decoded " << decoded.size() << " inputs with " << dec_strategy << " (" << index.size()
                << " candidates)\n";
    } else if (*ev_cmd) {
      const Dataset pred = load_dataset(ev_pred);
      const Dataset ref = load_dataset(ev_ref);
      if (!(pred.alphabets == ref.alphabets)) throw InputError("evaluate: label alphabets differ between files");
      std::vector<VariableGraph> p, r;
      for (const auto& x : pred.records) p.push_back(x.graph);
      for (const auto& x : ref.records) r.push_back(x.graph);
      EditCosts costs;
      costs.use_edge_labels = !ev_unlabeled;
      const auto m = evaluate(p, r, costs);
      std::printf("examples %zu\nmean_ged %.6f\nstd_ged %.6f\nperfect %zu\n", m.count, m.mean_ged, m.std_ged,
                  m.perfect);
      if (!ev_out.empty()) {
        auto f = open_out(ev_out);
        f << "index,ged\n";
        for (std::size_t i = 0; i < m.per_example.size(); ++i) f << i << ',' << m.per_example[i] << '\n';
      }
    } else if (*exp_cmd) {
      const auto config = ExperimentConfig::load(exp_config);
      const auto report = run_experiment(config, &std::cerr);
      report.save(exp_out);
      report.write_text(std::cout);
    }
  } catch (const TrainingError& e) {
    std::cerr << "training failed at step " << e.step() << ": " << e.what() << "\n";
    return 3;
  } catch (const DecodeError& e) {
    std::cerr << "decoding failed at iteration " << e.iteration() << ": " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
