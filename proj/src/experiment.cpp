#include "ele/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "ele/errors.hpp"
#include "ele/evaluation.hpp"
#include "ele/toml_config.hpp"

namespace ele {
namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_ratio(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Reads the keys of one table into fields, rejecting anything it does not know.
class TableReader {
 public:
  TableReader(const nlohmann::json& tree, std::string name) : name_(std::move(name)) {
    if (tree.contains(name_)) {
      table_ = tree.at(name_);
      if (!table_.is_object()) throw ConfigError("config: [" + name_ + "] must be a table");
    } else {
      table_ = nlohmann::json::object();
    }
  }

  template <typename T>
  void read(const std::string& key, T& field) {
    seen_.insert(key);
    if (!table_.contains(key)) return;
    try {
      field = table_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, _] : table_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  nlohmann::json table_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: at least one seed required");
  if (train_size < 2 || val_size < 1 || test_size < 1) throw ConfigError("experiment: split sizes too small");
  if (pretrain_size < 0) throw ConfigError("experiment: pretrain size must be non-negative");
  if (ratios.empty() || strategies.empty()) throw ConfigError("experiment: ratios and strategies must be non-empty");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("experiment: candidate ratios must lie in (0, 1]");
  }
  SyntheticConfig c = corpus;
  c.count = train_size + val_size + test_size;
  c.validate();
  embedder.validate();
  contrastive.validate();
  regressor.validate();
  regression.validate();
  pgd.validate();
  if (regressor.max_len < corpus.max_length) throw ConfigError("experiment: regressor max_len below corpus max_length");
  if (regressor.dim != embedder.dim) throw ConfigError("experiment: regressor and embedder dimensions differ");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& tree) {
  if (!tree.is_object()) throw ConfigError("config: top level must be a table");
  ExperimentConfig c;
  static const std::set<std::string> tables{"data", "embedder", "contrastive", "regressor", "regression", "decode"};
  for (const auto& [key, value] : tree.items()) {
    if (tables.count(key)) continue;
    try {
      if (key == "seeds") {
        c.seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "ratios") {
        c.ratios = value.get<std::vector<double>>();
      } else if (key == "strategies") {
        c.strategies.clear();
        for (const auto& s : value) c.strategies.push_back(parse_strategy(s.get<std::string>()));
      } else if (key == "cache_dir") {
        c.cache_dir = value.get<std::string>();
      } else {
        throw ConfigError("config: unknown key " + key);
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: " + key + " has the wrong type");
    }
  }

  TableReader data(tree, "data");
  data.read("train", c.train_size);
  data.read("val", c.val_size);
  data.read("test", c.test_size);
  data.read("pretrain", c.pretrain_size);
  data.read("m_max", c.corpus.m_max);
  data.read("node_labels", c.corpus.node_labels);
  data.read("edge_labels", c.corpus.edge_labels);
  data.read("extra_edge_probability", c.corpus.extra_edge_probability);
  data.read("max_length", c.corpus.max_length);
  data.read("unique", c.corpus.unique);
  data.finish();

  TableReader emb(tree, "embedder");
  emb.read("layers", c.embedder.layers);
  emb.read("hidden", c.embedder.hidden);
  emb.read("dim", c.embedder.dim);
  emb.finish();

  TableReader con(tree, "contrastive");
  con.read("temperature", c.contrastive.temperature);
  con.read("epsilon", c.contrastive.epsilon);
  con.read("drop_rate", c.contrastive.drop_rate);
  con.read("batch_size", c.contrastive.batch_size);
  con.read("learning_rate", c.contrastive.learning_rate);
  con.read("max_steps", c.contrastive.max_steps);
  con.read("pretrain_steps", c.contrastive.pretrain_steps);
  con.read("patience", c.contrastive.patience);
  con.read("eval_every", c.contrastive.eval_every);
  con.read("val_fraction", c.contrastive.val_fraction);
  con.finish();

  TableReader reg(tree, "regressor");
  reg.read("layers", c.regressor.layers);
  reg.read("width", c.regressor.width);
  reg.read("heads", c.regressor.heads);
  reg.read("ffn", c.regressor.ffn);
  reg.read("dim", c.regressor.dim);
  reg.read("max_len", c.regressor.max_len);
  reg.finish();

  TableReader tr(tree, "regression");
  tr.read("batch_size", c.regression.batch_size);
  tr.read("learning_rate", c.regression.learning_rate);
  tr.read("max_steps", c.regression.max_steps);
  tr.read("eval_every", c.regression.eval_every);
  tr.read("patience", c.regression.patience);
  tr.finish();

  TableReader dec(tree, "decode");
  dec.read("step_size", c.pgd.step_size);
  dec.read("steps", c.pgd.steps);
  dec.read("track_best", c.pgd.track_best);
  dec.finish();

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) { return from_json(load_toml(path)); }

Splits make_splits(const ExperimentConfig& config, std::uint64_t seed) {
  SyntheticConfig corpus = config.corpus;
  corpus.count = config.train_size + config.val_size + config.test_size;
  corpus.seed = derive(seed, 0);
  Dataset all = gen_synthetic_corpus(corpus);
  Splits s;
  s.space = all.space(config.corpus.m_max);
  s.train.alphabets = s.val.alphabets = s.test.alphabets = all.alphabets;
  auto it = all.records.begin();
  s.train.records.assign(it, it + config.train_size);
  it += config.train_size;
  s.val.records.assign(it, it + config.val_size);
  it += config.val_size;
  s.test.records.assign(it, all.records.end());
  return s;
}

TrainedModels train_models(const ExperimentConfig& config, const Splits& splits, std::uint64_t seed) {
  TrainedModels m;
  const auto train_out = padded_outputs(splits.train, splits.space.m_max);
  auto embedder = EmbedderParams<float>::init(splits.space, config.embedder, derive(seed, 1));

  ContrastiveConfig con = config.contrastive;
  if (config.pretrain_size > 0 && con.pretrain_steps > 0) {
    SyntheticConfig aux = config.corpus;
    aux.count = config.pretrain_size;
    aux.seed = derive(seed, 2);
    con.seed = derive(seed, 3);
    embedder = pretrain_output(padded_outputs(gen_synthetic_corpus(aux), splits.space.m_max), con,
                               std::move(embedder));
  }
  con.seed = derive(seed, 4);
  m.embedder = train_contrastive(train_out, con, std::move(embedder), &m.contrastive_log);

  std::vector<TrainingPair> train_pairs, val_pairs;
  for (const auto& r : splits.train.records) train_pairs.push_back({r.input, pad(r.graph, splits.space)});
  for (const auto& r : splits.val.records) val_pairs.push_back({r.input, pad(r.graph, splits.space)});
  const Vocabulary vocab = Vocabulary::build(inputs(splits.train));
  RegressionTrainConfig rc = config.regression;
  rc.seed = derive(seed, 6);
  m.regressor = train_regressor(train_pairs, val_pairs, m.embedder, rc,
                                RegressorParams<float>::init(vocab, config.regressor, derive(seed, 5)),
                                &m.regression_log, config.cache_dir);
  return m;
}

std::vector<std::size_t> candidate_subset(std::size_t n, double ratio, std::uint64_t seed) {
  if (n == 0) throw ContractError("candidate_subset: empty pool");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("candidate_subset: ratio must lie in (0, 1]");
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))), 1, n);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (k == n) return rows;
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* progress) {
  config.validate();
  ExperimentReport report;
  EditCosts labeled, unlabeled;
  unlabeled.use_edge_labels = false;

  for (const std::uint64_t seed : config.seeds) {
    if (progress) *progress << "seed " << seed << ": generating corpus and training models\n" << std::flush;
    const Splits splits = make_splits(config, seed);
    const TrainedModels models = train_models(config, splits, seed);

    std::vector<VariableGraph> train_refs, test_refs;
    for (const auto& r : splits.train.records) train_refs.push_back(r.graph);
    for (const auto& r : splits.test.records) test_refs.push_back(r.graph);
    const auto index = CandidateIndex<float>::build(padded_outputs(splits.train, splits.space.m_max), models.embedder);
    const Matrix<float> z_train = regress_batch(inputs(splits.train), models.regressor);
    const Matrix<float> z_test = regress_batch(inputs(splits.test), models.regressor);

    SeedResult sr;
    sr.seed = seed;
    DecodeOptions select;
    auto graphs = [](const std::vector<Decoded<float>>& d) {
      std::vector<VariableGraph> out;
      for (const auto& x : d) out.push_back(x.graph);
      return out;
    };
    sr.train_ged = evaluate(graphs(decode_embeddings(z_train, models.embedder, index, select)), train_refs).mean_ged;
    sr.test_ged = evaluate(graphs(decode_embeddings(z_test, models.embedder, index, select)), test_refs).mean_ged;
    sr.baseline_ged = evaluate(std::vector<VariableGraph>(test_refs.size(), modal_graph(train_refs)), test_refs).mean_ged;
    auto best_val = [](const auto& log) {
      double best = NAN;
      for (const auto& e : log) {
        if (std::isnan(best) || e.val_loss < best) best = e.val_loss;
      }
      return best;
    };
    sr.contrastive_val_loss = best_val(models.contrastive_log);
    sr.regression_val_loss = best_val(models.regression_log);
    report.seeds.push_back(sr);
    if (progress) {
      *progress << "seed " << seed << ": train GED " << fmt(sr.train_ged, 4) << ", test GED " << fmt(sr.test_ged, 4)
                << ", modal baseline " << fmt(sr.baseline_ged, 4) << "\n"
                << std::flush;
    }

    for (std::size_t ri = 0; ri < config.ratios.size(); ++ri) {
      const double ratio = config.ratios[ri];
      const auto sub = index.subset(candidate_subset(index.size(), ratio, derive(seed, 100 + ri)));
      for (std::size_t si = 0; si < config.strategies.size(); ++si) {
        CellResult cell;
        cell.seed = seed;
        cell.strategy = config.strategies[si];
        cell.ratio = ratio;
        cell.candidates = sub.size();
        try {
          DecodeOptions opt;
          opt.strategy = cell.strategy;
          opt.pgd = config.pgd;
          opt.seed = derive(seed, 200 + ri * 16 + si);
          const auto decoded = decode_embeddings(z_test, models.embedder, sub, opt);
          const auto preds = graphs(decoded);
          const auto m = evaluate(preds, test_refs, labeled);
          cell.mean_ged = m.mean_ged;
          cell.std_ged = m.std_ged;
          cell.perfect = m.perfect;
          cell.mean_ged_unlabeled = evaluate(preds, test_refs, unlabeled).mean_ged;
          double objective = 0.0;
          for (const auto& d : decoded) objective += static_cast<double>(d.objective);
          cell.mean_objective = objective / static_cast<double>(decoded.size());
        } catch (const std::exception& e) {
          cell.error = e.what();
          cell.mean_ged = cell.std_ged = cell.mean_ged_unlabeled = cell.mean_objective = NAN;
        }
        if (progress) {
          *progress << "  " << strategy_name(cell.strategy) << " ratio " << fmt_ratio(ratio) << ": GED "
                    << fmt(cell.mean_ged, 4) << ", perfect " << cell.perfect << ", objective "
                    << fmt(cell.mean_objective, 4) << (cell.error.empty() ? "" : " [failed: " + cell.error + "]")
                    << "\n"
                    << std::flush;
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

void ExperimentReport::write_grid(std::ostream& out) const {
  out << "seed,strategy,ratio,mean_ged,perfect_count,mean_objective\n";
  for (const auto& c : cells) {
    out << c.seed << ',' << strategy_name(c.strategy) << ',' << fmt_ratio(c.ratio) << ',' << fmt(c.mean_ged) << ','
        << (c.error.empty() ? std::to_string(c.perfect) : "nan") << ',' << fmt(c.mean_objective) << '\n';
  }
}

void ExperimentReport::write_seeds(std::ostream& out) const {
  out << "seed,train_ged,test_ged,baseline_ged,contrastive_val_loss,regression_val_loss\n";
  for (const auto& s : seeds) {
    out << s.seed << ',' << fmt(s.train_ged) << ',' << fmt(s.test_ged) << ',' << fmt(s.baseline_ged) << ','
        << fmt(s.contrastive_val_loss) << ',' << fmt(s.regression_val_loss) << '\n';
  }
}

namespace {

struct Aggregate {
  std::vector<double> ged, unlabeled, perfect, objective;
  std::size_t candidates = 0;
  std::size_t failures = 0;
};

// Keyed by (ratio, strategy) in first-seen order of the grid.
std::vector<std::pair<std::pair<double, DecodeStrategy>, Aggregate>> aggregate(const std::vector<CellResult>& cells) {
  std::vector<std::pair<std::pair<double, DecodeStrategy>, Aggregate>> out;
  for (const auto& c : cells) {
    auto key = std::make_pair(c.ratio, c.strategy);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == key; });
    if (it == out.end()) {
      out.push_back({key, {}});
      it = out.end() - 1;
    }
    auto& a = it->second;
    a.candidates = c.candidates;
    if (!c.error.empty()) {
      ++a.failures;
      continue;
    }
    a.ged.push_back(c.mean_ged);
    a.unlabeled.push_back(c.mean_ged_unlabeled);
    a.perfect.push_back(static_cast<double>(c.perfect));
    a.objective.push_back(c.mean_objective);
  }
  return out;
}

double mean_or_nan(const std::vector<double>& v) { return v.empty() ? NAN : mean_std(v).mean; }
double std_or_nan(const std::vector<double>& v) { return v.empty() ? NAN : mean_std(v).std; }

}  // namespace

void ExperimentReport::write_summary(std::ostream& out) const {
  out << "strategy,ratio,seeds,failures,ged_mean,ged_std,ged_unlabeled_mean,ged_unlabeled_std,perfect_mean,"
         "perfect_std,objective_mean,objective_std\n";
  for (const auto& [key, a] : aggregate(cells)) {
    out << strategy_name(key.second) << ',' << fmt_ratio(key.first) << ',' << a.ged.size() << ',' << a.failures << ','
        << fmt(mean_or_nan(a.ged)) << ',' << fmt(std_or_nan(a.ged)) << ',' << fmt(mean_or_nan(a.unlabeled)) << ','
        << fmt(std_or_nan(a.unlabeled)) << ',' << fmt(mean_or_nan(a.perfect)) << ',' << fmt(std_or_nan(a.perfect))
        << ',' << fmt(mean_or_nan(a.objective)) << ',' << fmt(std_or_nan(a.objective)) << '\n';
  }
}

void ExperimentReport::write_plot(std::ostream& out, bool perfect) const {
  const auto agg = aggregate(cells);
  std::vector<double> ratios;
  std::vector<DecodeStrategy> strategies;
  for (const auto& [key, _] : agg) {
    if (std::find(ratios.begin(), ratios.end(), key.first) == ratios.end()) ratios.push_back(key.first);
    if (std::find(strategies.begin(), strategies.end(), key.second) == strategies.end()) strategies.push_back(key.second);
  }
  std::sort(ratios.begin(), ratios.end());
  out << "ratio";
  for (auto s : strategies) out << ',' << strategy_name(s);
  out << '\n';
  for (double r : ratios) {
    out << fmt_ratio(r);
    for (auto s : strategies) {
      auto it = std::find_if(agg.begin(), agg.end(), [&](const auto& e) { return e.first == std::make_pair(r, s); });
      out << ',' << (it == agg.end() ? "nan" : fmt(mean_or_nan(perfect ? it->second.perfect : it->second.ged)));
    }
    out << '\n';
  }
}

void ExperimentReport::write_text(std::ostream& out) const {
  out << "Per-seed training summary (candidate selection over all training outputs)\n";
  out << "  seed  train GED  test GED  modal baseline\n";
  for (const auto& s : seeds) {
    char line[160];
    std::snprintf(line, sizeof line, "  %4llu  %9.4f  %8.4f  %14.4f\n", static_cast<unsigned long long>(s.seed),
                  s.train_ged, s.test_ged, s.baseline_ged);
    out << line;
  }
  out << "\nTest set, mean +/- population std across seeds\n";
  out << "  strategy      ratio  candidates  GED (labels)      GED (no labels)   perfect          objective\n";
  for (const auto& [key, a] : aggregate(cells)) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-12s %6s  %10zu  %7.3f +/- %5.3f  %7.3f +/- %5.3f  %6.1f +/- %5.1f  %7.4f%s\n",
                  strategy_name(key.second).c_str(), fmt_ratio(key.first).c_str(), a.candidates, mean_or_nan(a.ged),
                  std_or_nan(a.ged), mean_or_nan(a.unlabeled), std_or_nan(a.unlabeled), mean_or_nan(a.perfect),
                  std_or_nan(a.perfect), mean_or_nan(a.objective),
                  a.failures ? (" (" + std::to_string(a.failures) + " failed)").c_str() : "");
    out << line;
  }
  out << "\nPublished full-scale reference, test GED (not reproduced at this scale; orientation only)\n"
         "  method                                   no edge labels    with edge labels\n"
         "  candidate selection                      2.305 +/- 0.033   2.444 +/- 0.039\n"
         "  with output pre-training                 2.164 +/- 0.058   2.291 +/- 0.083\n"
         "  with output pre-training + PGD decoding  2.131 +/- 0.075   2.252 +/- 0.102\n";
}

void ExperimentReport::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("grid.csv");
    write_grid(f);
  }
  {
    auto f = open("seeds.csv");
    write_seeds(f);
  }
  {
    auto f = open("summary.csv");
    write_summary(f);
  }
  {
    auto f = open("plot_ged.csv");
    write_plot(f, false);
  }
  {
    auto f = open("plot_perfect.csv");
    write_plot(f, true);
  }
  {
    auto f = open("report.txt");
    write_text(f);
  }
}

}  // namespace ele
