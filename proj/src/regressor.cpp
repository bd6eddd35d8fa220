#include "ele/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ele/errors.hpp"
#include "ele/optim.hpp"

namespace ele {

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
  std::sort(symbols_.begin(), symbols_.end());
  symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
  std::string all;
  for (const auto& s : corpus) all += s;
  return Vocabulary(std::move(all));
}

int Vocabulary::id(char c) const {
  auto it = std::lower_bound(symbols_.begin(), symbols_.end(), c);
  if (it == symbols_.end() || *it != c) throw InputError(std::string("unknown character '") + c + "'");
  return static_cast<int>(it - symbols_.begin()) + 2;
}

TokenizedSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  if (static_cast<int>(text.size()) > max_len) {
    throw InputError("input of length " + std::to_string(text.size()) + " exceeds max length " +
                     std::to_string(max_len));
  }
  TokenizedSequence seq;
  seq.ids.assign(max_len + 1, Vocabulary::kPad);
  seq.mask.assign(max_len + 1, 0);
  seq.ids[0] = Vocabulary::kStart;
  seq.mask[0] = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    seq.ids[i + 1] = vocab.id(text[i]);
    seq.mask[i + 1] = 1;
  }
  return seq;
}

void RegressorConfig::validate() const {
  if (layers < 0) throw ConfigError("encoder layer count must be non-negative");
  if (width < 1 || ffn < 1 || dim < 1 || max_len < 0) throw ConfigError("encoder sizes must be positive");
  if (heads < 1 || width % heads != 0) throw ConfigError("head count must divide the encoder width");
}

void RegressionTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("regression batch size must be positive");
  if (learning_rate < 0) throw ConfigError("learning rate must be non-negative");
  if (max_steps < 0 || eval_every < 1 || patience < 1) throw ConfigError("invalid regression schedule");
}

namespace {

template <typename Scalar>
Matrix<Scalar> glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
  }
  return m;
}

template <typename Scalar>
Matrix<Scalar> row_of(Eigen::Index n, Scalar v) {
  return Matrix<Scalar>::Constant(1, n, v);
}

template <typename Scalar>
std::vector<std::pair<std::string, Matrix<Scalar>*>> named(RegressorParams<Scalar>& p) {
  std::vector<std::pair<std::string, Matrix<Scalar>*>> out;
  out.emplace_back("token_embedding", &p.token_embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "encoder." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1.gain", &L.ln1_gain);
    out.emplace_back(pre + "ln1.bias", &L.ln1_bias);
    out.emplace_back(pre + "attn.query", &L.query);
    out.emplace_back(pre + "attn.key", &L.key);
    out.emplace_back(pre + "attn.value", &L.value);
    out.emplace_back(pre + "attn.out", &L.out);
    out.emplace_back(pre + "attn.out_bias", &L.out_bias);
    out.emplace_back(pre + "ln2.gain", &L.ln2_gain);
    out.emplace_back(pre + "ln2.bias", &L.ln2_bias);
    out.emplace_back(pre + "ff1.weight", &L.ff1);
    out.emplace_back(pre + "ff1.bias", &L.ff1_bias);
    out.emplace_back(pre + "ff2.weight", &L.ff2);
    out.emplace_back(pre + "ff2.bias", &L.ff2_bias);
  }
  out.emplace_back("final_ln.gain", &p.final_gain);
  out.emplace_back("final_ln.bias", &p.final_bias);
  out.emplace_back("projection.weight", &p.projection);
  out.emplace_back("projection.bias", &p.projection_bias);
  return out;
}

}  // namespace

template <typename Scalar>
RegressorParams<Scalar> RegressorParams<Scalar>::init(const Vocabulary& vocab, const RegressorConfig& config,
                                                      std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int w = config.width;
  RegressorParams p;
  p.config = config;
  p.vocab = vocab;
  p.token_embedding = glorot<Scalar>(vocab.size(), w, rng);
  for (int l = 0; l < config.layers; ++l) {
    EncoderLayer<Scalar> L;
    L.ln1_gain = row_of<Scalar>(w, 1);
    L.ln1_bias = row_of<Scalar>(w, 0);
    L.query = glorot<Scalar>(w, w, rng);
    L.key = glorot<Scalar>(w, w, rng);
    L.value = glorot<Scalar>(w, w, rng);
    L.out = glorot<Scalar>(w, w, rng);
    L.out_bias = row_of<Scalar>(w, 0);
    L.ln2_gain = row_of<Scalar>(w, 1);
    L.ln2_bias = row_of<Scalar>(w, 0);
    L.ff1 = glorot<Scalar>(w, config.ffn, rng);
    L.ff1_bias = row_of<Scalar>(config.ffn, 0);
    L.ff2 = glorot<Scalar>(config.ffn, w, rng);
    L.ff2_bias = row_of<Scalar>(w, 0);
    p.layers.push_back(std::move(L));
  }
  p.final_gain = row_of<Scalar>(w, 1);
  p.final_bias = row_of<Scalar>(w, 0);
  p.projection = glorot<Scalar>(w, config.dim, rng);
  p.projection_bias = row_of<Scalar>(config.dim, 0);
  return p;
}

template <typename Scalar>
std::vector<Matrix<Scalar>*> RegressorParams<Scalar>::parameters() {
  std::vector<Matrix<Scalar>*> out;
  for (auto& [_, m] : named(*this)) out.push_back(m);
  return out;
}

template <typename Scalar>
std::vector<const Matrix<Scalar>*> RegressorParams<Scalar>::parameters() const {
  std::vector<const Matrix<Scalar>*> out;
  for (auto* m : const_cast<RegressorParams*>(this)->parameters()) out.push_back(m);
  return out;
}

template <typename Scalar>
void RegressorParams<Scalar>::validate() const {
  config.validate();
  const Eigen::Index w = config.width, f = config.ffn;
  auto expect = [](const Matrix<Scalar>& m, Eigen::Index r, Eigen::Index c, const char* what) {
    if (m.rows() != r || m.cols() != c) throw ShapeError(std::string("regressor ") + what + " has the wrong shape");
    if (!m.allFinite()) throw ValidationError(std::string("regressor ") + what + " is not finite");
  };
  expect(token_embedding, vocab.size(), w, "token embedding");
  if (static_cast<int>(layers.size()) != config.layers) throw ShapeError("regressor layer count mismatch");
  for (const auto& L : layers) {
    expect(L.ln1_gain, 1, w, "ln1 gain");
    expect(L.ln1_bias, 1, w, "ln1 bias");
    expect(L.query, w, w, "query");
    expect(L.key, w, w, "key");
    expect(L.value, w, w, "value");
    expect(L.out, w, w, "attention output");
    expect(L.out_bias, 1, w, "attention output bias");
    expect(L.ln2_gain, 1, w, "ln2 gain");
    expect(L.ln2_bias, 1, w, "ln2 bias");
    expect(L.ff1, w, f, "ff1");
    expect(L.ff1_bias, 1, f, "ff1 bias");
    expect(L.ff2, f, w, "ff2");
    expect(L.ff2_bias, 1, w, "ff2 bias");
  }
  expect(final_gain, 1, w, "final gain");
  expect(final_bias, 1, w, "final bias");
  expect(projection, w, config.dim, "projection");
  expect(projection_bias, 1, config.dim, "projection bias");
}

template <typename Scalar>
TensorFile RegressorParams<Scalar>::to_file() const {
  validate();
  TensorFile file;
  file.metadata() = {{"kind", "regressor"},      {"layers", config.layers}, {"width", config.width},
                     {"heads", config.heads},    {"ffn", config.ffn},       {"dim", config.dim},
                     {"max_len", config.max_len}, {"vocab", vocab.symbols()}};
  for (auto& [name, m] : named(const_cast<RegressorParams&>(*this))) file.put(name, *m);
  return file;
}

template <typename Scalar>
RegressorParams<Scalar> RegressorParams<Scalar>::from_file(const TensorFile& file) {
  const auto& meta = file.metadata();
  if (meta.value("kind", "") != "regressor") throw InputError("not a regressor checkpoint");
  RegressorParams p;
  p.config = RegressorConfig{meta.at("layers").get<int>(), meta.at("width").get<int>(), meta.at("heads").get<int>(),
                             meta.at("ffn").get<int>(),    meta.at("dim").get<int>(),   meta.at("max_len").get<int>()};
  p.vocab = Vocabulary(meta.at("vocab").get<std::string>());
  p.layers.resize(p.config.layers);
  for (auto& [name, m] : named(p)) *m = file.get<Scalar>(name).to_matrix();
  p.validate();
  return p;
}

template <typename Scalar>
Matrix<Scalar> positional_encoding(int positions, int width) {
  Matrix<Scalar> pe(positions, width);
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(width));
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  }
  return pe;
}

template <typename Scalar>
ad::Var<Scalar> regress_vars(ad::Tape<Scalar>& tape, const RegressorParams<Scalar>& params,
                             const std::vector<std::string>& batch, bool track,
                             std::vector<ad::Var<Scalar>>* tracked, Scalar norm_eps) {
  if (batch.empty()) throw ContractError("regress: empty batch");
  const auto& cfg = params.config;
  const int L = cfg.max_len + 1;
  const int n = static_cast<int>(batch.size());
  std::vector<int> ids;
  std::vector<char> mask;
  ids.reserve(static_cast<std::size_t>(n) * L);
  for (const auto& text : batch) {
    auto seq = tokenize(text, params.vocab, cfg.max_len);
    ids.insert(ids.end(), seq.ids.begin(), seq.ids.end());
    mask.insert(mask.end(), seq.mask.begin(), seq.mask.end());
  }

  auto place = [&](const Matrix<Scalar>& m) {
    auto v = track ? tape.variable(m) : tape.constant(m);
    if (tracked && track) tracked->push_back(v);
    return v;
  };
  // Binding order matches RegressorParams::parameters().
  auto table = place(params.token_embedding);
  auto x = ad::add(ad::gather_rows(table, ids),
                   tape.constant(positional_encoding<Scalar>(L, cfg.width).replicate(n, 1)));
  for (const auto& layer : params.layers) {
    auto ln1_g = place(layer.ln1_gain);
    auto ln1_b = place(layer.ln1_bias);
    auto wq = place(layer.query);
    auto wk = place(layer.key);
    auto wv = place(layer.value);
    auto wo = place(layer.out);
    auto bo = place(layer.out_bias);
    auto ln2_g = place(layer.ln2_gain);
    auto ln2_b = place(layer.ln2_bias);
    auto w1 = place(layer.ff1);
    auto b1 = place(layer.ff1_bias);
    auto w2 = place(layer.ff2);
    auto b2 = place(layer.ff2_bias);

    auto h = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm_rows(x), ln1_g), ln1_b);
    auto attn = ad::attention(ad::matmul(h, wq), ad::matmul(h, wk), ad::matmul(h, wv), L, cfg.heads, mask);
    x = ad::add(x, ad::add_rowvec(ad::matmul(attn, wo), bo));
    auto h2 = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm_rows(x), ln2_g), ln2_b);
    auto ff = ad::add_rowvec(ad::matmul(ad::relu(ad::add_rowvec(ad::matmul(h2, w1), b1)), w2), b2);
    x = ad::add(x, ff);
  }
  auto fg = place(params.final_gain);
  auto fb = place(params.final_bias);
  auto proj = place(params.projection);
  auto proj_b = place(params.projection_bias);
  std::vector<int> starts(n);
  for (int b = 0; b < n; ++b) starts[b] = b * L;
  auto pooled = ad::gather_rows(x, starts);
  auto normed = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm_rows(pooled), fg), fb);
  auto u = ad::add_rowvec(ad::matmul(normed, proj), proj_b);
  return ad::normalize_rows(u, norm_eps);
}

template <typename Scalar>
Matrix<Scalar> regress_batch(const std::vector<std::string>& texts, const RegressorParams<Scalar>& params, int chunk) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(texts.size()), params.config.dim);
  for (std::size_t start = 0; start < texts.size(); start += chunk) {
    const std::size_t end = std::min(texts.size(), start + static_cast<std::size_t>(chunk));
    std::vector<std::string> part(texts.begin() + start, texts.begin() + end);
    ad::Tape<Scalar> tape(false);
    out.middleRows(start, end - start) = regress_vars<Scalar>(tape, params, part, false, nullptr).value();
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> regress(const std::string& text, const RegressorParams<Scalar>& params) {
  return regress_batch<Scalar>({text}, params).row(0).transpose();
}

template <typename Scalar>
Scalar surrogate_loss(const Vector<Scalar>& h, const Vector<Scalar>& z) {
  if (h.size() != z.size()) throw ShapeError("surrogate_loss: dimension mismatch");
  return Scalar(2) - Scalar(2) * h.dot(z);
}

template <typename Scalar>
ad::Var<Scalar> surrogate_loss(const ad::Var<Scalar>& predictions, const ad::Var<Scalar>& targets) {
  auto dots = ad::sum_rows(ad::mul(predictions, targets));
  return ad::mean(ad::add_scalar(ad::scale(dots, Scalar(-2)), Scalar(2)));
}

template <typename Scalar>
Matrix<Scalar> output_targets(const std::vector<PaddedGraph>& outputs, const EmbedderParams<Scalar>& embedder,
                              const std::string& cache_dir) {
  if (cache_dir.empty()) return embed_padded(outputs, embedder);
  std::uint64_t key = embedder.checksum();
  for (const auto& g : outputs) {
    key = fnv1a(g.nodes.data(), g.nodes.size() * sizeof(int), key);
    key = fnv1a(g.edges.data(), static_cast<std::size_t>(g.edges.size()) * sizeof(int), key);
  }
  std::ostringstream name;
  name << "targets-" << std::hex << key << ".tensors";
  const auto path = std::filesystem::path(cache_dir) / name.str();
  if (std::filesystem::exists(path)) {
    auto cached = TensorFile::load(path.string()).get<Scalar>("targets").to_matrix();
    if (cached.rows() == static_cast<Eigen::Index>(outputs.size())) return cached;
  }
  Matrix<Scalar> targets = embed_padded(outputs, embedder);
  std::filesystem::create_directories(cache_dir);
  TensorFile file;
  file.metadata() = {{"kind", "targets"}, {"key", name.str()}};
  file.put("targets", targets);
  file.save(path.string());
  return targets;
}

namespace {

template <typename Scalar>
double mean_surrogate(const std::vector<std::string>& inputs, const Matrix<Scalar>& targets,
                      const RegressorParams<Scalar>& params) {
  Matrix<Scalar> pred = regress_batch(inputs, params);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    total += 2.0 - 2.0 * static_cast<double>(pred.row(i).dot(targets.row(i)));
  }
  return total / static_cast<double>(pred.rows());
}

}  // namespace

template <typename Scalar>
RegressorParams<Scalar> fit_regressor(const std::vector<std::string>& train_inputs, const Matrix<Scalar>& train_targets,
                                      const std::vector<std::string>& val_inputs, const Matrix<Scalar>& val_targets,
                                      const RegressionTrainConfig& config, RegressorParams<Scalar> params,
                                      std::vector<RegressionMetrics>* log) {
  config.validate();
  if (train_inputs.empty() || val_inputs.empty()) throw ConfigError("train_regressor: empty train or validation set");
  if (train_targets.rows() != static_cast<Eigen::Index>(train_inputs.size()) ||
      val_targets.rows() != static_cast<Eigen::Index>(val_inputs.size())) {
    throw ShapeError("train_regressor: targets not aligned with inputs");
  }
  std::mt19937_64 rng(config.seed);
  Adam<Scalar> adam(params.parameters(), AdamConfig{config.learning_rate});
  RegressorParams<Scalar> best = params;
  double best_val = mean_surrogate(val_inputs, val_targets, params);
  int stale = 0;
  const int batch_size = std::min<int>(config.batch_size, static_cast<int>(train_inputs.size()));

  std::vector<std::size_t> order(train_inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  double running = 0.0;
  long running_count = 0;

  for (long step = 0; step < config.max_steps; ++step) {
    std::vector<std::string> batch;
    Matrix<Scalar> targets(batch_size, train_targets.cols());
    for (int b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto i = order[cursor++];
      batch.push_back(train_inputs[i]);
      targets.row(b) = train_targets.row(i);
    }
    ad::Tape<Scalar> tape(false);
    std::vector<ad::Var<Scalar>> tracked;
    auto h = regress_vars(tape, params, batch, true, &tracked, Scalar(1e-12));
    auto loss = surrogate_loss(h, tape.constant(targets));
    const double value = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(value)) throw TrainingError("surrogate loss became non-finite", step);
    if (step == 0 && log) log->push_back({0, value, best_val});
    auto grads = tape.backward(loss);
    std::vector<Matrix<Scalar>> g;
    for (const auto& v : tracked) g.push_back(grads.of(v));
    adam.step(g);
    running += value;
    ++running_count;

    const long done = step + 1;
    if (done % config.eval_every == 0 || done == config.max_steps) {
      const double val = mean_surrogate(val_inputs, val_targets, params);
      if (!std::isfinite(val)) throw TrainingError("validation loss became non-finite", done);
      if (log) log->push_back({done, running / static_cast<double>(running_count), val});
      running = 0.0;
      running_count = 0;
      if (val < best_val) {
        best_val = val;
        best = params;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  return best;
}

template <typename Scalar>
RegressorParams<Scalar> train_regressor(const std::vector<TrainingPair>& train, const std::vector<TrainingPair>& val,
                                        const EmbedderParams<Scalar>& embedder, const RegressionTrainConfig& config,
                                        RegressorParams<Scalar> init, std::vector<RegressionMetrics>* log,
                                        const std::string& cache_dir) {
  auto split = [](const std::vector<TrainingPair>& pairs) {
    std::pair<std::vector<std::string>, std::vector<PaddedGraph>> out;
    for (const auto& p : pairs) {
      out.first.push_back(p.input);
      out.second.push_back(p.output);
    }
    return out;
  };
  auto [train_in, train_out] = split(train);
  auto [val_in, val_out] = split(val);
  if (train_out.empty() || val_out.empty()) throw ConfigError("train_regressor: empty train or validation set");
  const Matrix<Scalar> train_targets = output_targets(train_out, embedder, cache_dir);
  const Matrix<Scalar> val_targets = output_targets(val_out, embedder, cache_dir);
  return fit_regressor(train_in, train_targets, val_in, val_targets, config, std::move(init), log);
}

#define ELE_REGRESSOR_INSTANTIATE(S)                                                                             \
  template struct RegressorParams<S>;                                                                            \
  template Matrix<S> positional_encoding<S>(int, int);                                                           \
  template ad::Var<S> regress_vars(ad::Tape<S>&, const RegressorParams<S>&, const std::vector<std::string>&, bool, \
                                   std::vector<ad::Var<S>>*, S);                                                 \
  template Vector<S> regress(const std::string&, const RegressorParams<S>&);                                     \
  template Matrix<S> regress_batch(const std::vector<std::string>&, const RegressorParams<S>&, int);             \
  template S surrogate_loss(const Vector<S>&, const Vector<S>&);                                                 \
  template ad::Var<S> surrogate_loss(const ad::Var<S>&, const ad::Var<S>&);                                      \
  template Matrix<S> output_targets(const std::vector<PaddedGraph>&, const EmbedderParams<S>&, const std::string&); \
  template RegressorParams<S> fit_regressor(const std::vector<std::string>&, const Matrix<S>&,                   \
                                            const std::vector<std::string>&, const Matrix<S>&,                   \
                                            const RegressionTrainConfig&, RegressorParams<S>,                    \
                                            std::vector<RegressionMetrics>*);                                    \
  template RegressorParams<S> train_regressor(const std::vector<TrainingPair>&, const std::vector<TrainingPair>&, \
                                              const EmbedderParams<S>&, const RegressionTrainConfig&,            \
                                              RegressorParams<S>, std::vector<RegressionMetrics>*,               \
                                              const std::string&);

ELE_REGRESSOR_INSTANTIATE(float)
ELE_REGRESSOR_INSTANTIATE(double)

}  // namespace ele
