#pragma once

// Input model: characters -> Transformer encoder -> start-token state -> linear map ->
// unit sphere. Trained to match frozen output embeddings under the squared distance.

#include <cstdint>
#include <string>
#include <vector>

#include "ele/autodiff.hpp"
#include "ele/embedder.hpp"
#include "ele/graph.hpp"
#include "ele/tensor_file.hpp"

namespace ele {

/// Character vocabulary. Id 0 pads, id 1 starts a sequence, characters follow in sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;

  Vocabulary() = default;
  explicit Vocabulary(std::string symbols);
  static Vocabulary build(const std::vector<std::string>& corpus);

  /// Throws InputError for characters outside the vocabulary.
  int id(char c) const;
  int size() const { return static_cast<int>(symbols_.size()) + 2; }
  const std::string& symbols() const { return symbols_; }
  bool operator==(const Vocabulary&) const = default;

 private:
  std::string symbols_;
};

struct TokenizedSequence {
  std::vector<int> ids;   // max_len + 1 entries: start token then characters then padding
  std::vector<char> mask; // true on the start token and characters
};

/// Strict: unknown characters and strings longer than max_len are rejected.
TokenizedSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

struct RegressorConfig {
  int layers = 2;
  int width = 64;
  int heads = 4;
  int ffn = 128;
  int dim = 64;
  int max_len = 25;
  void validate() const;
};

template <typename Scalar>
struct EncoderLayer {
  Matrix<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> query, key, value, out, out_bias;
  Matrix<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> ff1, ff1_bias, ff2, ff2_bias;
};

template <typename Scalar>
struct RegressorParams {
  RegressorConfig config;
  Vocabulary vocab;
  Matrix<Scalar> token_embedding;  // vocab x width
  std::vector<EncoderLayer<Scalar>> layers;
  Matrix<Scalar> final_gain, final_bias;
  Matrix<Scalar> projection, projection_bias;  // width x dim, 1 x dim

  static RegressorParams init(const Vocabulary& vocab, const RegressorConfig& config, std::uint64_t seed);

  std::vector<Matrix<Scalar>*> parameters();
  std::vector<const Matrix<Scalar>*> parameters() const;
  void validate() const;

  TensorFile to_file() const;
  static RegressorParams from_file(const TensorFile& file);
  void save(const std::string& path) const { to_file().save(path); }
  static RegressorParams load(const std::string& path) { return from_file(TensorFile::load(path)); }
};

/// Fixed sinusoidal encodings, positions x width.
template <typename Scalar>
Matrix<Scalar> positional_encoding(int positions, int width);

/// Encodes `batch` sequences on `tape`; returns batch x dim unit rows.
template <typename Scalar>
ad::Var<Scalar> regress_vars(ad::Tape<Scalar>& tape, const RegressorParams<Scalar>& params,
                             const std::vector<std::string>& batch, bool track,
                             std::vector<ad::Var<Scalar>>* tracked, Scalar norm_eps = 0);

template <typename Scalar>
Vector<Scalar> regress(const std::string& text, const RegressorParams<Scalar>& params);

/// Row i is the prediction for texts[i].
template <typename Scalar>
Matrix<Scalar> regress_batch(const std::vector<std::string>& texts, const RegressorParams<Scalar>& params,
                             int chunk = 256);

/// 2 - 2 <h, z>, the squared distance between unit vectors.
template <typename Scalar>
Scalar surrogate_loss(const Vector<Scalar>& h, const Vector<Scalar>& z);

/// Mean of 2 - 2 <h_i, z_i> over rows.
template <typename Scalar>
ad::Var<Scalar> surrogate_loss(const ad::Var<Scalar>& predictions, const ad::Var<Scalar>& targets);

struct RegressionTrainConfig {
  int batch_size = 128;
  double learning_rate = 1e-3;
  long max_steps = 5000;
  long eval_every = 200;
  int patience = 10;
  std::uint64_t seed = 0;
  void validate() const;
};

struct RegressionMetrics {
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainingPair {
  std::string input;
  PaddedGraph output;
};

/// Embeds `outputs` with the frozen embedder, reusing `<cache_dir>/targets-<key>.tensors`
/// when present (key = hash of embedder parameters and graphs). Empty cache_dir disables caching.
template <typename Scalar>
Matrix<Scalar> output_targets(const std::vector<PaddedGraph>& outputs, const EmbedderParams<Scalar>& embedder,
                              const std::string& cache_dir = "");

/// Adam on the mean surrogate loss against precomputed targets; early stopping on
/// validation MSE; returns the best parameters by validation loss.
template <typename Scalar>
RegressorParams<Scalar> train_regressor(const std::vector<TrainingPair>& train, const std::vector<TrainingPair>& val,
                                        const EmbedderParams<Scalar>& embedder, const RegressionTrainConfig& config,
                                        RegressorParams<Scalar> init, std::vector<RegressionMetrics>* log = nullptr,
                                        const std::string& cache_dir = "");

/// Same loop against explicit targets (rows aligned with the inputs).
template <typename Scalar>
RegressorParams<Scalar> fit_regressor(const std::vector<std::string>& train_inputs, const Matrix<Scalar>& train_targets,
                                      const std::vector<std::string>& val_inputs, const Matrix<Scalar>& val_targets,
                                      const RegressionTrainConfig& config, RegressorParams<Scalar> init,
                                      std::vector<RegressionMetrics>* log = nullptr);

}  // namespace ele
