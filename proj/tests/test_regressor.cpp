#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ele/errors.hpp"
#include "ele/regressor.hpp"
#include "ele/synthetic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace ele {
namespace {

using Mat = Eigen::MatrixXd;

const Vocabulary kVocab("ABC-=()123");

RegressorParams<double> tiny_regressor(std::uint64_t seed, int layers = 1) {
  return RegressorParams<double>::init(kVocab, RegressorConfig{layers, 8, 2, 12, 6, 10}, seed);
}

TEST(Tokenize, Examples) {
  const Vocabulary ab("ba");
  EXPECT_EQ(ab.id('a'), 2);
  EXPECT_EQ(ab.id('b'), 3);
  const auto empty = tokenize("", ab, 4);
  EXPECT_EQ(empty.ids, (std::vector<int>{1, 0, 0, 0, 0}));
  EXPECT_EQ(empty.mask, (std::vector<char>{1, 0, 0, 0, 0}));
  const auto s = tokenize("ab", ab, 4);
  EXPECT_EQ(s.ids, (std::vector<int>{1, 2, 3, 0, 0}));
  EXPECT_EQ(s.mask, (std::vector<char>{1, 1, 1, 0, 0}));
  EXPECT_THROW(tokenize(std::string(26, 'a'), ab, 25), InputError);
  EXPECT_NO_THROW(tokenize(std::string(25, 'a'), ab, 25));
  EXPECT_THROW(tokenize("ac", ab, 4), InputError);
}

TEST(Vocabulary, DeterministicDenseIds) {
  const auto v = Vocabulary::build({"CAB", "BA", "C"});
  EXPECT_EQ(v.symbols(), "ABC");
  EXPECT_EQ(v.size(), 5);
  EXPECT_EQ(Vocabulary::build({"C", "BA", "CAB"}), v);
}

TEST(Regress, UnitNormAndDeterminism) {
  std::mt19937_64 rng(1);
  const std::string chars = kVocab.symbols();
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = tiny_regressor(trial, 2);
    std::string s;
    const int n = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int i = 0; i < n; ++i) s += chars[std::uniform_int_distribution<int>(0, chars.size() - 1)(rng)];
    const auto h = regress(s, p);
    ASSERT_NEAR(h.norm(), 1.0, 1e-6);
    ASSERT_EQ(h, regress(s, p));
  }
}

TEST(Regress, PositionSensitive) {
  const auto p = tiny_regressor(3, 2);
  EXPECT_GT((regress("AB-C", p) - regress("BA-C", p)).norm(), 1e-6);
}

TEST(Regress, BatchMatchesSingleAndIgnoresPadding) {
  const auto p = tiny_regressor(4, 2);
  const std::vector<std::string> texts{"A", "AB(1)", "", "C=C-A123"};
  const Mat batch = regress_batch(texts, p, 3);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    EXPECT_LT((batch.row(i).transpose() - regress(texts[i], p)).norm(), 1e-12);
  }
}

TEST(Regress, RejectsUntokenizableInput) {
  const auto p = tiny_regressor(1);
  EXPECT_THROW(regress("AX", p), InputError);
  EXPECT_THROW(regress(std::string(11, 'A'), p), InputError);
}

TEST(SurrogateLoss, ExamplesAndIdentity) {
  std::mt19937_64 rng(2);
  Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0), e2 = Eigen::VectorXd::Unit(3, 1);
  EXPECT_DOUBLE_EQ(surrogate_loss<double>(e1, e1), 0.0);
  EXPECT_DOUBLE_EQ(surrogate_loss<double>(e1, -e1), 4.0);
  EXPECT_DOUBLE_EQ(surrogate_loss<double>(e1, e2), 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto h = testing::random_unit(rng, 7), z = testing::random_unit(rng, 7);
    ASSERT_NEAR(surrogate_loss<double>(h, z), (h - z).squaredNorm(), 1e-10);
  }
}

TEST(SurrogateLoss, GradientThroughEncoderMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> batch{"AB-C", "C(=A)1", ""};
  for (int trial = 0; trial < 10; ++trial) {
    auto p = tiny_regressor(50 + trial, 1);
    Mat targets(3, 6);
    for (int i = 0; i < 3; ++i) targets.row(i) = testing::random_unit(rng, 6).transpose();
    auto value = [&]() {
      const Mat h = regress_batch(batch, p);
      return (2.0 - 2.0 * (h.array() * targets.array()).rowwise().sum()).mean();
    };
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> tracked;
    auto h = regress_vars(tape, p, batch, true, &tracked);
    const auto grads = tape.backward(surrogate_loss(h, tape.constant(targets)));
    std::vector<Mat> analytic;
    for (const auto& v : tracked) analytic.push_back(grads.of(v));
    EXPECT_LT(testing::max_fd_error(p.parameters(), analytic, value), 1e-4) << "trial " << trial;
  }
}

TEST(RegressorParams, CheckpointRoundtrip) {
  const auto p = tiny_regressor(9, 2);
  std::stringstream buf;
  p.to_file().write(buf);
  const auto q = RegressorParams<double>::from_file(TensorFile::read(buf));
  EXPECT_EQ(q.vocab, p.vocab);
  EXPECT_EQ(q.config.heads, p.config.heads);
  EXPECT_EQ(regress("AB", q), regress("AB", p));
  TensorFile wrong = p.to_file();
  wrong.metadata()["kind"] = "embedder";
  EXPECT_THROW(RegressorParams<double>::from_file(wrong), InputError);
}

TEST(RegressorConfig, Validation) {
  EXPECT_THROW((RegressorConfig{2, 10, 3, 8, 4, 5}.validate()), ConfigError);
  EXPECT_NO_THROW((RegressorConfig{2, 12, 3, 8, 4, 5}.validate()));
}

struct ToyPairs {
  std::vector<std::string> inputs;
  std::vector<PaddedGraph> outputs;
  GraphSpace space;
};

ToyPairs toy_pairs(int n, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.count = n;
  cfg.m_max = 5;
  cfg.max_length = 16;
  cfg.unique = true;
  cfg.seed = seed;
  const auto data = gen_synthetic_corpus(cfg);
  ToyPairs out{inputs(data), padded_outputs(data, 5), data.space(5)};
  return out;
}

TEST(FitRegressor, MemorizesSmallCorpus) {
  const auto toy = toy_pairs(50, 3);
  const auto embedder = EmbedderParams<float>::init(toy.space, EmbedderConfig{2, 32, 16}, 1);
  const Matrix<float> targets = output_targets(toy.outputs, embedder);
  RegressionTrainConfig cfg;
  cfg.batch_size = 50;
  cfg.learning_rate = 3e-3;
  cfg.max_steps = 3000;
  cfg.eval_every = 100;
  cfg.patience = 30;
  cfg.seed = 2;
  const auto vocab = Vocabulary::build(toy.inputs);
  auto init = RegressorParams<float>::init(vocab, RegressorConfig{2, 32, 4, 64, 16, 16}, 5);
  std::vector<RegressionMetrics> log;
  const auto trained = fit_regressor(toy.inputs, targets, toy.inputs, targets, cfg, init, &log);
  const Matrix<float> h = regress_batch(toy.inputs, trained);
  const double mse = (2.0 - 2.0 * (h.array() * targets.array()).rowwise().sum()).cast<double>().mean();
  EXPECT_LT(mse, 0.05) << "after " << log.back().step << " steps";
}

TEST(FitRegressor, ZeroLearningRateKeepsParameters) {
  const auto toy = toy_pairs(10, 4);
  const auto embedder = EmbedderParams<double>::init(toy.space, EmbedderConfig{1, 8, 6}, 1);
  const Mat targets = output_targets(toy.outputs, embedder);
  RegressionTrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_steps = 5;
  const auto init = RegressorParams<double>::init(Vocabulary::build(toy.inputs), RegressorConfig{1, 8, 2, 8, 6, 16}, 1);
  const auto out = fit_regressor(toy.inputs, targets, toy.inputs, targets, cfg, init);
  const auto a = init.parameters(), b = out.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(FitRegressor, Errors) {
  const auto init = tiny_regressor(1);
  const Mat targets = Mat::Ones(1, 6);
  EXPECT_THROW(fit_regressor<double>({"A"}, targets, {}, Mat(0, 6), {}, init), ConfigError);
  EXPECT_THROW(fit_regressor<double>({"A", "B"}, targets, {"A"}, targets, {}, init), ShapeError);
}

TEST(OutputTargets, CacheIsReusedAndKeyedByInputs) {
  const auto toy = toy_pairs(12, 6);
  const auto embedder = EmbedderParams<double>::init(toy.space, EmbedderConfig{1, 8, 6}, 1);
  const auto dir = std::filesystem::temp_directory_path() / "ele-target-cache-test";
  std::filesystem::remove_all(dir);
  const Mat first = output_targets(toy.outputs, embedder, dir.string());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    EXPECT_EQ(entry.path().extension(), ".tensors");
    ++files;
  }
  EXPECT_EQ(files, 1u);
  const Mat again = output_targets(toy.outputs, embedder, dir.string());
  EXPECT_EQ(first, again);
  EXPECT_EQ(first, output_targets(toy.outputs, embedder));

  const std::vector<PaddedGraph> fewer(toy.outputs.begin(), toy.outputs.begin() + 5);
  output_targets(fewer, embedder, dir.string());
  const auto other = EmbedderParams<double>::init(toy.space, EmbedderConfig{1, 8, 6}, 2);
  output_targets(toy.outputs, other, dir.string());
  files = 0;
  for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 3u);
  std::filesystem::remove_all(dir);
}

TEST(TrainRegressor, TargetsStayFixedDuringTraining) {
  const auto toy = toy_pairs(20, 7);
  const auto embedder = EmbedderParams<double>::init(toy.space, EmbedderConfig{1, 8, 6}, 1);
  const Mat before = output_targets(toy.outputs, embedder);
  std::vector<TrainingPair> train, val;
  for (int i = 0; i < 20; ++i) (i < 15 ? train : val).push_back({toy.inputs[i], toy.outputs[i]});
  RegressionTrainConfig cfg;
  cfg.max_steps = 20;
  cfg.eval_every = 5;
  const auto init = RegressorParams<double>::init(Vocabulary::build(toy.inputs), RegressorConfig{1, 8, 2, 8, 6, 16}, 1);
  std::vector<RegressionMetrics> log;
  train_regressor(train, val, embedder, cfg, init, &log);
  EXPECT_EQ(output_targets(toy.outputs, embedder), before);
  ASSERT_FALSE(log.empty());
  EXPECT_EQ(log.front().step, 0);
}

}  // namespace
}  // namespace ele
