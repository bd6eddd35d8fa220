#include <gtest/gtest.h>

#include <random>

#include "ele/decoder.hpp"
#include "ele/errors.hpp"
#include "oracles.hpp"

namespace ele {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
const GraphSpace kSpace{5, 3, 3};

Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

CandidateIndex<double> index_of(const Mat& rows) {
  CandidateIndex<double> idx;
  idx.embeddings = rows;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) idx.graphs.push_back(pad(std::vector<int>{0}, {}, kSpace));
  return idx;
}

TEST(CandidateSelect, Examples) {
  std::mt19937_64 rng(1);
  Mat rows(5, 4);
  for (int i = 0; i < 5; ++i) rows.row(i) = testing::random_unit(rng, 4).transpose();
  const auto sel = candidate_select<double>(Vec(rows.row(3).transpose()), index_of(rows));
  EXPECT_EQ(sel.index, 3u);
  EXPECT_NEAR(sel.score, 1.0, 1e-12);

  Mat e = Mat::Identity(2, 2);
  const Vec z = vec({0.9, 0.1});
  EXPECT_EQ(candidate_select<double>(z, index_of(e)).index, 0u);

  Mat tied(3, 2);
  tied << 0, 1, 0.6, 0.8, 0.6, 0.8;
  EXPECT_EQ(candidate_select<double>(vec({0.6, 0.8}), index_of(tied)).index, 1u);

  EXPECT_THROW(candidate_select<double>(z, CandidateIndex<double>{}), ContractError);
}

TEST(CandidateIndex, BuildSubsetValidate) {
  std::mt19937_64 rng(2);
  std::vector<PaddedGraph> graphs;
  for (int i = 0; i < 6; ++i) graphs.push_back(testing::random_padded(rng, kSpace));
  const auto emb = EmbedderParams<double>::init(kSpace, EmbedderConfig{2, 8, 8}, 1);
  const auto idx = CandidateIndex<double>::build(graphs, emb);
  EXPECT_NO_THROW(idx.validate());
  ASSERT_EQ(idx.size(), 6u);
  const auto sub = idx.subset({4, 1});
  EXPECT_EQ(sub.graphs[0], graphs[4]);
  EXPECT_EQ(sub.embeddings.row(1), idx.embeddings.row(1));
  EXPECT_THROW(idx.subset({6}), ContractError);
  auto bad = idx;
  bad.embeddings.row(2) *= 2.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ProjectSimplex, Examples) {
  EXPECT_TRUE(project_simplex<double>(vec({0.5, 0.5, 0.5})).isApprox(Vec::Constant(3, 1.0 / 3.0), 1e-15));
  EXPECT_EQ(project_simplex<double>(vec({2, 0, 0})), vec({1, 0, 0}));
  EXPECT_TRUE(project_simplex<double>(vec({0.2, 0.8})).isApprox(vec({0.2, 0.8}), 1e-15));
  EXPECT_EQ(project_simplex<double>(vec({-5})), vec({1}));
}

TEST(ProjectSimplex, MatchesQuadraticProgramOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 1; k <= 8; ++k) {
    for (int trial = 0; trial < 1000; ++trial) {
      Vec v(k);
      for (int i = 0; i < k; ++i) v(i) = 2.0 * n(rng);
      const Vec got = project_simplex<double>(v);
      const Vec want = testing::simplex_qp_oracle(v);
      ASSERT_LT((got - want).lpNorm<Eigen::Infinity>(), 1e-8) << "k=" << k;
      ASSERT_NEAR(got.sum(), 1.0, 1e-12);
      ASSERT_GE(got.minCoeff(), 0.0);
    }
  }
}

TEST(ProjectRelaxedGraph, Examples) {
  std::mt19937_64 rng(4);
  const auto feasible = testing::random_relaxed<double>(rng, kSpace);
  const auto same = project_relaxed_graph<double>(feasible.nodes, feasible.edges);
  EXPECT_TRUE(same.nodes.isApprox(feasible.nodes, 1e-12));
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(same.edges[s].isApprox(feasible.edges[s], 1e-12));

  std::vector<Mat> edges{Mat::Zero(2, 2), Mat::Zero(2, 2)};
  edges[0](0, 1) = 1.0;
  edges[1](1, 0) = 1.0;
  Mat nodes(2, 3);
  nodes << 2, 0, 0, 0.2, 0.3, 0.5;
  const auto p = project_relaxed_graph<double>(nodes, edges);
  EXPECT_DOUBLE_EQ(p.edges[0](0, 1), 0.5);
  EXPECT_DOUBLE_EQ(p.edges[1](0, 1), 0.5);
  EXPECT_DOUBLE_EQ(p.edges[1](1, 0), 0.5);
  EXPECT_EQ(p.nodes.row(0), vec({1, 0, 0}).transpose());
  EXPECT_EQ(p.edges[0](0, 0), 1.0);
  EXPECT_EQ(p.edges[1](1, 1), 0.0);
}

TEST(ProjectRelaxedGraph, MatchesOracleAndIsIdempotent) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = std::uniform_int_distribution<int>(1, 6)(rng);
    const int T1 = std::uniform_int_distribution<int>(2, 5)(rng);
    const int S = std::uniform_int_distribution<int>(1, 4)(rng);
    Mat nodes(m, T1);
    for (Eigen::Index i = 0; i < nodes.size(); ++i) nodes.data()[i] = n(rng);
    std::vector<Mat> edges(S, Mat(m, m));
    for (auto& E : edges) {
      for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = n(rng);
    }
    const auto p = project_relaxed_graph<double>(nodes, edges);
    ASSERT_NO_THROW(p.validate(1e-12));
    for (int i = 0; i < m; ++i) {
      const Vec want = testing::simplex_qp_oracle(nodes.row(i).transpose());
      ASSERT_LT((p.nodes.row(i).transpose() - want).lpNorm<Eigen::Infinity>(), 1e-8);
      for (int j = 0; j < m; ++j) {
        Vec fiber(S), got(S);
        for (int s = 0; s < S; ++s) fiber(s) = 0.5 * (edges[s](i, j) + edges[s](j, i)), got(s) = p.edges[s](i, j);
        const Vec expect = i == j ? Vec(Vec::Unit(S, 0)) : testing::simplex_qp_oracle(fiber);
        ASSERT_LT((got - expect).lpNorm<Eigen::Infinity>(), 1e-8);
        for (int s = 0; s < S; ++s) ASSERT_EQ(p.edges[s](i, j), p.edges[s](j, i));
      }
    }
    const auto q = project_relaxed_graph<double>(p.nodes, p.edges);
    ASSERT_LT((q.nodes - p.nodes).lpNorm<Eigen::Infinity>(), 1e-10);
    for (int s = 0; s < S; ++s) ASSERT_LT((q.edges[s] - p.edges[s]).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

EmbedderParams<double> decode_embedder(std::uint64_t seed) {
  return EmbedderParams<double>::init(kSpace, EmbedderConfig{2, 16, 8}, seed);
}

TEST(PgdDecode, NeverWorseThanInit) {
  std::mt19937_64 rng(6);
  PgdConfig cfg;
  cfg.steps = 100;
  for (int trial = 0; trial < 30; ++trial) {
    const auto emb = decode_embedder(trial);
    const Vec z = testing::random_unit(rng, 8);
    const auto init = testing::random_relaxed<double>(rng, kSpace);
    const auto r = pgd_decode(z, emb, init, cfg, true);
    ASSERT_LE(r.objective, decode_objective(z, init, emb));
    ASSERT_EQ(r.initial_objective, r.trace.front());
    ASSERT_EQ(r.trace.size(), 101u);
    ASSERT_EQ(r.objective, *std::min_element(r.trace.begin(), r.trace.end()));
    ASSERT_NO_THROW(r.graph.validate(1e-9));
    ASSERT_NEAR(decode_objective(z, r.graph, emb), r.objective, 1e-12);
  }
}

TEST(PgdDecode, FixedPointAtOwnEmbedding) {
  std::mt19937_64 rng(7);
  PgdConfig cfg;
  cfg.steps = 50;
  for (int trial = 0; trial < 10; ++trial) {
    const auto emb = decode_embedder(trial);
    const auto init = relax<double>(testing::random_padded(rng, kSpace));
    const Vec z = embed(init, emb);
    const auto r = pgd_decode(z, emb, init, cfg);
    ASSERT_LT((r.graph.nodes - init.nodes).lpNorm<Eigen::Infinity>(), 1e-8);
    for (int s = 0; s < 3; ++s) ASSERT_LT((r.graph.edges[s] - init.edges[s]).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(PgdDecode, ZeroStepsOrZeroStepSizeReturnInit) {
  std::mt19937_64 rng(8);
  const auto emb = decode_embedder(1);
  const Vec z = testing::random_unit(rng, 8);
  const auto init = testing::random_relaxed<double>(rng, kSpace);
  PgdConfig none;
  none.steps = 0;
  EXPECT_EQ(pgd_decode(z, emb, init, none).graph.nodes, init.nodes);
  PgdConfig still;
  still.step_size = 0.0;
  still.steps = 10;
  const auto r = pgd_decode(z, emb, init, still);
  EXPECT_EQ(r.graph.nodes, init.nodes);
  EXPECT_EQ(r.graph.edges, init.edges);
}

TEST(PgdDecode, LastIterateMode) {
  std::mt19937_64 rng(9);
  const auto emb = decode_embedder(2);
  const Vec z = testing::random_unit(rng, 8);
  const auto init = testing::random_relaxed<double>(rng, kSpace);
  PgdConfig cfg;
  cfg.steps = 20;
  cfg.track_best = false;
  const auto r = pgd_decode(z, emb, init, cfg, true);
  EXPECT_EQ(r.best_iteration, 20);
  EXPECT_EQ(r.objective, r.trace.back());
}

TEST(PgdDecode, BatchMatchesIndividualRuns) {
  std::mt19937_64 rng(10);
  const auto emb = decode_embedder(3);
  PgdConfig cfg;
  cfg.steps = 15;
  Mat z(3, 8);
  std::vector<RelaxedGraph<double>> inits;
  for (int i = 0; i < 3; ++i) {
    z.row(i) = testing::random_unit(rng, 8).transpose();
    inits.push_back(testing::random_relaxed<double>(rng, kSpace));
  }
  const auto batch = pgd_decode_batch(z, emb, inits, cfg);
  for (int i = 0; i < 3; ++i) {
    const auto single = pgd_decode<double>(z.row(i).transpose(), emb, inits[i], cfg);
    EXPECT_NEAR(batch[i].objective, single.objective, 1e-12);
    EXPECT_TRUE(batch[i].graph.nodes.isApprox(single.graph.nodes, 1e-10));
  }
}

TEST(PgdDecode, Errors) {
  std::mt19937_64 rng(11);
  const auto emb = decode_embedder(4);
  const auto init = testing::random_relaxed<double>(rng, kSpace);
  PgdConfig bad;
  bad.step_size = -1;
  EXPECT_THROW(pgd_decode(testing::random_unit(rng, 8), emb, init, bad), ConfigError);
  EXPECT_THROW(pgd_decode(testing::random_unit(rng, 7), emb, init, PgdConfig{}), ShapeError);
  auto broken = init;
  broken.nodes(0, 0) += 0.5;
  EXPECT_THROW(pgd_decode(testing::random_unit(rng, 8), emb, broken, PgdConfig{}), ValidationError);
  auto dead = emb;
  dead.mlp_out_weight.setZero();
  try {
    pgd_decode(testing::random_unit(rng, 8), dead, init, PgdConfig{});
    FAIL() << "degenerate embedder accepted";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.iteration(), 0);
  }
}

TEST(Strategy, NamesRoundtrip) {
  for (auto s : {DecodeStrategy::Candidate, DecodeStrategy::PgdRandom, DecodeStrategy::PgdBest}) {
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  }
  EXPECT_THROW(parse_strategy("beam"), ConfigError);
}

struct DecodeFixture {
  EmbedderParams<double> embedder = decode_embedder(5);
  std::vector<PaddedGraph> graphs;
  CandidateIndex<double> index;
  DecodeFixture() {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 20; ++i) graphs.push_back(testing::random_padded(rng, kSpace));
    index = CandidateIndex<double>::build(graphs, embedder);
  }
};

TEST(DecodeEmbeddings, CandidateStrategyRecoversExactTargets) {
  DecodeFixture f;
  DecodeOptions opt;
  const auto out = decode_embeddings(f.index.embeddings, f.embedder, f.index, opt);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].graph, strip(f.graphs[out[i].candidate]));
    EXPECT_NEAR(out[i].objective, 0.0, 1e-12);
  }
}

TEST(DecodeEmbeddings, PgdBestNeverWorseThanCandidate) {
  DecodeFixture f;
  std::mt19937_64 rng(13);
  Mat z(15, 8);
  for (int i = 0; i < 15; ++i) z.row(i) = testing::random_unit(rng, 8).transpose();
  DecodeOptions cand;
  DecodeOptions best;
  best.strategy = DecodeStrategy::PgdBest;
  best.pgd.steps = 60;
  const auto a = decode_embeddings(z, f.embedder, f.index, cand);
  const auto b = decode_embeddings(z, f.embedder, f.index, best);
  DecodeOptions degenerate = best;
  degenerate.pgd.steps = 0;
  const auto c = decode_embeddings(z, f.embedder, f.index, degenerate);
  for (int i = 0; i < 15; ++i) {
    ASSERT_EQ(a[i].candidate, b[i].candidate);
    ASSERT_LE(b[i].objective, a[i].objective);
    ASSERT_EQ(c[i].graph, a[i].graph);
    ASSERT_EQ(c[i].objective, a[i].objective);
    for (const auto& e : b[i].graph.edges) {
      ASSERT_LT(e.u, b[i].graph.num_nodes());
      ASSERT_LT(e.v, b[i].graph.num_nodes());
    }
  }
}

TEST(DecodeEmbeddings, RandomInitIsSeeded) {
  DecodeFixture f;
  std::mt19937_64 rng(14);
  Mat z(10, 8);
  for (int i = 0; i < 10; ++i) z.row(i) = testing::random_unit(rng, 8).transpose();
  DecodeOptions opt;
  opt.strategy = DecodeStrategy::PgdRandom;
  opt.pgd.steps = 5;
  opt.seed = 3;
  const auto a = decode_embeddings(z, f.embedder, f.index, opt);
  const auto b = decode_embeddings(z, f.embedder, f.index, opt);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].candidate, b[i].candidate);
    EXPECT_EQ(a[i].graph, b[i].graph);
  }
  EXPECT_THROW(decode_embeddings(z, f.embedder, CandidateIndex<double>{}, opt), ContractError);
}

}  // namespace
}  // namespace ele
