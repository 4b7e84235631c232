#include <gtest/gtest.h>

#include "futurefeat/nets.hpp"
#include "futurefeat/rollout.hpp"
#include "support/oracles.hpp"

using namespace futurefeat;
using namespace futurefeat::rollout;

namespace {

Window window_of(const FeatureMatrix& m) { return Window{m, "w", 0}; }

Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& A, int p) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  for (int i = 0; i < p; ++i) out = out * A;
  return out;
}

}  // namespace

TEST(PredictFuture, PersistenceIsAFixedPoint) {
  std::mt19937_64 rng(1);
  const auto s = testutil::random_sequence("s", 4, 3, rng);
  const auto out = predict_future(stubs::persistence(), window_of(s.frames), 3);
  ASSERT_EQ(out.rows(), 3);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(out.row(j), s.frames.row(3));
}

TEST(PredictFuture, HalvingRecursion) {
  std::mt19937_64 rng(2);
  const auto s = testutil::random_sequence("s", 5, 4, rng);
  const auto out = predict_future(stubs::halving(), window_of(s.frames), 2);
  EXPECT_EQ(out.row(0), (0.5f * s.frames.row(4)).eval());
  EXPECT_EQ(out.row(1), (0.25f * s.frames.row(4)).eval());
}

TEST(PredictFuture, LinearMapMatchesMatrixPowers) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd(0.0f, 0.5f);
  Eigen::MatrixXf A(4, 4);
  for (int i = 0; i < 16; ++i) A.data()[i] = nd(rng);
  const auto s = testutil::random_sequence("s", 6, 4, rng);
  const auto out = predict_future(stubs::linear_map(A), window_of(s.frames), 5);
  const Eigen::VectorXd u = s.frames.row(5).transpose().cast<double>();
  for (int j = 1; j <= 5; ++j) {
    const Eigen::VectorXd expect = matrix_power(A.cast<double>(), j) * u;
    EXPECT_LT((out.row(j - 1).transpose().cast<double>() - expect).cwiseAbs().maxCoeff(), 1e-5) << "step " << j;
  }
}

TEST(PredictFuture, ZeroStepsIsError) {
  std::mt19937_64 rng(4);
  const auto s = testutil::random_sequence("s", 3, 2, rng);
  EXPECT_THROW(predict_future(stubs::persistence(), window_of(s.frames), 0), ValidationError);
}

TEST(PredictFuture, BatchMatchesSingle) {
  std::mt19937_64 rng(5);
  Eigen::MatrixXf A = Eigen::MatrixXf::Random(3, 3) * 0.6f;
  std::vector<Window> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(window_of(testutil::random_sequence("s", 5, 3, rng).frames));
  const auto batch = predict_future_batch(stubs::linear_map(A), ws, 4);
  for (std::size_t i = 0; i < ws.size(); ++i) EXPECT_EQ(batch[i], predict_future(stubs::linear_map(A), ws[i], 4));
}

TEST(PredictFuture, IteratesTheWindowNotJustTheLastRow) {
  // Two-tap stub (first + last rows) exposes the drop-first/append-last order.
  struct FirstPlusLast {
    FeatureMatrix predict(std::span<const Window> b) const {
      FeatureMatrix out(static_cast<Eigen::Index>(b.size()), b[0].vectors.cols());
      for (std::size_t i = 0; i < b.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = b[i].vectors.row(0) + b[i].vectors.row(b[i].vectors.rows() - 1);
      return out;
    }
  };
  FeatureMatrix w(3, 1);
  w << 1, 2, 3;
  const auto out = predict_future(FirstPlusLast{}, window_of(w), 3);
  // [1,2,3] → 4; [2,3,4] → 6; [3,4,6] → 9
  EXPECT_EQ(out(0, 0), 4.0f);
  EXPECT_EQ(out(1, 0), 6.0f);
  EXPECT_EQ(out(2, 0), 9.0f);
}

TEST(PredictPast, MirrorsFutureUnderReversal) {
  std::mt19937_64 rng(6);
  const auto s = testutil::random_sequence("s", 5, 4, rng);
  const auto p = predict_past(stubs::persistence(), window_of(s.frames), 3);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(p.row(j), s.frames.row(0));
  const auto h = predict_past(stubs::halving(), window_of(s.frames), 2);
  EXPECT_EQ(h.row(0), (0.5f * s.frames.row(0)).eval());
  EXPECT_EQ(h.row(1), (0.25f * s.frames.row(0)).eval());
  Eigen::MatrixXf A = Eigen::MatrixXf::Random(4, 4) * 0.5f;
  const auto lm = predict_past(stubs::linear_map(A), window_of(s.frames), 5);
  const Eigen::VectorXd u = s.frames.row(0).transpose().cast<double>();
  for (int j = 1; j <= 5; ++j)
    EXPECT_LT((lm.row(j - 1).transpose().cast<double>() - matrix_power(A.cast<double>(), j) * u).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(WindowEndingAt, PadsWithTheFirstRow) {
  std::mt19937_64 rng(7);
  const auto s = testutil::random_sequence("s", 6, 2, rng);
  const auto w = window_ending_at(s, 1, 4);
  EXPECT_EQ(w.start, -2);
  EXPECT_EQ(w.vectors.row(0), s.frames.row(0));
  EXPECT_EQ(w.vectors.row(1), s.frames.row(0));
  EXPECT_EQ(w.vectors.row(2), s.frames.row(0));
  EXPECT_EQ(w.vectors.row(3), s.frames.row(1));
  EXPECT_EQ(window_ending_at(s, 5, 4).vectors, s.frames.bottomRows(4));
}

TEST(Encode, PersistenceIsIdentity) {
  std::mt19937_64 rng(8);
  const auto s = testutil::random_sequence("clip", 30, 5, rng);
  for (std::size_t i : {1, 4, 10}) {
    const auto out = encode_sequence(stubs::persistence(), s, PredictionHorizon(i), 7);
    EXPECT_EQ(out.id, "clip.enc" + std::to_string(i));
    EXPECT_EQ(out.frames, s.frames);
  }
}

TEST(Encode, TruthOracleShiftsByOne) {
  std::mt19937_64 rng(9);
  std::vector<FeatureSequence> seqs{testutil::random_sequence("a", 12, 3, rng)};
  const auto out = encode_sequence(stubs::TruthOracle(seqs), seqs[0], PredictionHorizon(1), 4);
  for (Eigen::Index t = 0; t < 12; ++t) EXPECT_EQ(out.frames.row(t), seqs[0].frames.row(std::min<Eigen::Index>(t + 1, 11)));
}

TEST(Encode, HalvingTwoStepsByHand) {
  FeatureSequence s;
  s.id = "h";
  s.frames.resize(5, 2);
  s.frames << 4, 8, -4, 2, 1, 1, 0, 16, 12, -8;
  const auto out = encode_sequence(stubs::halving(), s, PredictionHorizon(2), 3);
  FeatureMatrix expect(5, 2);
  expect << 1, 2, -1, 0.5, 0.25, 0.25, 0, 4, 3, -2;
  EXPECT_EQ(out.frames, expect);
}

TEST(Encode, CompositionForLastRowStubs) {
  std::mt19937_64 rng(10);
  Eigen::MatrixXf A = Eigen::MatrixXf::Random(3, 3) * 0.7f;
  const auto s = testutil::random_sequence("c", 15, 3, rng);
  for (int i : {1, 4, 10}) {
    const auto out = encode_sequence(stubs::linear_map(A), s, PredictionHorizon(std::size_t(i)), 5, 4);
    for (Eigen::Index t = 0; t < 15; ++t) {
      FeatureVector v = s.frames.row(t);
      for (int j = 0; j < i; ++j) v = (v * A.transpose()).eval();
      EXPECT_EQ(out.frames.row(t), v) << "i=" << i << " t=" << t;
    }
  }
}

TEST(Encode, PaddingOnlyAffectsEarlyFrames) {
  std::mt19937_64 rng(11);
  const auto s = testutil::random_sequence("p", 20, 4, rng);
  nets::GeneratorConfig gc;
  gc.k = 4;
  gc.n = 6;
  gc.base_channels = 4;
  gc.trunk_channels = 6;
  gc.bottleneck_channels = 2;
  gc.n_res_blocks = 4;
  const nets::Generator<float> g(gc);
  const auto out = encode_sequence(g, s, PredictionHorizon(1), 6, 5);
  for (std::size_t t = 5; t < 20; ++t) {
    const Window w{s.frames.middleRows(static_cast<Eigen::Index>(t - 5), 6), "p", 0};
    EXPECT_LT((out.frames.row(static_cast<Eigen::Index>(t)) - predict_one(g, w)).cwiseAbs().maxCoeff(), 1e-6f);
  }
  EXPECT_EQ(out.frames.rows(), 20);
  EXPECT_THROW(encode_sequence(g, s, PredictionHorizon(1), 5), ValidationError);
}

TEST(Encode, HorizonMustBePositive) { EXPECT_THROW(PredictionHorizon(0), ValidationError); }

TEST(EncodeDataset, WritesFilesAndManifest) {
  std::mt19937_64 rng(12);
  testutil::TempDir dir;
  DatasetSplit split;
  split.train = {testutil::random_sequence("b", 10, 3, rng), testutil::random_sequence("a", 8, 3, rng)};
  split.test = {testutil::random_sequence("c", 9, 3, rng)};
  split.train[0].source = "in/b.fseq";
  const auto m = encode_dataset(stubs::halving(), split, PredictionHorizon(4), 3, dir / "out");
  ASSERT_TRUE(m.ok());
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[0].id, "a");
  EXPECT_EQ(m.rows[2].id, "c");
  for (const auto& r : m.rows) {
    const auto enc = seqio::load_sequence(r.output_path);
    EXPECT_EQ(enc.id, r.id + ".enc4");
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "test" / "c.enc4.fseq"));
  const std::string csv = testutil::slurp(dir / "out" / "manifest.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,input_path,output_path,horizon");
  EXPECT_NE(csv.find("b,in/b.fseq,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  const auto first = testutil::slurp(dir / "out" / "train" / "b.enc4.fseq");
  encode_dataset(stubs::halving(), split, PredictionHorizon(4), 3, dir / "out");
  EXPECT_EQ(testutil::slurp(dir / "out" / "train" / "b.enc4.fseq"), first);
  EXPECT_EQ(testutil::slurp(dir / "out" / "manifest.csv"), csv);
}

TEST(EncodeDataset, FailuresBecomeManifestErrors) {
  std::mt19937_64 rng(13);
  testutil::TempDir dir;
  DatasetSplit split;
  split.train = {testutil::random_sequence("ok", 10, 3, rng), testutil::random_sequence("bad", 10, 3, rng)};
  split.train[1].frames(2, 1) = std::numeric_limits<float>::infinity();
  const auto m = encode_dataset(stubs::persistence(), split, PredictionHorizon(1), 3, dir.path());
  EXPECT_FALSE(m.ok());
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_FALSE(m.rows[0].error.empty());
  EXPECT_TRUE(m.rows[1].error.empty());
  EXPECT_NE(testutil::slurp(m.path).find(",ERROR: "), std::string::npos);
}
