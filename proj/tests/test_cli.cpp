#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "futurefeat/classifier.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/selection.hpp"
#include "futurefeat/seqio.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace futurefeat;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result run(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(FUTUREFEAT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::slurp(out);
  r.err = testutil::slurp(err);
  return r;
}

// A configuration small enough for a whole pipeline in a few seconds.
const char* kTinyConfig = R"(seed = 5
k = 8
frames = 40
train_count = 3
test_count = 2
classes = 3
n = 8
l_rollout = 3
log_kernel = 5
batch_size = 4
steps_per_epoch = 1
epochs = 2
base_channels = 4
trunk_channels = 8
bottleneck_channels = 4
n_res_blocks = 4
seg_stages = 1
seg_layers = 2
seg_channels = 8
seg_epochs = 3
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream(dir / "tiny.cfg") << kTinyConfig;
    base = "--config " + (dir / "tiny.cfg").string() + " --data-dir " + (dir / "data").string() + " --run-dir " +
           (dir / "run").string();
  }
  Result ff(const std::string& args) { return run(base + " " + args, dir.path()); }

  testutil::TempDir dir;
  std::string base;
};

}  // namespace

TEST_F(Cli, SynthWritesValidatedFilesDeterministically) {
  ASSERT_EQ(ff("synth").code, 0);
  DatasetSplit split;
  split.train = seqio::load_directory(dir / "data" / "train");
  split.test = seqio::load_directory(dir / "data" / "test");
  ASSERT_EQ(split.train.size(), 3u);
  ASSERT_EQ(split.test.size(), 2u);
  EXPECT_EQ(split.dim(), 8u);
  for (const auto& s : split.train) {
    EXPECT_EQ(s.length(), 40u);
    EXPECT_EQ(segeval::load_labels(dir / "data" / "train" / (s.id + ".labels")).size(), 40u);
  }
  const auto first = testutil::slurp(dir / "data" / "train" / (split.train[0].id + ".fseq"));
  ASSERT_EQ(ff("synth").code, 0);
  EXPECT_EQ(testutil::slurp(dir / "data" / "train" / (split.train[0].id + ".fseq")), first);
  ASSERT_EQ(ff("--seed 6 synth").code, 0);
  EXPECT_NE(testutil::slurp(dir / "data" / "train" / (split.train[0].id + ".fseq")), first);
}

TEST_F(Cli, SynthWithDefaultConfig) {
  const auto r = run("--data-dir " + (dir / "defaults").string() + " synth", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto train = seqio::load_directory(dir / "defaults" / "train");
  const auto test = seqio::load_directory(dir / "defaults" / "test");
  EXPECT_EQ(train.size(), 20u);
  EXPECT_EQ(test.size(), 5u);
  for (const auto& s : train) {
    EXPECT_EQ(s.length(), 300u);
    EXPECT_EQ(s.dim(), 16u);
  }
  EXPECT_NE(r.out.find("synth: wrote 20 train + 5 test"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitTwoAndNameTheField) {
  const auto r = ff("--set dynamics=chaos synth");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("dynamics"), std::string::npos);
  const auto odd = ff("--set dynamics=ROTOR --set k=7 synth");
  EXPECT_EQ(odd.code, 2);
  EXPECT_NE(odd.err.find("even"), std::string::npos);
  EXPECT_EQ(ff("--set nonsense=1 synth").code, 2);
  EXPECT_EQ(ff("frobnicate").code, 2);
}

TEST_F(Cli, TrainSelectEncodeSegmentPipeline) {
  ASSERT_EQ(ff("synth").code, 0);
  const auto tr = ff("train");
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "epoch_0000.fgck"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "epoch_0001.fgck"));
  EXPECT_FALSE(fs::exists(dir / "run" / "checkpoints" / "epoch_0002.fgck"));
  const auto records = selection::read_records_csv(dir / "run" / "records.csv");
  ASSERT_EQ(records.size(), 2u);
  const auto csv = testutil::slurp(dir / "run" / "records.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2);
  EXPECT_TRUE(fs::exists(dir / "run" / "train.log"));

  const auto sel = ff("select");
  ASSERT_EQ(sel.code, 0) << sel.err;
  EXPECT_TRUE(sel.out == "0\n" || sel.out == "1\n") << sel.out;
  EXPECT_NE(sel.err.find("warning"), std::string::npos);
  EXPECT_EQ(testutil::slurp(dir / "run" / "selected_epoch.txt"), sel.out);

  const auto enc = ff("encode --horizon 1");
  ASSERT_EQ(enc.code, 0) << enc.err;
  const auto manifest = testutil::slurp(dir / "run" / "encoded_h1" / "manifest.csv");
  EXPECT_EQ(std::count(manifest.begin(), manifest.end(), '\n'), 1 + 5);
  EXPECT_EQ(manifest.find("ERROR"), std::string::npos);
  const auto bytes = testutil::slurp(dir / "run" / "encoded_h1" / "train" / "train_000.enc1.fseq");
  ASSERT_EQ(ff("encode --horizon 1").code, 0);
  EXPECT_EQ(testutil::slurp(dir / "run" / "encoded_h1" / "train" / "train_000.enc1.fseq"), bytes);
  EXPECT_EQ(testutil::slurp(dir / "run" / "encoded_h1" / "manifest.csv"), manifest);
  EXPECT_EQ(ff("encode --horizon 0").code, 2);

  const std::string enc_dir = (dir / "run" / "encoded_h1").string(), labels = (dir / "data").string();
  const auto st = ff("segtrain --features " + enc_dir + " --labels " + labels);
  ASSERT_EQ(st.code, 0) << st.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "segmodel.fseg"));
  const auto ev = ff("segeval --features " + enc_dir + " --labels " + labels);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out, testutil::slurp(dir / "run" / "seg_report.csv"));
  EXPECT_EQ(ff("segeval --features " + enc_dir + " --labels " + labels).out, ev.out);
  std::istringstream in(ev.out);
  std::string line;
  std::vector<std::string> keys;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(keys, (std::vector<std::string>{"metric", "Acc", "Edit", "F1@10", "F1@25", "F1@50"}));
}

TEST_F(Cli, TrainIsDeterministicUnderSeed) {
  ASSERT_EQ(ff("synth").code, 0);
  ASSERT_EQ(ff("train").code, 0);
  const auto a = testutil::slurp(dir / "run" / "records.csv");
  const auto ca = testutil::slurp(dir / "run" / "checkpoints" / "epoch_0001.fgck");
  ASSERT_EQ(ff("train").code, 0);
  EXPECT_EQ(testutil::slurp(dir / "run" / "records.csv"), a);
  EXPECT_EQ(testutil::slurp(dir / "run" / "checkpoints" / "epoch_0001.fgck"), ca);
}

TEST_F(Cli, PoolTestWithEmptyTestSplitWarns) {
  ASSERT_EQ(ff("--set test_count=0 synth").code, 0);
  const auto r = ff("--set test_count=0 --set epochs=1 train --pool-test");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("test split is empty"), std::string::npos);
  const auto records = selection::read_records_csv(dir / "run" / "records.csv");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_FALSE(records[0].test.has_value());
}

TEST_F(Cli, MissingInputsExitThree) {
  const auto sel = ff("select");
  EXPECT_EQ(sel.code, 3);
  EXPECT_NE(sel.err.find("records"), std::string::npos);
  EXPECT_EQ(ff("train").code, 3);
  EXPECT_EQ(ff("encode --horizon 1").code, 3);
  EXPECT_EQ(ff("segeval").code, 3);
}

TEST_F(Cli, TrainRejectsShortSequences) {
  ASSERT_EQ(ff("--set frames=9 synth").code, 0);
  const auto r = ff("train");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("n + l_rollout"), std::string::npos);
}
