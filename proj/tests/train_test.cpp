#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lexnmt/checkpoint.hpp"
#include "lexnmt/eval.hpp"
#include "lexnmt/trainer.hpp"
#include "testutil.hpp"

using namespace lexnmt;

namespace {

TEST(Adadelta, FirstStepMatchesClosedForm) {
  Parameter<double> p("w", Tensor<double>({1}));
  p.value[0] = 1.0;
  p.grad[0] = 1.0;
  std::vector<Parameter<double>*> ps{&p};
  auto st = AdadeltaState<double>::make(ps);
  adadelta_step(ps, st);
  const double dx = -std::sqrt(1e-6 / (0.05 + 1e-6));
  EXPECT_NEAR(p.value[0], 1.0 + dx, 1e-15);
  EXPECT_NEAR(st.sq_grad[0][0], 0.05, 1e-15);
  EXPECT_NEAR(st.sq_delta[0][0], 0.05 * dx * dx, 1e-18);
}

TEST(Adadelta, ZeroGradientOnlyDecaysAccumulators) {
  Parameter<double> p("w", Tensor<double>({1}));
  p.value[0] = 1.0;
  p.grad[0] = 1.0;
  std::vector<Parameter<double>*> ps{&p};
  auto st = AdadeltaState<double>::make(ps);
  adadelta_step(ps, st);
  const double v = p.value[0], ed = st.sq_delta[0][0];
  p.grad[0] = 0.0;
  adadelta_step(ps, st);
  EXPECT_DOUBLE_EQ(p.value[0], v);
  EXPECT_NEAR(st.sq_grad[0][0], 0.95 * 0.05, 1e-15);
  EXPECT_NEAR(st.sq_delta[0][0], 0.95 * ed, 1e-18);
}

TEST(Adadelta, AgreesWithReferenceImplementation) {
  Rng rng(5);
  Parameter<double> a("a", testutil::random_tensor<double>({3, 2}, rng));
  Parameter<double> b("b", testutil::random_tensor<double>({4}, rng));
  std::vector<Parameter<double>*> ps{&a, &b};
  auto st = AdadeltaState<double>::make(ps);

  // Straight-line transcription of the update rule, kept separate on purpose.
  std::vector<std::vector<double>> val(2), eg(2), ed(2);
  for (int k = 0; k < 2; ++k) {
    const Tensor<double>& t = ps[k]->value;
    val[k].assign(t.data(), t.data() + t.size());
    eg[k].assign(t.size(), 0.0);
    ed[k].assign(t.size(), 0.0);
  }
  for (int step = 0; step < 6; ++step) {
    for (int k = 0; k < 2; ++k)
      for (std::int64_t i = 0; i < ps[k]->grad.size(); ++i) {
        const double g = rng.uniform(-2.0, 2.0);
        ps[k]->grad[i] = g;
        eg[k][i] = 0.95 * eg[k][i] + 0.05 * g * g;
        const double dx = -std::sqrt((ed[k][i] + 1e-6) / (eg[k][i] + 1e-6)) * g;
        ed[k][i] = 0.95 * ed[k][i] + 0.05 * dx * dx;
        val[k][i] += dx;
      }
    adadelta_step(ps, st);
    for (int k = 0; k < 2; ++k)
      for (std::int64_t i = 0; i < ps[k]->value.size(); ++i)
        EXPECT_NEAR(ps[k]->value[i], val[k][i], 1e-14)
            << "step " << step << " param " << k << " index " << i;
  }
}

TEST(Clip, GlobalNormScalesJointly) {
  Parameter<double> a("a", Tensor<double>({1}));
  Parameter<double> b("b", Tensor<double>({1}));
  a.grad[0] = 6.0;
  b.grad[0] = 8.0;
  std::vector<Parameter<double>*> ps{&a, &b};
  EXPECT_DOUBLE_EQ(clip_global_norm(ps, 5.0), 10.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(b.grad[0], 4.0);

  a.grad[0] = 3.0;
  b.grad[0] = 0.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(ps, 5.0), 3.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 3.0);  // under the limit: untouched
}

TEST(Clip, RandomGradientsEndUpWithinLimit) {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    Parameter<double> a("a", Tensor<double>({5, 3}));
    Parameter<double> b("b", Tensor<double>({7}));
    std::vector<Parameter<double>*> ps{&a, &b};
    for (auto* p : ps)
      for (std::int64_t i = 0; i < p->grad.size(); ++i)
        p->grad[i] = rng.uniform(-4.0, 4.0);
    clip_global_norm(ps, 5.0);
    EXPECT_LE(global_grad_norm(ps), 5.0 + 1e-9);
  }
}

TEST(Clip, NonFiniteGradientIsNamed) {
  Parameter<double> a("enc0_wx", Tensor<double>({2}));
  a.grad[1] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Parameter<double>*> ps{&a};
  try {
    clip_global_norm(ps, 5.0);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("enc0_wx"), std::string::npos);
    EXPECT_NE(msg.find("index 1"), std::string::npos);
  }
}

TEST(Clip, PerParameterVariantClipsIndependently) {
  Parameter<double> a("a", Tensor<double>({2}));
  Parameter<double> b("b", Tensor<double>({1}));
  a.grad[0] = 6.0;
  a.grad[1] = 8.0;  // norm 10: clipped alone
  b.grad[0] = 3.0;  // norm 3: untouched
  std::vector<Parameter<double>*> ps{&a, &b};
  clip_per_param_norm(ps, 5.0);
  EXPECT_DOUBLE_EQ(a.grad[0], 3.0);
  EXPECT_DOUBLE_EQ(a.grad[1], 4.0);
  EXPECT_DOUBLE_EQ(b.grad[0], 3.0);
}

TEST(Init, UniformRangeZeroBiasesDeterministicSeed) {
  Parameter<double> w("w", Tensor<double>({40, 50}));
  Parameter<double> b("b", Tensor<double>({50}), /*bias=*/true);
  std::vector<Parameter<double>*> ps{&w, &b};
  Rng rng(3);
  init_params(ps, rng, 0.01, false);
  double mean = 0, lo = 1, hi = -1;
  for (std::int64_t i = 0; i < w.value.size(); ++i) {
    mean += w.value[i];
    lo = std::min(lo, w.value[i]);
    hi = std::max(hi, w.value[i]);
  }
  mean /= static_cast<double>(w.value.size());
  EXPECT_GE(lo, -0.01);
  EXPECT_LE(hi, 0.01);
  // 3 sigma for the mean of 2000 uniforms on [-0.01, 0.01].
  EXPECT_LT(std::abs(mean), 3.0 * 0.01 / std::sqrt(3.0 * 2000.0));
  for (std::int64_t i = 0; i < b.value.size(); ++i)
    EXPECT_EQ(b.value[i], 0.0);

  Parameter<double> w2("w", Tensor<double>({40, 50}));
  Parameter<double> b2("b", Tensor<double>({50}), true);
  std::vector<Parameter<double>*> ps2{&w2, &b2};
  Rng rng2(3);
  init_params(ps2, rng2, 0.01, false);
  EXPECT_EQ(0, std::memcmp(w.value.data(), w2.value.data(),
                           sizeof(double) * w.value.size()));

  Rng rng3(4);
  init_params(ps2, rng3, 0.01, /*init_biases=*/true);
  double babs = 0;
  for (std::int64_t i = 0; i < b2.value.size(); ++i)
    babs += std::abs(b2.value[i]);
  EXPECT_GT(babs, 0.0);
}

// ---- checkpointing ---------------------------------------------------------

Checkpoint<double> sample_checkpoint() {
  Vocabulary vs, vt;
  for (auto* t : {"sa", "sb", "sc"}) vs.add(t, 7);
  for (auto* t : {"ta", "tb"}) vt.add(t, 5);
  ModelConfig cfg;
  cfg.variant = Variant::fixnorm_lex;
  cfg.radius = 3.5;
  cfg.num_layers = 2;
  cfg.hidden_size = 4;
  cfg.dropout_p = 0.1;
  TrainConfig tc;
  tc.seed = 11;
  Checkpoint<double> ck = make_initial_checkpoint<double>(cfg, vs, vt, tc);
  // A couple of updates so the accumulators are not all zero.
  Rng rng(13);
  auto ps = ck.params.all();
  for (int step = 0; step < 2; ++step) {
    for (auto* p : ps)
      for (std::int64_t i = 0; i < p->grad.size(); ++i)
        p->grad[i] = rng.uniform(-1.0, 1.0);
    adadelta_step(ps, ck.opt);
  }
  ck.best_dev_bleu = 12.5;
  ck.best_epoch = 3;
  ck.completed_epochs = 4;
  ck.global_step = 17;
  ck.rng_state = Rng(9).save_state();
  return ck;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const std::string p1 = testing::TempDir() + "ck_roundtrip_1.bin";
  const std::string p2 = testing::TempDir() + "ck_roundtrip_2.bin";
  Checkpoint<double> ck = sample_checkpoint();
  save_checkpoint(p1, ck);
  EXPECT_EQ(checkpoint_value_width(p1), 8);

  Checkpoint<double> got = load_checkpoint<double>(p1);
  EXPECT_EQ(got.config.variant, ck.config.variant);
  EXPECT_EQ(got.config.num_layers, 2);
  EXPECT_EQ(got.config.hidden_size, 4);
  EXPECT_DOUBLE_EQ(got.config.radius, 3.5);
  EXPECT_DOUBLE_EQ(got.config.dropout_p, 0.1);
  EXPECT_TRUE(got.src_vocab == ck.src_vocab);
  EXPECT_TRUE(got.tgt_vocab == ck.tgt_vocab);
  auto want_ps = ck.params.all(), got_ps = got.params.all();
  ASSERT_EQ(want_ps.size(), got_ps.size());
  for (std::size_t i = 0; i < want_ps.size(); ++i) {
    EXPECT_EQ(want_ps[i]->name, got_ps[i]->name);
    ASSERT_TRUE(want_ps[i]->value.same_shape(got_ps[i]->value));
    EXPECT_EQ(0, std::memcmp(want_ps[i]->value.data(), got_ps[i]->value.data(),
                             sizeof(double) * want_ps[i]->value.size()));
  }
  ASSERT_EQ(got.opt.sq_grad.size(), ck.opt.sq_grad.size());
  for (std::size_t i = 0; i < ck.opt.sq_grad.size(); ++i) {
    EXPECT_EQ(0, std::memcmp(ck.opt.sq_grad[i].data(), got.opt.sq_grad[i].data(),
                             sizeof(double) * ck.opt.sq_grad[i].size()));
    EXPECT_EQ(0,
              std::memcmp(ck.opt.sq_delta[i].data(), got.opt.sq_delta[i].data(),
                          sizeof(double) * ck.opt.sq_delta[i].size()));
  }
  EXPECT_DOUBLE_EQ(got.best_dev_bleu, 12.5);
  EXPECT_EQ(got.best_epoch, 3);
  EXPECT_EQ(got.completed_epochs, 4);
  EXPECT_EQ(got.global_step, 17);
  EXPECT_EQ(got.rng_state, ck.rng_state);

  save_checkpoint(p2, got);
  EXPECT_EQ(slurp(p1), slurp(p2));
}

TEST(Checkpoint, RejectsForeignFilesAndWrongPrecision) {
  const std::string bad = testing::TempDir() + "ck_bad_magic.bin";
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOTACKPTxxxxxxxxxxxxxxxx";
  }
  EXPECT_THROW(load_checkpoint<double>(bad), std::runtime_error);
  EXPECT_THROW(checkpoint_value_width(bad), std::runtime_error);
  EXPECT_THROW(load_checkpoint<double>(testing::TempDir() + "ck_missing.bin"),
               std::runtime_error);

  const std::string p = testing::TempDir() + "ck_width.bin";
  Checkpoint<double> ck = sample_checkpoint();
  save_checkpoint(p, ck);
  EXPECT_THROW(load_checkpoint<float>(p), std::runtime_error);
}

// ---- training loop ---------------------------------------------------------

struct TinyTask {
  ParallelCorpus corpus;
  Vocabulary vs, vt;
};

TinyTask make_tiny_task() {
  TinyTask t;
  t.corpus = {{{"sa"}, {"ta"}},
              {{"sb"}, {"tb"}},
              {{"sc"}, {"tc"}},
              {{"sa", "sb"}, {"ta", "tb"}},
              {{"sb", "sa"}, {"tb", "ta"}},
              {{"sc", "sc"}, {"tc", "tc"}}};
  t.vs = Vocabulary::build(side_of(t.corpus, true), 1);
  t.vt = Vocabulary::build(side_of(t.corpus, false), 1);
  return t;
}

ModelConfig tiny_config(int d = 8) {
  ModelConfig cfg;
  cfg.variant = Variant::tied;
  cfg.num_layers = 1;
  cfg.hidden_size = d;
  cfg.dropout_p = 0;
  return cfg;
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  TinyTask task = make_tiny_task();
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.seed = 42;

  Checkpoint<double> straight =
      make_initial_checkpoint<double>(tiny_config(), task.vs, task.vt, tc);
  TrainOutcome a = train_loop(straight, task.corpus, {}, tc);
  ASSERT_EQ(a.log.size(), 4u);
  EXPECT_FALSE(a.aborted);

  TrainConfig half = tc;
  half.epochs = 2;
  Checkpoint<double> part =
      make_initial_checkpoint<double>(tiny_config(), task.vs, task.vt, tc);
  train_loop(part, task.corpus, {}, half);
  const std::string path = testing::TempDir() + "ck_resume.bin";
  save_checkpoint(path, part);

  Checkpoint<double> resumed = load_checkpoint<double>(path);
  EXPECT_EQ(resumed.completed_epochs, 2);
  TrainOutcome b = train_loop(resumed, task.corpus, {}, tc);
  ASSERT_EQ(b.log.size(), 2u);
  EXPECT_EQ(b.log[0].epoch, 3);
  EXPECT_EQ(b.log[1].epoch, 4);
  EXPECT_EQ(resumed.global_step, straight.global_step);

  auto want = straight.params.all(), got = resumed.params.all();
  double max_diff = 0;
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::int64_t j = 0; j < want[i]->value.size(); ++j)
      max_diff = std::max(max_diff,
                          std::abs(want[i]->value[j] - got[i]->value[j]));
  EXPECT_EQ(max_diff, 0.0);  // byte-exact state makes the resume exact too
}

TEST(Trainer, MemorizesTinyCorpus) {
  TinyTask task = make_tiny_task();
  TrainConfig tc;
  tc.epochs = 1000;
  tc.batch_size = 2;
  tc.seed = 1;
  Checkpoint<double> ck =
      make_initial_checkpoint<double>(tiny_config(16), task.vs, task.vt, tc);
  TrainOutcome out = train_loop(ck, task.corpus, {}, tc);
  ASSERT_FALSE(out.aborted) << out.abort_reason;
  ASSERT_EQ(out.log.size(), 1000u);
  EXPECT_LT(out.log.back().train_ppl, 1.3);
  EXPECT_LT(perplexity(ck.params, task.corpus, task.vs, task.vt), 1.3);
  // Perplexity only improves in aggregate; spot-check the trend.
  EXPECT_LT(out.log.back().train_ppl, out.log.front().train_ppl);
}

TEST(Trainer, TracksBestByStrictDevImprovement) {
  TinyTask task = make_tiny_task();
  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 3;
  tc.seed = 4;
  tc.beam_size = 4;
  const std::string best = testing::TempDir() + "ck_best.bin";
  const std::string last = testing::TempDir() + "ck_last.bin";
  std::ostringstream log;
  Checkpoint<double> ck =
      make_initial_checkpoint<double>(tiny_config(), task.vs, task.vt, tc);
  TrainOutcome out =
      train_loop(ck, task.corpus, task.corpus, tc, &log, best, last);
  ASSERT_EQ(out.log.size(), 8u);

  double running = -1;
  double best_seen = -1;
  int best_epoch = -1;
  for (const auto& row : out.log) {
    EXPECT_EQ(row.is_best, row.dev_bleu > running);
    if (row.dev_bleu > running) {
      running = row.dev_bleu;
      best_seen = row.dev_bleu;
      best_epoch = row.epoch;
    }
  }
  EXPECT_DOUBLE_EQ(out.best_dev_bleu, best_seen);
  EXPECT_EQ(out.best_epoch, best_epoch);

  Checkpoint<double> at_best = load_checkpoint<double>(best);
  EXPECT_EQ(at_best.completed_epochs, best_epoch);
  Checkpoint<double> at_last = load_checkpoint<double>(last);
  EXPECT_EQ(at_last.completed_epochs, 8);
  EXPECT_DOUBLE_EQ(at_last.best_dev_bleu, best_seen);

  // One log line per epoch, five tab-separated fields each.
  std::istringstream is(log.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
  }
  EXPECT_EQ(lines, 8);
}

TEST(Trainer, AbortsOnNonFiniteLossKeepingPriorState) {
  TinyTask task = make_tiny_task();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.seed = 2;
  Checkpoint<double> ck =
      make_initial_checkpoint<double>(tiny_config(), task.vs, task.vt, tc);
  ck.params.out_b->value.fill(std::numeric_limits<double>::quiet_NaN());
  TrainOutcome out = train_loop(ck, task.corpus, {}, tc);
  EXPECT_TRUE(out.aborted);
  EXPECT_NE(out.abort_reason.find("non-finite"), std::string::npos);
  EXPECT_TRUE(out.log.empty());
  EXPECT_EQ(ck.completed_epochs, 0);
}

TEST(Trainer, EmptyCorpusThrows) {
  TinyTask task = make_tiny_task();
  TrainConfig tc;
  Checkpoint<double> ck =
      make_initial_checkpoint<double>(tiny_config(), task.vs, task.vt, tc);
  EXPECT_THROW(train_loop(ck, {}, {}, tc), std::invalid_argument);
}

TEST(Trainer, LogRowFormatsWithTabs) {
  EpochLog row;
  row.epoch = 3;
  row.step = 17;
  row.train_ppl = 1.25;
  row.dev_bleu = 10.5;
  row.is_best = true;
  EXPECT_EQ(row.row(), "3\t17\t1.25\t10.5\t1");
}

}  // namespace
