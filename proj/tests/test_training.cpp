#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "pacc/checkpoint.hpp"
#include "pacc/training.hpp"

using namespace pacc;

namespace {

LogRecord record(int click, int conversion, int position = 1) {
  LogRecord r;
  r.click = click;
  r.conversion = conversion;
  r.position = position;
  r.features = {0.5, -0.25};
  return r;
}

Prediction pred(double ctr, double cvr) {
  Prediction p;
  p.p_ctr = ctr;
  p.p_cvr = cvr;
  return p;
}

ModelConfig small_model(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.embed_dim = 8;
  c.tower_dim = 8;
  c.attention_dim = 4;
  return c;
}

struct Data {
  std::vector<LogRecord> train, validation, test;
};

const Data& data() {
  static const Data d = [] {
    GenConfig g;
    g.num_queries = 300;
    g.seed = 5;
    auto s = split_dataset(generate_logs(g).records, {0.7, 0.1, 0.2}, 5);
    return Data{std::move(s.train), std::move(s.validation), std::move(s.test)};
  }();
  return d;
}

TrainConfig quick_train(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 64;
  t.seed = 3;
  return t;
}

bool same_stats(const EpochStats& a, const EpochStats& b) {
  return a.epoch == b.epoch && a.train.total == b.train.total && a.train.ctr == b.train.ctr &&
         a.train.cvr == b.train.cvr && a.train.res == b.train.res && a.validation.total == b.validation.total &&
         a.val_auc_ctr == b.val_auc_ctr && a.val_auc_cvr == b.val_auc_cvr;
}

}  // namespace

TEST(TotalLoss, ClosedForms) {
  const std::vector<LogRecord> labels{record(1, 0)};
  const auto half = total_loss(std::vector<Prediction>{pred(0.5, 0.5)}, labels, RestrictionMode::kCorrected);
  EXPECT_NEAR(half.ctr, std::numbers::ln2, 1e-15);
  EXPECT_NEAR(half.cvr, std::numbers::ln2, 1e-15);
  EXPECT_EQ(half.res, 0.0);
  EXPECT_EQ(half.total, half.ctr + half.cvr + half.res);

  const double hi = 1.0 - nn::kProbEps, lo = nn::kProbEps;
  const std::vector<LogRecord> mixed{record(1, 1), record(1, 0), record(0, 0)};
  const auto perfect =
      total_loss(std::vector<Prediction>{pred(hi, hi), pred(hi, lo), pred(lo, lo)}, mixed, RestrictionMode::kCorrected);
  EXPECT_LT(perfect.total, 1e-6);
  EXPECT_GE(perfect.total, 0.0);
}

TEST(TotalLoss, MatchesRecomputationOracle) {
  nn::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial * 3;
    std::vector<Prediction> preds(n);
    std::vector<LogRecord> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = pred(0.01 + 0.98 * rng.uniform(), 0.01 + 0.98 * rng.uniform());
      const int click = rng.bernoulli(0.5);
      labels[i] = record(click, click && rng.bernoulli(0.5));
    }
    for (auto mode : {RestrictionMode::kCorrected, RestrictionMode::kPaperLiteral, RestrictionMode::kOff}) {
      double ctr = 0, cvr = 0, res = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double pc = preds[i].p_ctr, pv = preds[i].p_cvr;
        ctr -= labels[i].click ? std::log(pc) : std::log(1 - pc);
        cvr -= labels[i].conversion ? std::log(pv) : std::log(1 - pv);
        if (mode == RestrictionMode::kCorrected) res += pv > pc ? pv - pc : 0;
        if (mode == RestrictionMode::kPaperLiteral) res += pc > pv ? pc - pv : 0;
      }
      const double w = 0.7;
      const auto got = total_loss(preds, labels, mode, w);
      EXPECT_NEAR(got.ctr, ctr / n, 1e-12);
      EXPECT_NEAR(got.cvr, cvr / n, 1e-12);
      EXPECT_NEAR(got.res, w * res / n, 1e-12);
      EXPECT_NEAR(got.total, (ctr + cvr + w * res) / n, 1e-12);
      EXPECT_GE(got.ctr, 0.0);
      EXPECT_GE(got.cvr, 0.0);
      EXPECT_GE(got.res, 0.0);
      EXPECT_EQ(got.total, got.ctr + got.cvr + got.res);
    }
  }
}

TEST(TotalLoss, MisalignedBatchIsShapeError) {
  EXPECT_THROW(total_loss(std::vector<Prediction>{pred(0.5, 0.5)}, std::vector<LogRecord>{}, RestrictionMode::kOff),
               ShapeError);
}

TEST(RestrictionLoss, Examples) {
  const std::vector<double> ctr{0.2}, cvr{0.5};
  EXPECT_NEAR(restriction_loss(ctr, cvr, RestrictionMode::kCorrected), 0.3, 1e-15);
  EXPECT_EQ(restriction_loss(ctr, cvr, RestrictionMode::kPaperLiteral), 0.0);
  EXPECT_EQ(restriction_loss(ctr, cvr, RestrictionMode::kOff), 0.0);
  EXPECT_EQ(restriction_loss(std::vector<double>{}, std::vector<double>{}, RestrictionMode::kCorrected), 0.0);
}

TEST(RestrictionLoss, ElementwiseRecomputation) {
  nn::Rng rng(12);
  std::vector<double> ctr(64), cvr(64);
  double corrected = 0, literal = 0;
  for (std::size_t i = 0; i < ctr.size(); ++i) {
    ctr[i] = rng.uniform();
    cvr[i] = rng.uniform();
    corrected += std::max(cvr[i] - ctr[i], 0.0);
    literal += std::max(ctr[i] - cvr[i], 0.0);
  }
  EXPECT_EQ(restriction_loss(ctr, cvr, RestrictionMode::kCorrected), corrected / 64.0);
  EXPECT_EQ(restriction_loss(ctr, cvr, RestrictionMode::kPaperLiteral), literal / 64.0);
}

TEST(RestrictionLoss, ZeroOnPaccOutputs) {
  AnyModel m = make_model(small_model(ModelKind::kPacc), 2);
  std::vector<double> ctr, cvr;
  for (const auto& r : data().test) {
    const auto p = predict(m, r.features, r.position);
    ctr.push_back(p.p_ctr);
    cvr.push_back(p.p_cvr);
  }
  EXPECT_EQ(restriction_loss(ctr, cvr, RestrictionMode::kCorrected), 0.0);
}

TEST(LossGradient, MatchesFiniteDifferenceInProbabilities) {
  const std::vector<LogRecord> labels{record(1, 0), record(0, 0), record(1, 1)};
  std::vector<Prediction> preds{pred(0.3, 0.6), pred(0.4, 0.1), pred(0.7, 0.2)};
  for (auto mode : {RestrictionMode::kCorrected, RestrictionMode::kPaperLiteral, RestrictionMode::kOff}) {
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto [d_ctr, d_cvr] = loss_gradient(preds[i], labels[i], mode, 2.0, preds.size());
      const double h = 1e-7;
      auto shifted = preds;
      shifted[i].p_ctr += h;
      const double up = total_loss(shifted, labels, mode, 2.0).total;
      shifted[i].p_ctr -= 2 * h;
      const double down = total_loss(shifted, labels, mode, 2.0).total;
      EXPECT_NEAR(d_ctr, (up - down) / (2 * h), 1e-6);
      shifted = preds;
      shifted[i].p_cvr += h;
      const double up2 = total_loss(shifted, labels, mode, 2.0).total;
      shifted[i].p_cvr -= 2 * h;
      const double down2 = total_loss(shifted, labels, mode, 2.0).total;
      EXPECT_NEAR(d_cvr, (up2 - down2) / (2 * h), 1e-6);
    }
  }
}

TEST(Training, SingleStepDescendsOnOneExample) {
  for (auto kind : {ModelKind::kPacc, ModelKind::kPaccPe, ModelKind::kNaive, ModelKind::kPosFeat}) {
    for (auto opt : {nn::OptimizerKind::kSgd, nn::OptimizerKind::kAdam}) {
      AnyModel m = make_model(small_model(kind), 7);
      const LogRecord& r = data().train.front();
      const std::vector<LogRecord> one{r};
      std::visit(
          [&](auto& model) {
            using M = std::decay_t<decltype(model)>;
            const double before = batch_loss(model, one, RestrictionMode::kCorrected);
            const auto params = model.params();
            nn::zero_grads(params);
            typename M::Cache cache;
            const auto p = model.forward(r.features, r.position, false, nullptr, &cache);
            const auto [d_ctr, d_cvr] = loss_gradient(p, r, RestrictionMode::kCorrected, 1.0, 1);
            model.backward(cache, d_ctr, d_cvr);
            nn::Optimizer optimizer({opt, 1e-5});
            optimizer.step(params);
            EXPECT_LT(batch_loss(model, one, RestrictionMode::kCorrected), before) << to_string(kind);
          },
          m);
    }
  }
}

TEST(Training, ReproducibleUnderSeed) {
  const auto& d = data();
  const auto a = train_model(small_model(ModelKind::kPaccPe), d.train, d.validation, quick_train());
  const auto b = train_model(small_model(ModelKind::kPaccPe), d.train, d.validation, quick_train());
  ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) EXPECT_TRUE(same_stats(a.report.epochs[i], b.report.epochs[i]));
  EXPECT_EQ(a.report.best_epoch, b.report.best_epoch);
  for (const auto& r : d.test) EXPECT_EQ(predict(a.model, r.features, r.position), predict(b.model, r.features, r.position));

  auto other = quick_train();
  other.seed = 4;
  const auto c = train_model(small_model(ModelKind::kPaccPe), d.train, d.validation, other);
  EXPECT_FALSE(same_stats(a.report.epochs[0], c.report.epochs[0]));
}

TEST(Training, ReportInvariantsAndBestSnapshot) {
  const auto& d = data();
  auto cfg = quick_train(6);
  cfg.patience = 1;
  auto [model, report] = train_model(small_model(ModelKind::kPacc), d.train, d.validation, cfg);
  ASSERT_FALSE(report.epochs.empty());
  EXPECT_LE(report.epochs.size(), cfg.epochs);
  ASSERT_GE(report.best_epoch, 1u);
  EXPECT_LE(report.best_epoch, report.epochs.size());
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& e : report.epochs) {
    EXPECT_GE(e.train.ctr, 0.0);
    EXPECT_GE(e.train.cvr, 0.0);
    EXPECT_EQ(e.train.res, 0.0);  // PACC never violates the corrected restriction
    if (e.val_auc_ctr + e.val_auc_cvr > best) {
      best = e.val_auc_ctr + e.val_auc_cvr;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(report.best_epoch, best_epoch);
  if (report.epochs.size() < cfg.epochs) EXPECT_EQ(report.epochs.size(), report.best_epoch + cfg.patience);

  // The returned parameters are the best epoch's snapshot.
  EpochStats again;
  std::visit([&](const auto& m) { detail::validation_pass(m, d.validation, cfg, again); }, model);
  EXPECT_EQ(again.val_auc_ctr, report.epochs[report.best_epoch - 1].val_auc_ctr);
  EXPECT_EQ(again.val_auc_cvr, report.epochs[report.best_epoch - 1].val_auc_cvr);
}

TEST(Training, TrainingImprovesValidationLoss) {
  const auto& d = data();
  const auto init = make_model(small_model(ModelKind::kNaive), quick_train().seed);
  EpochStats before;
  std::visit([&](const auto& m) { detail::validation_pass(m, d.validation, quick_train(), before); }, init);
  const auto trained = train_model(small_model(ModelKind::kNaive), d.train, d.validation, quick_train(3));
  EXPECT_LT(trained.report.epochs.back().validation.total, before.validation.total);
}

TEST(Training, ZeroEpochsLeavesInitialization) {
  const auto& d = data();
  const auto result = train_model(small_model(ModelKind::kPacc), d.train, d.validation, quick_train(0));
  EXPECT_TRUE(result.report.epochs.empty());
  EXPECT_EQ(result.report.best_epoch, 0u);
  const auto init = make_model(small_model(ModelKind::kPacc), quick_train().seed);
  const auto& r = d.test.front();
  EXPECT_EQ(predict(result.model, r.features, r.position), predict(init, r.features, r.position));
}

TEST(Training, DivergenceNamesEpochAndBatch) {
  const auto& d = data();
  auto cfg = quick_train(3);
  cfg.optimizer.kind = nn::OptimizerKind::kSgd;
  cfg.optimizer.learning_rate = 1e300;
  try {
    train_model(small_model(ModelKind::kPaccPe), d.train, d.validation, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch "), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch "), std::string::npos) << msg;
  }
}

TEST(Training, RejectsInvalidConfig) {
  const auto& d = data();
  auto cfg = quick_train();
  cfg.batch_size = 0;
  EXPECT_THROW(train_model(small_model(ModelKind::kPacc), d.train, d.validation, cfg), ConfigError);
  cfg = quick_train();
  cfg.restriction_weight = -1;
  EXPECT_THROW(train_model(small_model(ModelKind::kPacc), d.train, d.validation, cfg), ConfigError);
  EXPECT_THROW(train_model(small_model(ModelKind::kPacc), {}, d.validation, quick_train()), ConfigError);
  EXPECT_THROW(parse_restriction_mode("sideways"), ConfigError);
  for (auto m : {RestrictionMode::kCorrected, RestrictionMode::kPaperLiteral, RestrictionMode::kOff}) {
    EXPECT_EQ(parse_restriction_mode(to_string(m)), m);
  }
}

TEST(TrainReport, CsvHeader) {
  TrainReport rep;
  rep.epochs.push_back({1, {1.5, 1.0, 0.5, 0.0}, {}, 0.75, 0.5});
  std::ostringstream os;
  write_train_report_csv(os, rep);
  EXPECT_EQ(os.str(), "epoch,loss_total,loss_ctr,loss_cvr,loss_res,val_auc_ctr,val_auc_cvr\n1,1.5,1,0.5,0,0.75,0.5\n");
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  for (auto kind : {ModelKind::kPacc, ModelKind::kPaccPe, ModelKind::kNaive, ModelKind::kPosFeat}) {
    for (auto mode : {nn::AttentionMode::kDotProduct, nn::AttentionMode::kScalarGate}) {
      auto cfg = small_model(kind);
      cfg.attention_mode = mode;
      AnyModel m = make_model(cfg, 13);
      for (const auto& p : params_of(m)) {
        for (double& v : p.value) v *= 1.0 + 1e-3 * std::sin(v * 1e4);  // no short decimal expansions
      }
      std::stringstream ss;
      save_checkpoint(ss, m);
      const AnyModel back = load_checkpoint(ss, cfg);
      EXPECT_EQ(config_of(back), config_of(m));
      for (const auto& r : data().test) {
        EXPECT_EQ(predict(back, r.features, r.position), predict(m, r.features, r.position));
      }
    }
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "pacc_ckpt_test.ckpt").string();
  const AnyModel m = make_model(small_model(ModelKind::kPacc), 1);
  save_checkpoint(path, m);
  const auto back = load_checkpoint(path);
  const auto& r = data().test.front();
  EXPECT_EQ(predict(back, r.features, r.position), predict(m, r.features, r.position));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, MismatchesAreCheckpointErrors) {
  const AnyModel m = make_model(small_model(ModelKind::kPacc), 1);
  std::stringstream ss;
  save_checkpoint(ss, m);
  const std::string text = ss.str();

  auto load_text = [](const std::string& t, std::optional<ModelConfig> expect = std::nullopt) {
    std::istringstream is(t);
    return load_checkpoint(is, expect);
  };
  auto wrong_dims = small_model(ModelKind::kPacc);
  wrong_dims.tower_dim = 9;
  EXPECT_THROW(load_text(text, wrong_dims), CheckpointError);
  EXPECT_THROW(load_text(text, small_model(ModelKind::kPaccPe)), CheckpointError);

  std::string bad_version = text;
  bad_version.replace(bad_version.find("checkpoint 1"), 12, "checkpoint 2");
  EXPECT_THROW(load_text(bad_version), CheckpointError);

  EXPECT_THROW(load_text("not a checkpoint"), CheckpointError);
  EXPECT_THROW(load_text(text.substr(0, text.size() / 2)), CheckpointError);

  std::string renamed = text;
  renamed.replace(renamed.find("tensor shared_embed.weight"), 26, "tensor shared_embed.wrongs");
  EXPECT_THROW(load_text(renamed), CheckpointError);

  std::string bad_kind = text;
  bad_kind.replace(bad_kind.find("kind pacc"), 9, "kind aitm");
  EXPECT_THROW(load_text(bad_kind), CheckpointError);
}
