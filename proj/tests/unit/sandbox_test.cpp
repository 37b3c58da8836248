#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "multirobust/error.hpp"
#include "multirobust/sandbox/attacks.hpp"
#include "multirobust/sandbox/dataset.hpp"
#include "multirobust/sandbox/model.hpp"
#include "multirobust/sandbox/rng.hpp"
#include "multirobust/sandbox/train.hpp"

using namespace mrb;

namespace {

// Two classes, no hidden layer: logits = [w.x, 0].
SandboxModel linear_model(double w0, double w1) {
  auto m = SandboxModel::zeros(1, 2, 0, 2);
  m.w2 = {w0, w1, 0.0, 0.0};
  return m;
}

std::vector<AttackFamily> registry() {
  return {{"linf", {0.05, 0.1, 0.15}}, {"l2", {0.25, 0.5, 0.75}},   {"l1", {1.0, 2.0}},
          {"brightness", {0.2, 0.4}},  {"contrast", {0.3, 0.6}},    {"translate", {0.5, 1.0}}};
}

DatasetConfig small_data() {
  DatasetConfig c;
  c.n_train = 300;
  c.n_validation = 90;
  c.n_test = 150;
  return c;
}

}  // namespace

TEST(Dataset, DeterministicInSeed) {
  const DatasetConfig c;
  const auto a = make_dataset(c, 7);
  const auto b = make_dataset(c, 7);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 1100u);
  EXPECT_NE(make_dataset(c, 8).pixels, a.pixels);
}

TEST(Dataset, ZeroNoiseGivesTemplates) {
  DatasetConfig c;
  c.noise = 0.0;
  const auto d = make_dataset(c, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto t = class_template(c, d.labels[i]);
    const auto img = d.image(i);
    ASSERT_TRUE(std::equal(img.begin(), img.end(), t.begin()));
  }
}

TEST(Dataset, BalancedSplitsAndBounds) {
  const auto d = make_dataset(DatasetConfig{}, 1);
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    std::vector<int> counts(3, 0);
    for (auto i : d.indices(s)) ++counts[d.labels[i]];
    EXPECT_LE(*std::ranges::max_element(counts) - *std::ranges::min_element(counts), 1);
  }
  for (double p : d.pixels) {
    ASSERT_GE(p, 0.0);
    ASSERT_LE(p, 1.0);
  }
}

TEST(Dataset, InvalidDimensions) {
  DatasetConfig c;
  c.num_classes = kTemplateCount + 1;
  EXPECT_THROW(make_dataset(c, 1), Error);
  c = DatasetConfig{};
  c.height = 0;
  EXPECT_THROW(make_dataset(c, 1), Error);
}

TEST(Model, ZeroWeightsGiveUniformSoftmax) {
  const auto m = SandboxModel::zeros(8, 8, 32, 5);
  const std::vector<double> x(64, 0.3);
  Workspace ws;
  EXPECT_NEAR(forward(m, x, 2, ws), std::log(5.0), 1e-12);
  for (double p : ws.probs) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(Model, NonFiniteActivationNamesLayer) {
  auto m = SandboxModel::zeros(1, 2, 2, 2);
  m.w1[0] = std::numeric_limits<double>::infinity();
  const std::vector<double> x{1.0, 1.0};
  try {
    logits(m, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto m = SandboxModel::random(3, 3, trial % 2 == 0 ? 4 : 0, 3, rng);
    std::vector<double> x(9);
    for (double& v : x) v = rng.uniform();
    const int y = static_cast<int>(rng.below(3));
    const auto g = backward(m, x, y);
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
      double& p = parameter(m, i);
      const double saved = p;
      p = saved + 1e-5;
      const double up = loss(m, x, y);
      p = saved - 1e-5;
      const double down = loss(m, x, y);
      p = saved;
      const double fd = (up - down) / 2e-5;
      const double an = gradient_entry(g, i);
      EXPECT_LE(std::abs(fd - an), 1e-4 * std::max({1e-3, std::abs(fd), std::abs(an)})) << i;
    }
  }
}

TEST(Model, LinearInputGradientIsClosedForm) {
  Rng rng(9);
  auto m = SandboxModel::random(2, 2, 0, 3, rng);
  const std::vector<double> x{0.1, 0.7, 0.4, 0.9};
  const int y = 1;
  const auto z = logits(m, x);
  const double zmax = *std::ranges::max_element(z);
  std::vector<double> p(3);
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) sum += p[c] = std::exp(z[c] - zmax);
  for (double& v : p) v /= sum;
  p[y] -= 1.0;
  std::vector<double> grad(4);
  Workspace ws;
  input_gradient(m, x, y, grad, ws);
  for (int j = 0; j < 4; ++j) {
    double want = 0.0;
    for (int c = 0; c < 3; ++c) want += p[c] * m.w2[c * 4 + j];
    EXPECT_NEAR(grad[j], want, 1e-12);
  }
}

TEST(Pgd, LinearLinfOptimum) {
  const auto m = linear_model(1.0, -2.0);
  const std::vector<double> x{1.0, 0.1};
  const auto out = pgd_attack(m, x, 0, {"linf", 0.3, 20, 0.3 / 18.0, 1});
  EXPECT_NEAR(out.image[0], 0.7, 1e-12);
  EXPECT_NEAR(out.image[1], 0.4, 1e-12);
  EXPECT_NEAR(logits(m, out.image)[0], -0.1, 1e-12);
  EXPECT_TRUE(out.success);
}

TEST(Pgd, LinearL2ReducesMarginByEpsNorm) {
  const auto m = linear_model(1.0, -2.0);
  const std::vector<double> x{0.5, 0.4};
  const double eps = 0.2;
  const auto out = pgd_attack(m, x, 0, {"l2", eps, 20, eps / 18.0, 1});
  const double before = logits(m, x)[0];
  EXPECT_NEAR(before - logits(m, out.image)[0], eps * std::sqrt(5.0), 1e-9);
}

TEST(Pgd, ZeroEpsilonIsIdentity) {
  Rng rng(1);
  const auto m = SandboxModel::random(2, 2, 3, 2, rng);
  const std::vector<double> x{0.2, 0.4, 0.6, 0.8};
  for (const char* fam : {"linf", "l2", "l1", "brightness", "contrast", "translate"}) {
    const auto out = run_attack(m, x, 0, {fam, 0.0, 20, 0.0, 1});
    EXPECT_EQ(out.image, x) << fam;
  }
}

TEST(Semantic, Transforms) {
  const std::vector<double> x{0.0, 0.3, 0.9, 1.0};
  EXPECT_EQ(apply_brightness(x, 0.0), x);
  for (double v : apply_contrast(x, -1.0)) EXPECT_DOUBLE_EQ(v, 0.5);
  const auto b = apply_brightness(x, 0.2);
  EXPECT_DOUBLE_EQ(b[0], 0.2);
  EXPECT_DOUBLE_EQ(b[3], 1.0);
  EXPECT_EQ(apply_translate(x, 2, 2, 0.0, 0.0), x);
  const auto t = apply_translate(x, 1, 4, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(t[1], 0.0);
  EXPECT_DOUBLE_EQ(t[2], 0.3);
}

TEST(Semantic, BeatsGridSweep) {
  Rng rng(21);
  const auto data = make_dataset(DatasetConfig{}, 4);
  for (int trial = 0; trial < 6; ++trial) {
    const auto m = SandboxModel::random(8, 8, 16, 3, rng);
    const std::size_t i = rng.below(data.size());
    for (const char* fam : {"brightness", "contrast", "translate"}) {
      const double eps = fam[0] == 't' ? 1.5 : 0.4;
      AttackBudget budget{fam, eps, 20, eps / 18.0, 1};
      const auto out = semantic_attack(m, data.image(i), data.labels[i], budget);
      double sweep = -1.0;
      for (const auto& p : semantic_sweep(fam, eps)) {
        sweep = std::max(sweep, loss(m, apply_semantic(fam, data.image(i), 8, 8, p), data.labels[i]));
      }
      EXPECT_GE(out.loss, sweep - 1e-9) << fam;
    }
  }
}

TEST(Attacks, StayFeasibleAndNeverLoseLoss) {
  Rng rng(33);
  const auto data = make_dataset(DatasetConfig{}, 2);
  const auto m = SandboxModel::random(8, 8, 16, 3, rng);
  for (const auto& fam : registry()) {
    for (double eps : fam.grid()) {
      for (int trial = 0; trial < 4; ++trial) {
        const std::size_t i = rng.below(data.size());
        const auto x = data.image(i);
        auto budget = AttackBudget::for_family(fam, eps);
        Rng attack_rng(trial);
        const auto out = run_attack(m, x, data.labels[i], budget, &attack_rng);
        for (double v : out.image) {
          ASSERT_GE(v, 0.0);
          ASSERT_LE(v, 1.0);
        }
        if (is_norm_family(fam.id())) {
          EXPECT_LE(perturbation_norm(fam.id(), x, out.image), eps + 1e-9) << fam.id();
        } else {
          for (double p : out.parameters) EXPECT_LE(std::abs(p), eps + 1e-9);
          EXPECT_EQ(out.image, apply_semantic(fam.id(), x, 8, 8, out.parameters));
        }
        budget.iterations = 1;
        const double short_loss = run_attack(m, x, data.labels[i], budget).loss;
        budget.iterations = 20;
        EXPECT_GE(run_attack(m, x, data.labels[i], budget).loss, short_loss - 1e-9) << fam.id();
      }
    }
  }
}

TEST(Attacks, Deterministic) {
  Rng rng(2);
  const auto m = SandboxModel::random(8, 8, 8, 3, rng);
  const auto data = make_dataset(DatasetConfig{}, 2);
  for (const auto& fam : registry()) {
    const auto budget = AttackBudget::for_family(fam, fam.max_epsilon());
    Rng r1(4), r2(4);
    EXPECT_EQ(run_attack(m, data.image(3), data.labels[3], budget, &r1).image,
              run_attack(m, data.image(3), data.labels[3], budget, &r2).image);
  }
}

TEST(Projection, BallsAreExact) {
  std::vector<double> v{3.0, -4.0};
  project_l2_ball(v, 1.0);
  EXPECT_NEAR(v[0], 0.6, 1e-12);
  EXPECT_NEAR(v[1], -0.8, 1e-12);
  std::vector<double> w{0.5, -2.0, 0.1};
  project_l1_ball(w, 1.0);
  EXPECT_NEAR(std::abs(w[0]) + std::abs(w[1]) + std::abs(w[2]), 1.0, 1e-12);
  EXPECT_NEAR(w[0], 0.0, 1e-12);
  EXPECT_NEAR(w[1], -1.0, 1e-12);
  std::vector<double> inside{0.1, 0.2};
  project_l1_ball(inside, 1.0);
  EXPECT_EQ(inside, (std::vector<double>{0.1, 0.2}));
}

TEST(DefenseSpec, ParseAndLabel) {
  const auto d = DefenseSpec::parse("max:linf@0.1+l2@0.5");
  EXPECT_EQ(d.kind, DefenseKind::kMax);
  ASSERT_EQ(d.threats.size(), 2u);
  EXPECT_EQ(d.label(), "max:linf@0.1+l2@0.5");
  EXPECT_EQ(DefenseSpec::parse("standard").label(), "standard");
  EXPECT_THROW(DefenseSpec::parse("at:linf@0.1+l2@0.5").validate(registry()), Error);
  EXPECT_THROW(DefenseSpec::parse("bogus"), Error);
  EXPECT_THROW(DefenseSpec::parse("at:fog@1").validate(registry()), Error);
}

TEST(Train, LearningRateSchedule) {
  TrainHyper h;
  h.epochs = 8;
  EXPECT_DOUBLE_EQ(learning_rate_at(h, 0), 0.1);
  EXPECT_NEAR(learning_rate_at(h, 4), 0.01, 1e-15);
  EXPECT_NEAR(learning_rate_at(h, 6), 0.001, 1e-15);
}

TEST(Train, StandardReachesHighAccuracy) {
  const auto data = make_dataset(DatasetConfig{}, 7);
  const auto model = train(data, DefenseSpec::parse("standard"), registry(), TrainHyper{}, 1);
  EXPECT_GE(robust_accuracy(model, data, Split::kTest, {}, registry(), 0), 0.95);
  EXPECT_EQ(model.provenance.defense, "standard");
  EXPECT_EQ(model, train(data, DefenseSpec::parse("standard"), registry(), TrainHyper{}, 1));
}

TEST(Train, AdversarialTrainingBeatsStandardOnItsThreat) {
  const auto data = make_dataset(small_data(), 7);
  TrainHyper h;
  h.epochs = 10;
  const auto standard = train(data, DefenseSpec::parse("standard"), registry(), h, 3);
  const auto at = train(data, DefenseSpec::parse("at:linf@0.1"), registry(), h, 3);
  const std::vector<TrainingThreat> threat{{"linf", 0.1}};
  const double r_std = robust_accuracy(standard, data, Split::kTest, threat, registry(), 5);
  const double r_at = robust_accuracy(at, data, Split::kTest, threat, registry(), 5);
  EXPECT_GE(r_at, r_std + 0.20) << r_at << " vs " << r_std;
}

TEST(Train, MaxIsNoWorseThanSatOnWorstThreat) {
  const auto data = make_dataset(small_data(), 7);
  TrainHyper h;
  h.epochs = 10;
  const auto mx = train(data, DefenseSpec::parse("max:linf@0.1+l2@0.5"), registry(), h, 4);
  const auto sat = train(data, DefenseSpec::parse("sat:linf@0.1+l2@0.5"), registry(), h, 4);
  auto worst = [&](const SandboxModel& m) {
    double w = 1.0;
    for (TrainingThreat t : {TrainingThreat{"linf", 0.1}, TrainingThreat{"l2", 0.5}}) {
      w = std::min(w, robust_accuracy(m, data, Split::kTest, std::vector<TrainingThreat>{t}, registry(), 6));
    }
    return w;
  };
  EXPECT_GE(worst(mx), worst(sat) - 0.05);
}
