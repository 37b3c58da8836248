#include <gtest/gtest.h>

#include <random>

#include "multirobust/error.hpp"
#include "multirobust/metrics.hpp"
#include "oracle.hpp"

using namespace mrb;

namespace {

const AttackInstance kClean = AttackInstance::clean();
const AttackInstance kA{"linf", 0.1};
const AttackInstance kB{"linf", 0.2};

struct Fixture {
  EvaluationMatrix matrix{"m"};
  BaselineTable baselines{10};
  AttackSet attacks;
};

Fixture make(const std::vector<AttackInstance>& instances, const std::vector<double>& acc,
             const std::vector<double>& acc_star) {
  Fixture f;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    f.matrix.set(instances[i], acc[i], 100);
    f.baselines.set(instances[i], {acc_star[i]});
  }
  f.attacks = AttackSet::uniform(instances);
  return f;
}

Fixture three_cells() { return make({kClean, kA, kB}, {0.5, 0.4, 0.3}, {0.8, 0.5, 0.6}); }

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

}  // namespace

TEST(MultiError, ExpAndIndOnTwoCells) {
  const auto f = make({kClean, kA}, {0.8, 0.6}, {1.0, 1.0});
  const auto exp = multi_error(f.matrix, f.attacks, MultiErrorKind::kExp);
  ASSERT_EQ(exp.size(), 1u);
  EXPECT_NEAR(exp[0], 0.3, 1e-12);
  const auto ind = multi_error(f.matrix, f.attacks, MultiErrorKind::kInd);
  ASSERT_EQ(ind.size(), 2u);
  EXPECT_NEAR(ind[0], 0.2, 1e-12);
  EXPECT_NEAR(ind[1], 0.4, 1e-12);
}

TEST(MultiError, PerfectModelHasZeroMaxError) {
  const auto f = make({kClean, kA, kB}, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0});
  EXPECT_EQ(multi_error(f.matrix, f.attacks, MultiErrorKind::kMax)[0], 0.0);
}

TEST(MultiError, MissingCellNamesInstance) {
  const auto f = make({kClean}, {0.8}, {1.0});
  const auto k = AttackSet::uniform({kClean, kA});
  try {
    multi_error(f.matrix, k, MultiErrorKind::kExp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIncompleteEvaluation);
    EXPECT_NE(std::string(e.what()).find("linf@0.1"), std::string::npos);
  }
}

TEST(CrGeneral, Examples) {
  EXPECT_DOUBLE_EQ(cr_general(0.45, 0.90), 50.0);
  EXPECT_DOUBLE_EQ(cr_general(0.37, 0.37), 100.0);
  EXPECT_DOUBLE_EQ(cr_general(0.0, 0.5), 0.0);
  EXPECT_EQ(kind_of([] { cr_general(0.1, 0.0); }), ErrorKind::kDegenerateDenominator);
}

TEST(CrInd, AvgAndWorstOnThreeCells) {
  const auto f = three_cells();
  EXPECT_NEAR(cr_ind_avg(f.matrix, f.attacks, f.baselines).value, 64.16666666666667, 1e-9);
  EXPECT_NEAR(cr_ind_worst(f.matrix, f.attacks, f.baselines).value, 50.0, 1e-12);
}

TEST(CrInd, SelfCompetitiveIsHundred) {
  const auto f = make({kClean, kA, kB}, {0.7, 0.3, 0.2}, {0.7, 0.3, 0.2});
  EXPECT_NEAR(cr_ind_avg(f.matrix, f.attacks, f.baselines).value, 100.0, 1e-12);
  EXPECT_NEAR(cr_ind_worst(f.matrix, f.attacks, f.baselines).value, 100.0, 1e-12);
  EXPECT_NEAR(cr_exp(f.matrix, f.attacks, f.baselines), 100.0, 1e-12);
  EXPECT_NEAR(cr_max(f.matrix, f.attacks, f.baselines), 100.0, 1e-12);
}

TEST(CrInd, ZeroAccuracyGivesZeroWorst) {
  const auto f = make({kClean, kA}, {0.9, 0.0}, {0.9, 0.4});
  EXPECT_EQ(cr_ind_worst(f.matrix, f.attacks, f.baselines).value, 0.0);
}

TEST(CrInd, DegenerateCellsAreExcludedAndRenormalized) {
  const auto f = make({kClean, kA, kB}, {0.5, 0.4, 0.0}, {0.8, 0.5, 0.0});
  const auto avg = cr_ind_avg(f.matrix, f.attacks, f.baselines);
  EXPECT_NEAR(avg.value, 100.0 * (0.625 + 0.8) / 2.0, 1e-12);
  ASSERT_EQ(avg.excluded.size(), 1u);
  EXPECT_EQ(avg.excluded[0], kB);
}

TEST(CrInd, AllDegenerateIsUndefined) {
  const auto f = make({kA, kB}, {0.1, 0.0}, {0.0, 1e-7});
  EXPECT_EQ(kind_of([&] { cr_ind_avg(f.matrix, f.attacks, f.baselines); }), ErrorKind::kMetricUndefined);
  EXPECT_EQ(kind_of([&] { cr_ind_worst(f.matrix, f.attacks, f.baselines); }), ErrorKind::kMetricUndefined);
}

TEST(CrExp, ThreeCells) {
  const auto f = three_cells();
  EXPECT_NEAR(cr_exp(f.matrix, f.attacks, f.baselines), 100.0 * 1.2 / 1.9, 1e-9);
  EXPECT_NEAR(cr_exp(f.matrix, f.attacks, f.baselines), 63.158, 1e-3);
}

TEST(CrExp, SingleInstanceMatchesAvg) {
  const auto f = make({kA}, {0.3}, {0.7});
  EXPECT_NEAR(cr_exp(f.matrix, f.attacks, f.baselines),
              cr_ind_avg(f.matrix, f.attacks, f.baselines).value, 1e-12);
}

TEST(CrMax, ThreeCellsAndCrossedMinima) {
  const auto f = three_cells();
  EXPECT_NEAR(cr_max(f.matrix, f.attacks, f.baselines), 60.0, 1e-12);
  const auto g = make({kA, kB}, {0.2, 0.9}, {0.9, 0.2});
  EXPECT_NEAR(cr_max(g.matrix, g.attacks, g.baselines), 100.0, 1e-12);
  EXPECT_GE(cr_max(g.matrix, g.attacks, g.baselines), cr_ind_worst(g.matrix, g.attacks, g.baselines).value);
}

TEST(CrMax, ZeroDenominatorIsUndefined) {
  const auto f = make({kA, kB}, {0.2, 0.0}, {0.5, 0.0});
  EXPECT_EQ(kind_of([&] { cr_max(f.matrix, f.attacks, f.baselines); }), ErrorKind::kMetricUndefined);
}

TEST(SingleCr, SelfCompetitiveFamily) {
  const AttackFamily fam("linf", {0.1, 0.2});
  const auto f = make({kClean, kA, kB}, {0.9, 0.5, 0.2}, {0.9, 0.5, 0.2});
  const auto s = single_cr(f.matrix, fam, f.baselines);
  EXPECT_NEAR(s.avg, 100.0, 1e-12);
  EXPECT_NEAR(s.worst, 100.0, 1e-12);
  EXPECT_EQ(single_family_set(fam).size(), 3u);
}

TEST(Uar, TwoCells) {
  const AttackFamily fam("linf", {0.1, 0.2});
  const auto f = make({kA, kB}, {0.6, 0.4}, {0.8, 0.5});
  EXPECT_NEAR(uar(f.matrix, fam, f.baselines), 100.0 / 1.3, 1e-9);
  EXPECT_NEAR(uar(f.matrix, fam, f.baselines), 76.923, 1e-3);
}

TEST(Uar, MeanOverFamilies) {
  const std::vector<AttackFamily> fams{{"linf", {0.1}}, {"l2", {0.5}}};
  const AttackInstance c{"l2", 0.5};
  const auto f = make({kA, c}, {0.4, 0.3}, {0.5, 0.5});
  EXPECT_NEAR(uar(f.matrix, fams[0], f.baselines), 80.0, 1e-12);
  EXPECT_NEAR(uar(f.matrix, fams[1], f.baselines), 60.0, 1e-12);
  EXPECT_NEAR(muar(f.matrix, fams, f.baselines), 70.0, 1e-12);
}

TEST(UnionAccuracy, PerImage) {
  MinimalEpsilonProfile p;
  p.n_images = 2;
  p.families["linf"] = {{0.03, 0.06}, {0.05, kNeverSucceeds}};
  p.families["l2"] = {{0.03, 0.06}, {0.02, kNeverSucceeds}};
  EXPECT_DOUBLE_EQ(union_accuracy(p, {{"linf", 0.03}, {"l2", 0.03}}), 0.5);
  EXPECT_DOUBLE_EQ(union_accuracy(p, {{"linf", 0.06}}), 0.5);
  EXPECT_EQ(kind_of([&] { union_accuracy(p, {{"l1", 1.0}}); }), ErrorKind::kIncompleteEvaluation);
}

TEST(UnionAccuracy, ZeroLevelsGiveCleanAccuracy) {
  MinimalEpsilonProfile p;
  p.n_images = 4;
  p.families["linf"] = {{0.1}, {0.0, 0.1, kNeverSucceeds, kNeverSucceeds}};
  p.families["l2"] = {{0.5}, {0.0, 0.5, 0.5, kNeverSucceeds}};
  EXPECT_DOUBLE_EQ(union_accuracy(p, {{"linf", 0.0}, {"l2", 0.0}}), 0.75);
}

TEST(AverageAccuracy, Examples) {
  const auto f = three_cells();
  EXPECT_NEAR(average_accuracy(f.matrix, f.attacks), 0.4, 1e-12);
  const AttackSet point({kClean, kA, kB}, {1.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(average_accuracy(f.matrix, point), 0.5);
}

TEST(AttackStrength, Examples) {
  BaselineTable b(10);
  b.set(kA, {0.92});
  b.set(kB, {1.0});
  b.set(kClean, {0.1});
  EXPECT_NEAR(attack_strength(kA, b), 0.08, 1e-12);
  EXPECT_EQ(attack_strength(kB, b), 0.0);
  EXPECT_NEAR(attack_strength(kClean, b), 0.9, 1e-12);
  EXPECT_THROW(attack_strength({"l2", 1.0}, b), Error);
}

TEST(StabilityConstant, WorkedExample) {
  // strengths 0.05 / 0.10 known, 0.12 unknown
  const auto f = make({kClean, kA, kB}, {0.90, 0.60, 0.50}, {0.95, 0.90, 0.88});
  const KnowledgeSet k({kClean, kA});
  const auto sc = stability_constant(f.matrix, f.attacks, k, f.baselines, 0.03);
  EXPECT_NEAR(sc.value, 5.0, 1e-9);
  EXPECT_FALSE(sc.empty_pair_set);
  EXPECT_EQ(sc.known, kA);
  EXPECT_EQ(sc.other, kB);
}

TEST(StabilityConstant, ConstantAccuracyIsZero) {
  const auto f = make({kClean, kA, kB}, {0.4, 0.4, 0.4}, {0.95, 0.94, 0.93});
  const auto sc = stability_constant(f.matrix, f.attacks, KnowledgeSet({kClean, kA}), f.baselines, 0.03);
  EXPECT_EQ(sc.value, 0.0);
  EXPECT_FALSE(sc.empty_pair_set);
}

TEST(StabilityConstant, NoPairsWithinAlpha) {
  const auto f = make({kClean, kA}, {0.9, 0.2}, {0.95, 0.5});
  const auto sc = stability_constant(f.matrix, f.attacks, KnowledgeSet(), f.baselines, 0.03);
  EXPECT_TRUE(sc.empty_pair_set);
  EXPECT_EQ(sc.value, 0.0);
}

TEST(Ranking, SortsDescending) {
  std::vector<MetricReport> reports(3);
  const double values[] = {60.0, 70.0, 65.0};
  for (int i = 0; i < 3; ++i) {
    reports[i].model_id = "m" + std::to_string(i + 1);
    reports[i].cr_ind_avg = values[i];
  }
  const auto ranked = rank_leaderboard(reports, LeaderboardMetric::kCrIndAvg);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].model_id, "m2");
  EXPECT_EQ(ranked[1].model_id, "m3");
  EXPECT_EQ(ranked[2].model_id, "m1");
  EXPECT_EQ(ranked[2].rank, 3);
}

TEST(Ranking, TiesBreakOnCleanAccuracyThenId) {
  std::vector<MetricReport> reports(4);
  reports[0] = {.model_id = "b", .clean_accuracy = 0.8, .cr_ind_worst = 50.0};
  reports[1] = {.model_id = "a", .clean_accuracy = 0.8, .cr_ind_worst = 50.0};
  reports[2] = {.model_id = "c", .clean_accuracy = 0.9, .cr_ind_worst = 50.0};
  reports[3] = {.model_id = "d", .clean_accuracy = 1.0};
  const auto ranked = rank_leaderboard(reports, LeaderboardMetric::kCrIndWorst);
  EXPECT_EQ(ranked[0].model_id, "c");
  EXPECT_EQ(ranked[1].model_id, "a");
  EXPECT_EQ(ranked[2].model_id, "b");
  EXPECT_EQ(ranked[3].model_id, "d");
  EXPECT_FALSE(ranked[3].value);
}

TEST(Ranking, SingleReportRanksFirst) {
  std::vector<MetricReport> reports(1);
  reports[0].model_id = "solo";
  reports[0].cr_ind_avg = 12.0;
  EXPECT_EQ(rank_leaderboard(reports, LeaderboardMetric::kCrIndAvg)[0].rank, 1);
}

TEST(CrInOut, PartitionMeans) {
  const AttackInstance c{"linf", 0.3};
  const auto f = make({kClean, kB, c}, {0.8, 0.25, 0.15}, {0.8, 0.5, 0.5});
  const auto io = cr_in_out(f.matrix, f.attacks, KnowledgeSet(), f.baselines);
  EXPECT_NEAR(*io.cr_in, 100.0, 1e-12);
  EXPECT_NEAR(*io.cr_out, 40.0, 1e-12);
}

TEST(CrInOut, FullKnowledgeLeavesOutUndefined) {
  const auto f = three_cells();
  const auto io = cr_in_out(f.matrix, f.attacks, KnowledgeSet({kClean, kA, kB}), f.baselines);
  EXPECT_NEAR(*io.cr_in, cr_ind_avg(f.matrix, f.attacks, f.baselines).value, 1e-12);
  EXPECT_FALSE(io.cr_out);
}

TEST(CrInOut, StandardDefenseUsesCleanCell) {
  const auto f = three_cells();
  const auto io = cr_in_out(f.matrix, f.attacks, KnowledgeSet(), f.baselines);
  EXPECT_NEAR(*io.cr_in, 100.0 * 0.5 / 0.8, 1e-12);
}

TEST(Properties, RandomMatricesAgreeWithOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const char* families[] = {"linf", "l2", "brightness"};
  for (int trial = 0; trial < 300; ++trial) {
    const int per_family = 1 + static_cast<int>(gen() % 4);
    std::vector<AttackInstance> instances{kClean};
    for (const char* fam : families) {
      for (int i = 1; i <= per_family; ++i) instances.push_back({fam, 0.1 * i});
    }
    std::vector<double> acc;
    std::vector<double> acc_star;
    std::vector<oracle::Cell> cells;
    for (const auto& inst : instances) {
      acc.push_back(u(gen));
      acc_star.push_back(u(gen) < 0.1 ? 0.0 : u(gen));
      cells.push_back({inst.is_clean() ? "clean" : inst.family, inst.epsilon, acc.back(),
                       acc_star.back(), 1.0 / instances.size(), inst.is_clean() || u(gen) < 0.3});
    }
    const auto f = make(instances, acc, acc_star);
    std::vector<AttackInstance> known;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].known) known.push_back(instances[i]);
    }

    const auto want_avg = oracle::cr_ind_avg(cells);
    if (want_avg) {
      const double avg = cr_ind_avg(f.matrix, f.attacks, f.baselines).value;
      const double worst = cr_ind_worst(f.matrix, f.attacks, f.baselines).value;
      EXPECT_TRUE(oracle::close(avg, *want_avg, 1e-12));
      EXPECT_TRUE(oracle::close(worst, *oracle::cr_ind_worst(cells), 1e-12));
      EXPECT_LE(worst, avg + 1e-9);
    }
    if (const auto e = oracle::cr_exp(cells)) {
      EXPECT_TRUE(oracle::close(cr_exp(f.matrix, f.attacks, f.baselines), *e, 1e-12));
    }
    if (const auto m = oracle::cr_max(cells)) {
      EXPECT_TRUE(oracle::close(cr_max(f.matrix, f.attacks, f.baselines), *m, 1e-12));
    }
    EXPECT_TRUE(oracle::close(average_accuracy(f.matrix, f.attacks), oracle::average_accuracy(cells), 1e-12));

    const auto sc = stability_constant(f.matrix, f.attacks, KnowledgeSet(known), f.baselines, 0.03);
    const auto want_sc = oracle::stability_constant(cells, 0.03);
    EXPECT_EQ(sc.empty_pair_set, !want_sc.has_value());
    if (want_sc) EXPECT_TRUE(oracle::close(sc.value, *want_sc, 1e-12)) << sc.value << " vs " << *want_sc;
  }
}

TEST(Properties, ScalingBaselinesScalesCr) {
  auto f = three_cells();
  BaselineTable half(10);
  half.set(kClean, {0.4});
  half.set(kA, {0.25});
  half.set(kB, {0.3});
  const double base = cr_ind_avg(f.matrix, f.attacks, f.baselines).value;
  EXPECT_NEAR(cr_ind_avg(f.matrix, f.attacks, half).value, 2.0 * base, 1e-9);
}

TEST(ComputeReport, FillsEveryMetric) {
  const std::vector<AttackFamily> fams{{"linf", {0.1, 0.2}}};
  const auto f = three_cells();
  const auto k = AttackSet::from_families(fams);
  const auto r = compute_report(f.matrix, fams, k, KnowledgeSet({kClean, kA}), f.baselines, kDefaultAlpha);
  EXPECT_EQ(r.model_id, "m");
  EXPECT_DOUBLE_EQ(r.clean_accuracy, 0.5);
  EXPECT_NEAR(*r.cr_ind_avg, 64.16666666666667, 1e-9);
  EXPECT_NEAR(*r.cr_ind_worst, 50.0, 1e-12);
  EXPECT_NEAR(*r.cr_exp, 100.0 * 1.2 / 1.9, 1e-9);
  EXPECT_NEAR(*r.cr_max, 60.0, 1e-12);
  EXPECT_NEAR(*r.single_cr.at("linf").avg, *r.cr_ind_avg, 1e-12);
  EXPECT_FALSE(r.union_accuracy_by_level);
}
