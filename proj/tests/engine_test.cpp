#include <gtest/gtest.h>

#include "cohorts.hpp"

using namespace diagbed;

namespace {

CandidateEvaluation scored(const std::string& feature, std::vector<double> posts, double prior) {
    CandidateEvaluation e;
    e.feature = feature;
    e.posterior_draws = std::move(posts);
    for (std::size_t i = 0; i < e.posterior_draws.size(); ++i) e.outcome_samples.push_back({feature, 0.0, "0", 1.0});
    score(e, Belief(prior), {});
    return e;
}

EpisodeOptions no_stop(Method method, std::size_t budget, std::size_t m) {
    EpisodeOptions o;
    o.method = method;
    o.budget = budget;
    o.m = m;
    o.early_stop = false;
    return o;
}

}  // namespace

TEST(Engine, TwoTestOrdering) {
    auto sc = cohorts::two_test_scenario();
    auto s = SessionState::start(sc.schema, "1", sc.known);
    EXPECT_EQ(estimate_prior(s, sc.surrogate, 2).p(), 0.2);
    const auto evals = evaluate_candidates(s, sc.surrogate, 2, {}, false);
    ASSERT_EQ(evals.size(), 2u);
    EXPECT_EQ(evals[0].feature, "Serum creatinine");
    EXPECT_NEAR(evals[0].expected_kl, 0.2390042981683558, 1e-12);
    EXPECT_NEAR(evals[1].expected_kl, 0.0800601248051340, 1e-12);
    EXPECT_EQ(select_next(evals, Criterion::Kl), "Serum creatinine");
}

TEST(Engine, TiesGoToFirstInSchemaOrder) {
    const std::vector<CandidateEvaluation> evals{scored("a", {0.3, 0.7}, 0.5), scored("b", {0.7, 0.3}, 0.5),
                                                 scored("c", {0.5, 0.5}, 0.5)};
    EXPECT_EQ(evals[0].expected_kl, evals[1].expected_kl);
    EXPECT_EQ(select_next(evals, Criterion::Kl), "a");
    EXPECT_EQ(select_next(evals, Criterion::Entropy), "a");
}

TEST(Engine, FailedCandidatesNeverSelected) {
    auto good = scored("good", {0.6}, 0.5);
    CandidateEvaluation bad;
    bad.feature = "bad";
    bad.failed = true;
    bad.utility = 99.0;
    bad.expected_kl = 99.0;
    EXPECT_EQ(select_next({bad, good}, Criterion::Kl), "good");
    EXPECT_THROW(select_next({bad}, Criterion::Kl), Error);
    EXPECT_FALSE(check_stop({bad, good}, Belief(0.5), {0.5, 0.5}));
    EXPECT_TRUE(check_stop({bad}, Belief(0.5), {0.5, 0.5}));
}

TEST(Engine, StopIffBestBelowThreshold) {
    // Threshold at prior 0.2, gamma 0 is kl(0.5||0.2) = 0.2231.
    const StoppingPolicy policy{0.5, 0.0};
    EXPECT_FALSE(check_stop({scored("c", {0.65, 0.22}, 0.2)}, Belief(0.2), policy));
    EXPECT_TRUE(check_stop({scored("s", {0.45, 0.18}, 0.2)}, Belief(0.2), policy));
    // Gamma 0.5 raises the bar to kl(0.65||0.2) = 0.4768: creatinine no longer suffices.
    EXPECT_TRUE(check_stop({scored("c", {0.65, 0.22}, 0.2)}, Belief(0.2), {0.5, 0.5}));
}

TEST(Engine, PriorHeldFixedWithinStepAndBackfilled) {
    auto sc = cohorts::two_test_scenario();
    auto s = SessionState::start(sc.schema, "1", sc.known);
    const auto rec = recommend(s, sc.surrogate, 2, Criterion::Kl, {0.5, 0.0});
    ASSERT_TRUE(rec.recommended);
    EXPECT_EQ(rec.prior.p(), 0.2);
    EXPECT_EQ(rec.prior_draws, (std::vector<double>{0.2, 0.2}));
    apply_result(s, *rec.recommended, 4.1, ChosenBy::Criterion, &rec);
    ASSERT_EQ(s.trajectory.size(), 1u);
    EXPECT_EQ(s.trajectory[0].prior_before, 0.2);
    EXPECT_FALSE(s.trajectory[0].prior_after);
    EXPECT_FALSE(s.prior);
    estimate_prior(s, sc.surrogate, 2);
    EXPECT_EQ(s.trajectory[0].prior_after, 0.65);
}

TEST(Engine, ApplyResultPartitionInvariant) {
    auto sc = cohorts::two_test_scenario();
    auto s = SessionState::start(sc.schema, "1", sc.known);
    apply_result(s, "Sodium levels", 128.0, ChosenBy::Override);
    EXPECT_EQ(s.known, (std::vector<std::string>{"age", "Sodium levels"}));
    EXPECT_EQ(s.unknown, std::vector<std::string>{"Serum creatinine"});
    EXPECT_EQ(s.acquisitions(), 1u);
    EXPECT_EQ(s.trajectory[0].chosen_by, ChosenBy::Override);
    try {
        apply_result(s, "Sodium levels", 130.0, ChosenBy::Override);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Conflict);
    }
    EXPECT_THROW(apply_result(s, "Serum creatinine", std::string("high"), ChosenBy::Override), Error);
    EXPECT_THROW(apply_result(s, "nonexistent", 1.0, ChosenBy::Override), Error);
    EXPECT_EQ(s.unknown.size() + s.known.size(), sc.schema.features.size());
}

TEST(Engine, StartRejectsUnknownFeatures) {
    auto sc = cohorts::two_test_scenario();
    try {
        SessionState::start(sc.schema, "1", {{"age", 60.0}, {"weight", 80.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        EXPECT_EQ(e.field(), "weight");
    }
}

TEST(Engine, EvaluateRequiresPriorAndUnknowns) {
    auto sc = cohorts::two_test_scenario();
    auto s = SessionState::start(sc.schema, "1", sc.known);
    EXPECT_THROW(evaluate_candidates(s, sc.surrogate, 2), Error);
}

TEST(Engine, CandidateQueryCount) {
    auto c = cohorts::world_cohort(1, 10);
    auto s = SessionState::start(c.schema, c.patients[0]);
    estimate_prior(s, c.surrogate, 10);
    const auto before = c.surrogate.counter();
    const auto evals = evaluate_candidates(s, c.surrogate, 10);
    EXPECT_EQ(evals.size(), 4u);
    EXPECT_EQ(c.surrogate.counter().sample() - before.sample(), 40u);
    EXPECT_EQ(c.surrogate.counter().risk() - before.risk(), 40u);
    EXPECT_EQ(s.queries_used, 10u + 80u);
}

TEST(Engine, EvaluateCountsScaleWithM) {
    auto c = cohorts::world_cohort(1, 10);
    auto s = SessionState::start(c.schema, c.patients[0]);
    estimate_prior(s, c.surrogate, 10);
    evaluate_candidates(s, c.surrogate, 20);
    EXPECT_EQ(c.surrogate.counter().sample(), 80u);
    EXPECT_EQ(c.surrogate.counter().risk(), 10u + 80u);
}

TEST(Engine, ParallelAndSerialAgree) {
    auto c = cohorts::world_cohort(1, 10);
    auto a = SessionState::start(c.schema, c.patients[0], 5);
    auto b = SessionState::start(c.schema, c.patients[0], 5);
    const auto ra = recommend(a, c.surrogate, 10, Criterion::Kl, {}, {}, true);
    const auto rb = recommend(b, c.surrogate, 10, Criterion::Kl, {}, {}, false);
    ASSERT_EQ(ra.evaluations.size(), rb.evaluations.size());
    for (std::size_t i = 0; i < ra.evaluations.size(); ++i) {
        EXPECT_EQ(ra.evaluations[i].feature, rb.evaluations[i].feature);
        EXPECT_EQ(ra.evaluations[i].posterior_draws, rb.evaluations[i].posterior_draws);
        EXPECT_EQ(ra.evaluations[i].expected_kl, rb.evaluations[i].expected_kl);
    }
    EXPECT_EQ(ra.recommended, rb.recommended);
    EXPECT_EQ(a.queries_used, b.queries_used);
}

TEST(Engine, FailingCandidateMarkedNotFatal) {
    auto sc = cohorts::two_test_scenario();
    auto schema = cohorts::make_schema(
        "x", {cohorts::numeric("age", true), cohorts::numeric("Serum creatinine"), cohorts::numeric("Sodium levels"),
              cohorts::numeric("Unscripted")});
    auto s = SessionState::start(schema, "1", sc.known);
    const auto rec = recommend(s, sc.surrogate, 2, Criterion::Kl, {0.5, 0.0});
    ASSERT_EQ(rec.evaluations.size(), 3u);
    EXPECT_TRUE(rec.evaluations[2].failed);
    EXPECT_FALSE(rec.evaluations[2].error.empty());
    EXPECT_TRUE(rec.evaluations[2].posterior_draws.empty());
    EXPECT_EQ(rec.recommended, "Serum creatinine");
}

TEST(Episode, ExactQueryAccounting) {
    auto c = cohorts::world_cohort(1, 10);
    const auto r = run_episode(c.schema, c.patients[0], no_stop(Method::Actmed, 3, 10), c.surrogate, 1);
    ASSERT_FALSE(r.failed) << r.error;
    EXPECT_EQ(r.session.acquisitions(), 3u);
    EXPECT_EQ(r.session.status, SessionStatus::BudgetExhausted);
    // Prior per step, outcome and posterior per remaining candidate, final risk.
    const std::uint64_t expected = 3 * 10 + (4 + 3 + 2) * 10 + (4 + 3 + 2) * 10 + 10;
    EXPECT_EQ(r.session.queries_used, expected);
    EXPECT_EQ(c.surrogate.counter().total(), expected);
}

TEST(Episode, EarlyStopRecordsStopStep) {
    auto sc = cohorts::two_test_scenario();
    PatientRecord p{"1", {{"age", 63.0}, {"Serum creatinine", 4.1}, {"Sodium levels", 128.0}}, 1, {}};
    EpisodeOptions o;
    o.m = 2;
    o.budget = 2;
    o.policy = {0.5, 0.5};
    const auto r = run_episode(sc.schema, p, o, sc.surrogate, 1);
    ASSERT_FALSE(r.failed) << r.error;
    EXPECT_EQ(r.session.status, SessionStatus::StoppedByCriterion);
    EXPECT_EQ(r.session.acquisitions(), 0u);
    ASSERT_EQ(r.session.trajectory.size(), 1u);
    EXPECT_FALSE(r.session.trajectory[0].chosen);
    EXPECT_EQ(r.session.trajectory[0].recommended, "Serum creatinine");
    EXPECT_EQ(r.final_risk, 0.2);
    EXPECT_EQ(r.predicted, 0);
}

TEST(Episode, KlBeatsEntropyOnPathology) {
    auto p = cohorts::pathology_cohort(5, 5);
    const auto kl = run_episode(p.schema, p.patients[0], no_stop(Method::Actmed, 1, 2), p.surrogate, 1);
    const auto ent = run_episode(p.schema, p.patients[0], no_stop(Method::ActmedEntropy, 1, 2), p.surrogate, 1);
    EXPECT_EQ(kl.session.known.back(), "A");
    EXPECT_EQ(ent.session.known.back(), "B");
    EXPECT_EQ(kl.predicted, 1);
    EXPECT_EQ(ent.predicted, 0);
}

TEST(Episode, BaselinesRespectBudget) {
    auto c = cohorts::world_cohort(3, 10);
    c.surrogate.set_global({"T4", "T2", "T1", "T3"});
    for (auto m : {Method::Random, Method::Global, Method::Implicit}) {
        SCOPED_TRACE(to_string(m));
        const auto r = run_episode(c.schema, c.patients[1], no_stop(m, 2, 10), c.surrogate, 9);
        ASSERT_FALSE(r.failed) << r.error;
        EXPECT_EQ(r.session.acquisitions(), 2u);
        EXPECT_EQ(r.session.known.size() + r.session.unknown.size(), 4u);
    }
    const auto g = run_episode(c.schema, c.patients[1], no_stop(Method::Global, 2, 10), c.surrogate, 9);
    EXPECT_EQ(g.session.known, (std::vector<std::string>{"T4", "T2"}));
    const auto all = run_episode(c.schema, c.patients[1], no_stop(Method::AllFeatures, 2, 10), c.surrogate, 9);
    EXPECT_EQ(all.session.unknown.size(), 0u);
    EXPECT_DOUBLE_EQ(all.final_risk, c.world.posterior(c.patients[1].values));
}

TEST(Episode, RandomDeterministicInSeed) {
    auto c = cohorts::world_cohort(2, 10);
    const auto a = run_episode(c.schema, c.patients[0], no_stop(Method::Random, 2, 10), c.surrogate, 3);
    const auto b = run_episode(c.schema, c.patients[0], no_stop(Method::Random, 2, 10), c.surrogate, 3);
    EXPECT_EQ(a.session.known, b.session.known);
}

TEST(Episode, BudgetAboveCandidatesRejected) {
    auto c = cohorts::world_cohort(1, 10);
    EXPECT_THROW(run_episode(c.schema, c.patients[0], no_stop(Method::Actmed, 5, 10), c.surrogate, 1), Error);
}

TEST(Episode, SurrogateFailureMarksEpisodeFailed) {
    auto sc = cohorts::two_test_scenario();
    PatientRecord p{"1", {{"age", 99.0}, {"Serum creatinine", 4.1}, {"Sodium levels", 128.0}}, 1, {}};
    const auto r = run_episode(sc.schema, p, no_stop(Method::Actmed, 1, 2), sc.surrogate, 1);
    EXPECT_TRUE(r.failed);
    EXPECT_EQ(r.session.status, SessionStatus::Failed);
    EXPECT_FALSE(r.error.empty());
}

TEST(Episode, CostsChangeTheChoice) {
    auto sc = cohorts::two_test_scenario();
    PatientRecord p{"1", {{"age", 63.0}, {"Serum creatinine", 4.1}, {"Sodium levels", 128.0}}, 1, {}};
    auto o = no_stop(Method::Actmed, 1, 2);
    // 0.2390/ln(1000) = 0.0346 < 0.0801/ln(2) = 0.1155
    o.costs = CostModel::per_feature({{"Serum creatinine", 1000.0}, {"Sodium levels", 2.0}});
    const auto r = run_episode(sc.schema, p, o, sc.surrogate, 1);
    ASSERT_FALSE(r.failed) << r.error;
    EXPECT_EQ(r.session.known.back(), "Sodium levels");
}

TEST(Episode, ParseEnums) {
    EXPECT_EQ(parse_method("actmed-entropy"), Method::ActmedEntropy);
    EXPECT_EQ(parse_method("all-features"), Method::AllFeatures);
    EXPECT_THROW(parse_method("greedy"), Error);
    EXPECT_EQ(parse_criterion("entropy"), Criterion::Entropy);
    for (auto s : {SessionStatus::Active, SessionStatus::StoppedByCriterion, SessionStatus::BudgetExhausted,
                   SessionStatus::Diagnosed, SessionStatus::Abandoned, SessionStatus::Failed}) {
        EXPECT_EQ(parse_status(to_string(s)), s);
    }
}
