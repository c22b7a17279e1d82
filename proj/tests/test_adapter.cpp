#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sight/adapter.hpp"
#include "sight/baselines.hpp"
#include "sight/simulator.hpp"
#include "support/differential.hpp"

namespace sight {
namespace {

using Vec = std::vector<double>;

StreamRecord logits_record(Vec feature, Vec logits, std::uint64_t t = 0) {
    StreamRecord r;
    r.index = t;
    r.feature = std::move(feature);
    r.scores = std::move(logits);
    r.kind = ScoreKind::Logits;
    return r;
}

Vec row(std::span<const double> s) { return Vec(s.begin(), s.end()); }

// --- initialize_prototypes ---------------------------------------------------

TEST(InitializePrototypes, IdentityRows) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(bank.prototype(k)[i], k == i ? 1.0 : 0.0, 1e-7);
    }
    EXPECT_EQ(bank.prototypes(), bank.anchors());
}

TEST(InitializePrototypes, ThreeFourFive) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{3, 4, 0}, {0, 0, 1}}));
    EXPECT_NEAR(bank.prototype(0)[0], 0.6, 1e-7);
    EXPECT_NEAR(bank.prototype(0)[1], 0.8, 1e-7);
    EXPECT_EQ(bank.prototype(0)[2], 0.0);
}

TEST(InitializePrototypes, PlantedHeadRows) {
    const auto world = sim::build_world(sim::default_benchmark_config(3));
    const auto& w = world.head.weights;
    const auto bank = initialize_prototypes(w);
    for (std::size_t k = 0; k < w.rows(); ++k) {
        long double n = 0;
        for (double x : w.row(k)) n += static_cast<long double>(x) * x;
        n = std::sqrt(n);
        for (std::size_t i = 0; i < w.cols(); ++i) {
            EXPECT_NEAR(bank.prototype(k)[i], static_cast<double>(w(k, i) / n), 1e-6);
        }
    }
}

TEST(InitializePrototypes, ZeroRowNamesClass) {
    try {
        initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 0}, {0, 1}}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateClass);
        EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
    }
}

TEST(InitializePrototypes, NonFiniteRejected) {
    try {
        initialize_prototypes(Matrix::from_rows({{1, 0}, {0, INFINITY}}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
    }
}

// --- expected_state ----------------------------------------------------------

TEST(ExpectedState, OneHotSelectsPrototype) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{0.3, -1.2, 2.0}, {1.0, 1.0, 0.0}}));
    const auto e = expected_state(bank, ProbVector::one_hot(2, 1));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(e[i], bank.prototype(1)[i], 2e-8);
}

TEST(ExpectedState, UniformOverBasis) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    const auto e = expected_state(bank, ProbVector::uniform(2));
    const double h = static_cast<double>(1.0L / std::sqrt(2.0L));
    EXPECT_NEAR(e[0], h, 1e-7);
    EXPECT_NEAR(e[1], h, 1e-7);
}

TEST(ExpectedState, AntipodalCancellationIsFlagged) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {-1, 0}}));
    EXPECT_TRUE(expected_state(bank, ProbVector::uniform(2)).is_degenerate());

    SightConfig cfg;
    cfg.ablations = {Ablation::NoPrototypeUpdate};  // keep the bank antipodal after step 1
    SightAdapter a(bank, cfg);
    a.step(logits_record({1.0, 0.2}, {0.0, 0.0}));
    const auto& t = a.step(logits_record({1.0, 0.2}, {0.3, 0.0}, 1));
    EXPECT_TRUE(t.degenerate_expectation);
    EXPECT_EQ(t.expected_state, Vec({0.0, 0.0}));
    EXPECT_DOUBLE_EQ(t.discrepancy, 1.0);
}

// --- surprise ----------------------------------------------------------------

TEST(Surprise, PerfectPersistence) {
    const auto z = normalize(Vec{0.2, 0.9, -0.4});
    const auto s = surprise(z, z, SightConfig{});
    EXPECT_EQ(s.discrepancy, 0.0);
    EXPECT_EQ(s.lambda, 0.0);
}

TEST(Surprise, Antipodal) {
    const auto s = surprise(UnitVector::trusted({1, 0}), UnitVector::trusted({-1, 0}), SightConfig{});
    EXPECT_DOUBLE_EQ(s.discrepancy, 2.0);
    EXPECT_NEAR(s.lambda, static_cast<double>(1.0L - std::exp(-4.0L)), 1e-6);
    EXPECT_NEAR(s.lambda, 0.9816844, 1e-6);
}

TEST(Surprise, Orthogonal) {
    const auto s = surprise(UnitVector::trusted({1, 0}), UnitVector::trusted({0, 1}), SightConfig{});
    EXPECT_DOUBLE_EQ(s.discrepancy, 1.0);
    EXPECT_NEAR(s.lambda, static_cast<double>(1.0L - std::exp(-1.0L)), 1e-6);
}

TEST(Surprise, FeatureDistanceVariant) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::SurpriseFeatureDistance);
    const auto s = surprise(UnitVector::trusted({1, 0}), UnitVector::trusted({0, 1}), cfg);
    EXPECT_NEAR(s.discrepancy, std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(s.lambda, static_cast<double>(1.0L - std::exp(-2.0L)), 1e-12);
}

TEST(Surprise, NoSurpriseForcesConstant) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::NoSurprise);
    const auto z = UnitVector::trusted({1, 0});
    EXPECT_EQ(surprise(z, z, cfg).lambda, 1.0);
    cfg.no_surprise_lambda = 0.5;
    EXPECT_EQ(surprise(z, UnitVector::trusted({0, 1}), cfg).lambda, 0.5);
}

// --- geometric_routing -------------------------------------------------------

TEST(GeometricRouting, ZeroDisplacementIsUniform) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}}));
    const auto z = normalize(Vec{0.4, 0.7});
    const auto r = geometric_routing(z, z, bank, SightConfig{});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(r[k], 1.0 / 3.0);
}

TEST(GeometricRouting, DisplacementTowardSecondPrototype) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    // expected state equal to mu_1, so u_1 is a zero direction and scores 0
    const auto expected = UnitVector::trusted(row(bank.prototype(0)));
    const double h = std::sqrt(0.5);
    const auto observed = UnitVector::trusted({h, h});
    const auto r = geometric_routing(observed, expected, bank, SightConfig{});

    const long double e0 = expected[0], e1 = expected[1];
    long double vx = h - e0, vy = h - e1;
    long double vn = std::sqrt(vx * vx + vy * vy) + 1e-8L;
    vx /= vn;
    vy /= vn;
    long double ux = bank.prototype(1)[0] - e0, uy = bank.prototype(1)[1] - e1;
    long double un = std::sqrt(ux * ux + uy * uy) + 1e-8L;
    const long double a2 = (vx * ux + vy * uy) / un;
    const long double r2 = 1.0L / (1.0L + std::exp(-a2 / 0.05L));
    EXPECT_GT(r[1], r[0]);
    EXPECT_GT(r[1], 0.99);
    EXPECT_NEAR(r[1], static_cast<double>(r2), 1e-12);
}

TEST(GeometricRouting, ThreeDirectionsAt120Degrees) {
    const double pi = std::numbers::pi;
    std::vector<Vec> rows;
    for (int k = 0; k < 3; ++k) {
        const double th = pi / 2 + 2 * pi * k / 3;
        rows.push_back({std::cos(th), std::sin(th), 1.0});
    }
    const auto bank = initialize_prototypes(Matrix::from_rows(rows));
    const auto expected = UnitVector::trusted({0.0, 0.0, 1.0});
    Vec u2(3);
    for (int i = 0; i < 3; ++i) u2[i] = bank.prototype(2)[i] - expected[i];
    const auto u2n = normalize(u2);
    Vec obs(3);
    for (int i = 0; i < 3; ++i) obs[i] = expected[i] + 0.3 * u2n[i];
    const auto observed = normalize(obs);
    const auto r = geometric_routing(observed, expected, bank, SightConfig{});

    // brute force over the three alignments
    std::size_t best = 0;
    long double best_a = -10;
    for (std::size_t k = 0; k < 3; ++k) {
        long double v[3], u[3], vn = 0, un = 0, a = 0;
        for (int i = 0; i < 3; ++i) {
            v[i] = static_cast<long double>(observed[i]) - expected[i];
            u[i] = static_cast<long double>(bank.prototype(k)[i]) - expected[i];
            vn += v[i] * v[i];
            un += u[i] * u[i];
        }
        for (int i = 0; i < 3; ++i) a += v[i] * u[i];
        a /= std::sqrt(vn) * std::sqrt(un);
        if (a > best_a) {
            best_a = a;
            best = k;
        }
    }
    EXPECT_EQ(best, 2u);
    EXPECT_EQ(r.argmax(), best);
}

TEST(GeometricRouting, AblationGivesUniform) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::NoGeometricRouting);
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    const auto r = geometric_routing(UnitVector::trusted({0, 1}), UnitVector::trusted({1, 0}), bank, cfg);
    EXPECT_EQ(r[0], 0.5);
    EXPECT_EQ(r[1], 0.5);
}

// --- calibrate_prior ---------------------------------------------------------

TEST(CalibratePrior, UniformHabitIsIdentity) {
    const auto r = ProbVector::from_values({0.1, 0.6, 0.3});
    const auto rho = calibrate_prior(r, ProbVector::uniform(3), SightConfig{});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(rho[k], r[k], 1e-15);
}

TEST(CalibratePrior, SquareRootFlattening) {
    const Vec h = {0.81, 0.09, 0.09, 0.01};
    // with uniform routing rho equals the flattened habit
    const auto rho = calibrate_prior(ProbVector::uniform(4), ProbVector::from_values(h), SightConfig{});
    long double s = 0, f[4];
    for (int k = 0; k < 4; ++k) s += f[k] = std::sqrt(static_cast<long double>(h[k]) + 1e-8L);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(rho[k], static_cast<double>(f[k] / s), 1e-12);
    // eps inside the root shifts the ratio by about 9 * eps / (2 * 0.01)
    EXPECT_NEAR(rho[0] / rho[3], 9.0, 1e-5);
    EXPECT_NEAR(rho[0], 0.5625, 1e-6);
    EXPECT_NEAR(rho[1], 0.1875, 1e-6);
    EXPECT_NEAR(rho[3], 0.0625, 1e-6);
}

TEST(CalibratePrior, OneHotRoutingKeepsSupport) {
    const auto rho = calibrate_prior(ProbVector::one_hot(3, 2), ProbVector::from_values({0.7, 0.2, 0.1}),
                                     SightConfig{});
    EXPECT_EQ(rho[0], 0.0);
    EXPECT_EQ(rho[1], 0.0);
    EXPECT_DOUBLE_EQ(rho[2], 1.0);
}

TEST(CalibratePrior, Ablations) {
    const auto r = ProbVector::from_values({0.5, 0.5});
    const auto h = ProbVector::from_values({0.8, 0.2});
    SightConfig raw;
    raw.ablations.insert(Ablation::HabitRaw);
    const auto a = calibrate_prior(r, h, raw);
    EXPECT_NEAR(a[0], 0.8, 1e-15);
    SightConfig none;
    none.ablations.insert(Ablation::NoHabitPrior);
    EXPECT_EQ(calibrate_prior(r, h, none), r);
}

// --- refine ------------------------------------------------------------------

TEST(Refine, PersistenceLimit) {
    const auto prev = ProbVector::from_values({0.2, 0.3, 0.5});
    const auto rho = ProbVector::from_values({0.6, 0.3, 0.1});
    const auto res = refine(ProbVector::from_values({0.4, 0.4, 0.2}), prev, 0.0, rho);
    EXPECT_EQ(res.prior, prev);
}

TEST(Refine, FullRelease) {
    const auto prev = ProbVector::from_values({0.2, 0.3, 0.5});
    const auto rho = ProbVector::from_values({0.6, 0.3, 0.1});
    const auto res = refine(ProbVector::from_values({0.4, 0.4, 0.2}), prev, 1.0, rho);
    EXPECT_EQ(res.prior, rho);
}

TEST(Refine, UniformLikelihoodIsIdentity) {
    const auto prev = ProbVector::from_values({0.2, 0.3, 0.5});
    const auto rho = ProbVector::from_values({0.6, 0.3, 0.1});
    const auto res = refine(ProbVector::uniform(3), prev, 0.37, rho);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(res.refined[k], res.prior[k], 1e-15);
}

TEST(Refine, HandComputedConsensus) {
    const auto pi = ProbVector::from_values({0.3, 0.7});
    const auto res = refine(ProbVector::from_values({0.7, 0.3}), pi, 0.0, pi);
    EXPECT_NEAR(res.refined[0], 0.5, 1e-15);
    EXPECT_NEAR(res.refined[1], 0.5, 1e-15);
    EXPECT_FALSE(res.annihilated);
}

TEST(Refine, DisjointSupportsAnnihilate) {
    const auto res = refine(ProbVector::one_hot(3, 0), ProbVector::one_hot(3, 1), 0.0, ProbVector::uniform(3));
    EXPECT_TRUE(res.annihilated);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(res.refined[k], 1.0 / 3.0);
}

TEST(Refine, LambdaOutOfRange) {
    const auto u = ProbVector::uniform(2);
    for (double lam : {-0.1, 1.5, std::nan("")}) {
        try {
            refine(u, u, lam, u);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Parameter);
        }
    }
}

// --- update_habit ------------------------------------------------------------

TEST(UpdateHabit, FixedPoint) {
    const auto h = ProbVector::from_values({0.1, 0.2, 0.7});
    const auto out = update_habit(h, h, SightConfig{});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out[k], h[k], 1e-16);
}

TEST(UpdateHabit, FrozenWhenRateIsZero) {
    SightConfig cfg;
    cfg.eta_h = 0.0;
    const auto h = ProbVector::from_values({0.1, 0.2, 0.7});
    EXPECT_EQ(update_habit(h, ProbVector::one_hot(3, 0), cfg), h);
}

TEST(UpdateHabit, ConvexStep) {
    const auto out = update_habit(ProbVector::uniform(2), ProbVector::one_hot(2, 0), SightConfig{});
    EXPECT_NEAR(out[0], 0.95 * 0.5 + 0.05 * 1.0, 1e-15);
    EXPECT_NEAR(out[1], 0.95 * 0.5, 1e-15);
    EXPECT_NEAR(out[0], 0.525, 1e-15);
}

// --- update_prototypes -------------------------------------------------------

TEST(UpdatePrototypes, SourceIsFixedPointWithoutLearning) {
    SightConfig cfg;
    cfg.eta_mu = 0.0;
    const auto bank = initialize_prototypes(Matrix::from_rows({{0.3, 0.4}, {-1, 2}}));
    const auto out = update_prototypes(bank, UnitVector::trusted({0, 1}), ProbVector::uniform(2), cfg);
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out.prototype(k)[i], bank.anchor(k)[i], 1e-7);
    }
}

TEST(UpdatePrototypes, ZeroAssignmentUntouched) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::NoSourceAnchor);
    auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    bank = update_prototypes(bank, normalize(Vec{1, 1}), ProbVector::one_hot(2, 0), cfg);
    const auto out = update_prototypes(bank, UnitVector::trusted({-1, 0}), ProbVector::one_hot(2, 1), cfg);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out.prototype(0)[i], bank.prototype(0)[i], 1e-7);
}

TEST(UpdatePrototypes, HandComputedStep) {
    SightConfig cfg;
    cfg.omega_mu = 0.0;
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    const auto out = update_prototypes(bank, UnitVector::trusted({0, 1}), ProbVector::one_hot(2, 0), cfg);
    const long double n = std::sqrt(0.995L * 0.995L + 0.005L * 0.005L);
    EXPECT_NEAR(out.prototype(0)[0], static_cast<double>(0.995L / n), 1e-6);
    EXPECT_NEAR(out.prototype(0)[1], static_cast<double>(0.005L / n), 1e-6);
    EXPECT_NEAR(out.prototype(0)[0], 0.9999874, 1e-6);
    EXPECT_NEAR(out.prototype(0)[1], 0.0050251, 1e-6);
}

TEST(UpdatePrototypes, HardAssignmentTiesToLowestIndex) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::AssignmentHard);
    cfg.ablations.insert(Ablation::NoSourceAnchor);
    cfg.eta_mu = 0.5;
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}}));
    const auto out = update_prototypes(bank, UnitVector::trusted({0, -1}), ProbVector::from_values({0.4, 0.4, 0.2}), cfg);
    EXPECT_LT(out.prototype(0)[1], -0.1);
    EXPECT_NEAR(out.prototype(1)[1], bank.prototype(1)[1], 1e-7);
    EXPECT_NEAR(out.prototype(2)[0], bank.prototype(2)[0], 1e-7);
}

TEST(UpdatePrototypes, AnchorPullsBack) {
    SightConfig with_anchor;
    with_anchor.eta_mu = 0.3;
    SightConfig without = with_anchor;
    without.ablations.insert(Ablation::NoSourceAnchor);
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    const auto z = UnitVector::trusted({0, 1});
    const auto q = ProbVector::one_hot(2, 0);
    const auto a = update_prototypes(bank, z, q, with_anchor);
    const auto b = update_prototypes(bank, z, q, without);
    EXPECT_LT(a.prototype(0)[1], b.prototype(0)[1]);
}

TEST(UpdatePrototypes, FrozenBank) {
    SightConfig cfg;
    cfg.ablations.insert(Ablation::NoPrototypeUpdate);
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}}));
    EXPECT_EQ(update_prototypes(bank, UnitVector::trusted({0, 1}), ProbVector::one_hot(2, 0), cfg), bank);
}

// --- step --------------------------------------------------------------------

TEST(Step, FirstRecordReturnsSoftmax) {
    SightAdapter a(initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}})), SightConfig{});
    const Vec logits = {0.5, -1.0, 2.0};
    const auto& t = a.step(logits_record({0.3, 0.1}, logits));
    const auto p = softmax_temp(logits, 1.0);
    EXPECT_EQ(t.refined, p.values());
    EXPECT_EQ(t.surprise, 0.0);
    for (double r : t.routing) EXPECT_DOUBLE_EQ(r, 1.0 / 3.0);
    for (double r : t.calibrated_prior) EXPECT_DOUBLE_EQ(r, 1.0 / 3.0);
    EXPECT_EQ(t.expected_state, normalize(Vec{0.3, 0.1}).values());
    // habit and prototypes already moved on the first step
    const auto st = a.state();
    EXPECT_NEAR(st.habit[2], 0.95 / 3.0 + 0.05 * p[2], 1e-15);
    EXPECT_NE(st.bank.prototypes(), st.bank.anchors());
    EXPECT_TRUE(st.prev_belief.has_value());
    EXPECT_EQ(st.step, 1u);
}

TEST(Step, StationaryStreamSettles) {
    const auto bank = initialize_prototypes(Matrix::from_rows({{1, 0.2, 0}, {0, 1, 0.3}, {0.2, 0, 1}}));
    SightAdapter a(bank, SightConfig{});
    const Vec logits = {0.2, 1.5, -0.3};
    const Vec feature = row(bank.prototype(1));
    double lambda_at_10 = 1.0;
    for (std::uint64_t t = 0; t < 30; ++t) {
        const auto& tr = a.step(logits_record(feature, logits, t));
        EXPECT_EQ(tr.predicted(), 1u);
        if (t == 10) lambda_at_10 = tr.surprise;
    }
    EXPECT_LT(lambda_at_10, 1e-6);
}

TEST(Step, ContractErrorNamesStep) {
    SightAdapter a(initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}})), SightConfig{});
    a.step(logits_record({1, 0}, {0, 0}));
    a.step(logits_record({1, 0}, {0, 0}, 1));
    try {
        a.step(logits_record({1, 0, 0}, {0, 0}, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StreamContract);
        EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
    }
}

TEST(Step, ProbabilityRecords) {
    SightAdapter a(initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}})), SightConfig{});
    StreamRecord r = logits_record({1, 0}, {0.25, 0.75});
    r.kind = ScoreKind::Probs;
    EXPECT_EQ(a.step(r).refined, Vec({0.25, 0.75}));
    r.scores = {0.5, 0.6};
    try {
        a.step(r);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
    }
}

TEST(Step, PureTransitionMatchesAdapter) {
    const auto c = testing::make_diff_case(11, 20);
    SightAdapter a(initialize_prototypes(c.weights), c.config);
    auto state = AdapterState::initial(initialize_prototypes(c.weights), c.config);
    for (const auto& r : c.records) {
        const StepTrace expected = a.step(r);
        auto out = step(std::move(state), r);
        EXPECT_EQ(out.trace, expected);
        EXPECT_EQ(out.refined.values(), expected.refined);
        state = std::move(out.state);
    }
    EXPECT_EQ(state, a.state());
}

TEST(Step, StateRoundTripThroughSnapshot) {
    const auto c = testing::make_diff_case(11, 33);
    SightAdapter a(initialize_prototypes(c.weights), c.config);
    const std::size_t half = c.records.size() / 2;
    for (std::size_t t = 0; t < half; ++t) a.step(c.records[t]);
    SightAdapter b(a.state());
    for (std::size_t t = half; t < c.records.size(); ++t) EXPECT_EQ(a.step(c.records[t]), b.step(c.records[t]));
}

TEST(Step, AllNullingAblationsEqualSourceOnly) {
    for (std::size_t i = 0; i < 10; ++i) {
        auto c = testing::make_diff_case(5, 100 + i);
        c.config.ablations = {Ablation::NoSurprise, Ablation::NoGeometricRouting, Ablation::NoHabitPrior};
        c.config.no_surprise_lambda = 1.0;
        SightAdapter a(initialize_prototypes(c.weights), c.config);
        SourceOnly s(c.weights.rows());
        for (const auto& r : c.records) {
            const auto& ta = a.step(r);
            const auto& ts = s.step(r);
            for (std::size_t k = 0; k < ta.refined.size(); ++k) {
                EXPECT_NEAR(ta.refined[k], ts.refined[k], 1e-9);
                EXPECT_NEAR(ta.calibrated_prior[k], 1.0 / static_cast<double>(ta.refined.size()), 1e-15);
            }
        }
    }
}

TEST(Step, AnchoringContractsWithoutLearning) {
    SightConfig cfg;
    cfg.eta_mu = 0.3;
    auto c = testing::make_diff_case(9, 40);
    SightAdapter a(initialize_prototypes(c.weights), cfg);
    for (std::size_t t = 0; t < std::min<std::size_t>(c.records.size(), 20); ++t) a.step(c.records[t]);
    auto state = a.state();
    state.config.eta_mu = 0.0;
    SightAdapter frozen(state);
    auto dist = [](const PrototypeBank& b) {
        Vec d(b.num_classes());
        for (std::size_t k = 0; k < b.num_classes(); ++k) {
            double s = 0;
            for (std::size_t i = 0; i < b.dim(); ++i) s += std::pow(b.prototype(k)[i] - b.anchor(k)[i], 2);
            d[k] = std::sqrt(s);
        }
        return d;
    };
    Vec prev = dist(frozen.bank());
    for (const auto& r : c.records) {
        frozen.step(r);
        const Vec cur = dist(frozen.bank());
        for (std::size_t k = 0; k < cur.size(); ++k) EXPECT_LE(cur[k], prev[k] + 1e-12);
        prev = cur;
    }
}

TEST(Step, MatchesBruteForceReference) {
    for (std::size_t i = 0; i < 50; ++i) {
        const auto c = testing::make_diff_case(2024, i);
        const auto res = testing::compare_with_oracle(c);
        EXPECT_LE(res.max_abs_error, 1e-9) << "case " << i << " field " << res.worst_field;
        EXPECT_EQ(res.flag_mismatches, 0u) << "case " << i;
    }
}

// --- golden micro-traces -----------------------------------------------------

nlohmann::json load_golden(const char* name) {
    std::ifstream in(std::filesystem::path(SIGHT_TEST_DATA_DIR) / "golden" / name);
    EXPECT_TRUE(in.good()) << name;
    return nlohmann::json::parse(in);
}

void expect_vec(const Vec& got, const nlohmann::json& want, const char* field, std::size_t step) {
    ASSERT_EQ(got.size(), want.size()) << field;
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_NEAR(got[i], want[i].get<double>(), 1e-9) << field << " step " << step << " index " << i;
    }
}

TEST(Golden, SightMicroTrace) {
    const auto g = load_golden("sight_micro.json");
    const auto weights = Matrix::from_rows(g["weights"].get<std::vector<Vec>>());
    SightAdapter a(initialize_prototypes(weights), SightConfig{}, AdapterOptions{true});
    const auto& recs = g["records"];
    ASSERT_EQ(recs.size(), 3u);
    for (std::size_t t = 0; t < recs.size(); ++t) {
        auto r = logits_record(recs[t]["feature"].get<Vec>(), recs[t]["logits"].get<Vec>(), t);
        r.label = recs[t]["label"].get<int>();
        const auto& tr = a.step(r);
        const auto& w = g["steps"][t];
        expect_vec(tr.raw, w["raw"], "raw", t);
        expect_vec(tr.expected_state, w["expected_state"], "expected_state", t);
        EXPECT_NEAR(tr.discrepancy, w["discrepancy"].get<double>(), 1e-9);
        EXPECT_NEAR(tr.surprise, w["surprise"].get<double>(), 1e-9);
        expect_vec(tr.routing, w["routing"], "routing", t);
        expect_vec(tr.calibrated_prior, w["calibrated_prior"], "calibrated_prior", t);
        expect_vec(tr.temporal_prior, w["temporal_prior"], "temporal_prior", t);
        expect_vec(tr.refined, w["refined"], "refined", t);
        EXPECT_EQ(tr.annihilated, w["annihilated"].get<bool>());
        EXPECT_EQ(tr.degenerate_expectation, w["degenerate_expectation"].get<bool>());
        expect_vec(a.state().habit.values(), w["habit"], "habit", t);
        for (std::size_t k = 0; k < 2; ++k) expect_vec(row(tr.prototypes->row(k)), w["prototypes"][k], "prototypes", t);
    }
}

// --- config ------------------------------------------------------------------

TEST(SightConfig, DefaultsAndValidation) {
    const SightConfig c;
    EXPECT_EQ(c.beta, 1.0);
    EXPECT_EQ(c.tau, 0.05);
    EXPECT_EQ(c.eta_mu, 0.005);
    EXPECT_EQ(c.eta_h, 0.05);
    EXPECT_EQ(c.omega_mu, 0.01);
    EXPECT_EQ(c.epsilon, 1e-8);
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.tau = 0.0;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.eta_h = 1.5;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.beta = -1.0;
    EXPECT_THROW(SightAdapter(initialize_prototypes(Matrix::from_rows({{1, 0}, {0, 1}})), bad), Error);
}

TEST(SightConfig, AblationNames) {
    for (Ablation a : kAllAblations) EXPECT_EQ(parse_ablation(to_string(a)), a);
    EXPECT_FALSE(parse_ablation("no_such_flag").has_value());
}

TEST(AdapterState, ByteSizeGrowsWithKd) {
    auto size = [](std::size_t k, std::size_t d) {
        Matrix w(k, d, 1.0);
        for (std::size_t i = 0; i < k; ++i) w(i, i % d) += 1.0;
        SightAdapter a(initialize_prototypes(w), SightConfig{});
        a.step(logits_record(Vec(d, 1.0), Vec(k, 0.0)));
        return a.state().byte_size();
    };
    EXPECT_EQ(size(4, 16) - size(4, 8), 2 * 4 * 8 * sizeof(double));
    EXPECT_EQ(size(5, 8) - size(4, 8), (2 * 8 + 2) * sizeof(double));
}

}  // namespace
}  // namespace sight
