// Randomized invariants. Every property runs a fixed number of cases from a
// fixed seed so failures reproduce.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "sight/adapter.hpp"
#include "sight/baselines.hpp"
#include "sight/io.hpp"
#include "support/property_counts.hpp"

namespace sight {
namespace {

namespace fs = std::filesystem;

using namespace testing;

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

    std::vector<double> vec(std::size_t n, double sd = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(sd);
        return v;
    }

    Matrix weights(std::size_t k, std::size_t d) {
        Matrix w(k, d, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < d; ++j) w(i, j) = normal();
        }
        return w;
    }

    StreamRecord record(std::size_t k, std::size_t d) {
        StreamRecord r;
        r.feature = vec(d, uniform(0.01, 10.0));
        if (coin(0.05)) std::fill(r.feature.begin(), r.feature.end(), 0.0);
        r.scores = vec(k, uniform(0.1, 20.0));
        r.label = static_cast<int>(index(0, k - 1));
        return r;
    }

    SightConfig config() {
        SightConfig c;
        c.beta = std::exp(uniform(-3.0, 4.0));
        c.tau = std::exp(uniform(-5.0, 1.0));
        c.eta_mu = uniform(0.0, 1.0);
        c.eta_h = uniform(0.0, 1.0);
        c.omega_mu = uniform(0.0, 1.0);
        c.no_surprise_lambda = uniform(0.0, 1.0);
        for (Ablation a : kAllAblations) {
            if (coin(0.2)) c.ablations.insert(a);
        }
        return c;
    }
};

void expect_simplex(std::span<const double> p, const char* what, std::size_t step) {
    double s = 0.0;
    for (double x : p) {
        ASSERT_TRUE(std::isfinite(x)) << what << " step " << step;
        ASSERT_GE(x, 0.0) << what << " step " << step;
        s += x;
    }
    ASSERT_NEAR(s, 1.0, 1e-9) << what << " step " << step;
}

TEST(Properties, EveryDistributionStaysOnSimplex) {
    Gen g(1001);
    std::size_t cases = 0;
    while (cases < kSimplexCases) {
        const std::size_t k = g.index(2, 12);
        const std::size_t d = g.index(1, 24);
        const auto cfg = g.config();
        SightAdapter a(PrototypeBank::from_weights(g.weights(k, d)), cfg);
        Persistence p(k, g.uniform(0.0, 1.0));
        MarkovPrior m(k, g.uniform(0.01, 2.0));
        const std::size_t len = g.index(1, 60);
        for (std::size_t t = 0; t < len && cases < kSimplexCases; ++t, ++cases) {
            const auto r = g.record(k, d);
            const auto& tr = a.step(r);
            expect_simplex(tr.refined, "refined", t);
            expect_simplex(tr.routing, "routing", t);
            expect_simplex(tr.calibrated_prior, "calibrated prior", t);
            expect_simplex(tr.temporal_prior, "temporal prior", t);
            expect_simplex(a.state().habit.span(), "habit", t);
            ASSERT_GE(tr.surprise, 0.0);
            ASSERT_LE(tr.surprise, 1.0);
            expect_simplex(p.step(r).refined, "persistence", t);
            expect_simplex(m.step(r).refined, "markov", t);
        }
    }
}

TEST(Properties, PrototypesStayUnitNorm) {
    Gen g(1002);
    std::size_t cases = 0;
    while (cases < kPrototypeCases) {
        const std::size_t k = g.index(2, 10);
        const std::size_t d = g.index(2, 32);
        auto cfg = g.config();
        cfg.ablations.erase(Ablation::NoPrototypeUpdate);
        SightAdapter a(PrototypeBank::from_weights(g.weights(k, d)), cfg);
        for (std::size_t t = 0; t < 40 && cases < kPrototypeCases; ++t, ++cases) {
            a.step(g.record(k, d));
            for (std::size_t c = 0; c < k; ++c) {
                double n2 = 0.0;
                for (double x : a.bank().prototype(c)) n2 += x * x;
                ASSERT_NEAR(std::sqrt(n2), 1.0, 1e-7) << "class " << c << " step " << t;
            }
        }
    }
}

TEST(Properties, GateIsMonotoneInBetaAndDiscrepancy) {
    Gen g(1003);
    for (std::size_t i = 0; i < kGateCases; ++i) {
        const std::size_t d = g.index(2, 16);
        const auto exp = normalize(g.vec(d));
        const auto o1 = normalize(g.vec(d));
        const auto o2 = normalize(g.vec(d));
        SightConfig lo, hi;
        lo.beta = std::exp(g.uniform(-3.0, 3.0));
        hi.beta = lo.beta * std::exp(g.uniform(0.0, 2.0));
        const auto a = surprise(o1, exp, lo);
        const auto b = surprise(o1, exp, hi);
        ASSERT_LE(a.lambda, b.lambda);
        ASSERT_EQ(a.discrepancy, b.discrepancy);
        const auto c = surprise(o2, exp, lo);
        if (a.discrepancy < c.discrepancy) {
            ASSERT_LE(a.lambda, c.lambda);
        } else {
            ASSERT_GE(a.lambda, c.lambda);
        }
        ASSERT_GE(a.lambda, 0.0);
        ASSERT_LE(b.lambda, 1.0);
    }
}

TEST(Properties, SoftmaxShiftInvariantAndOrderPreserving) {
    Gen g(1004);
    for (std::size_t i = 0; i < kSoftmaxCases; ++i) {
        const std::size_t k = g.index(2, 20);
        const auto s = g.vec(k, g.uniform(0.1, 5.0));
        const double tau = std::exp(g.uniform(-4.0, 2.0));
        const double shift = g.uniform(-100.0, 100.0);
        auto t = s;
        for (auto& x : t) x += shift;
        const auto p = softmax_temp(s, tau);
        const auto q = softmax_temp(t, tau);
        for (std::size_t c = 0; c < k; ++c) ASSERT_NEAR(p[c], q[c], 1e-9);
        const std::size_t top = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
        ASSERT_EQ(p.argmax(), top);
        for (std::size_t c = 1; c < k; ++c) {
            if (s[c] > s[c - 1]) {
                ASSERT_GE(p[c], p[c - 1]);
            }
        }
    }
}

TEST(Properties, NormalizeIdempotentAndScaleInvariant) {
    Gen g(1005);
    for (std::size_t i = 0; i < kNormalizeCases; ++i) {
        const std::size_t d = g.index(1, 64);
        const auto v = g.vec(d, std::exp(g.uniform(-3.0, 3.0)));
        const double scale = std::exp(g.uniform(-3.0, 3.0));
        auto w = v;
        for (auto& x : w) x *= scale;
        const auto u = normalize(v);
        const auto uu = normalize(u.span());
        const auto uw = normalize(w);
        // v / (|v| + eps) has norm 1 - eps / |v|, so both invariances hold only to about eps / |v|
        double nv = 0.0;
        for (double x : v) nv += x * x;
        nv = std::sqrt(nv);
        const double tol = 2.0 * kDefaultEpsilon * (1.0 + 1.0 / std::min(nv, nv * scale));
        double n2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            ASSERT_NEAR(u[j], uu[j], tol);
            ASSERT_NEAR(u[j], uw[j], tol);
            n2 += u[j] * u[j];
        }
        ASSERT_NEAR(std::sqrt(n2), 1.0, tol);
    }
}

TEST(Properties, StreamRoundTripIsExact) {
    Gen g(1006);
    const fs::path dir = fs::temp_directory_path() / "sight_properties";
    fs::create_directories(dir);
    std::size_t cases = 0;
    for (int file = 0; cases < kRoundTripCases; ++file) {
        const std::size_t k = g.index(2, 9);
        const std::size_t d = g.index(1, 12);
        std::vector<StreamRecord> records;
        const std::size_t n = std::min<std::size_t>(g.index(1, 800), kRoundTripCases - cases);
        for (std::size_t t = 0; t < n; ++t) {
            auto r = g.record(k, d);
            for (auto& x : r.feature) x *= std::pow(10.0, g.uniform(-12.0, 12.0));
            if (g.coin(0.1)) r.label.reset();
            records.push_back(std::move(r));
        }
        const bool csv = file % 2 == 1;
        const auto path = dir / (csv ? "s.csv" : "s.jsonl");
        if (csv) {
            io::write_stream_csv(path, records);
        } else {
            io::write_stream(path, records);
        }
        const auto back = io::read_stream_all(path, ScoreKind::Logits);
        ASSERT_EQ(back.size(), records.size());
        for (std::size_t t = 0; t < n; ++t, ++cases) {
            ASSERT_EQ(back[t].feature, records[t].feature) << "file " << file << " record " << t;
            ASSERT_EQ(back[t].scores, records[t].scores);
            ASSERT_EQ(back[t].label, records[t].label);
        }
    }
    fs::remove_all(dir);
}

}  // namespace
}  // namespace sight
