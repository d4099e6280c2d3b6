#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pricer/market.hpp"

using namespace pricer;

namespace {

MarketConfig small_config(long n = 2000, DemandFamily fam = DemandFamily::logistic) {
    MarketConfig cfg;
    cfg.n_applications = n;
    cfg.demand_family = fam;
    cfg.seed = 11;
    return cfg;
}

LoanApplication probe_app() {
    LoanApplication a;
    a.term = 48;
    a.amount = 18000.0;
    a.fico = 710;
    a.pd = pd_from_fico(710);
    a.previous_rate = 0.0;
    a.competition_rate = 6.1;
    a.prime_rate = 4.2;
    a.tier = 2;
    a.partner_bin = 2;
    return a;
}

}  // namespace

TEST_CASE("generate_applications: identical seeds give identical streams") {
    const MarketConfig cfg = small_config(100);
    const DemandTruth truth = make_demand_truth(cfg);
    const auto a = generate_applications(cfg, truth);
    const auto b = generate_applications(cfg, truth);
    REQUIRE(a.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].amount == b[i].amount);
        CHECK(a[i].fico == b[i].fico);
        CHECK(a[i].prime_rate == b[i].prime_rate);
        CHECK(a[i].partner_bin == b[i].partner_bin);
    }
}

TEST_CASE("generate_applications: amounts never fall below 5000") {
    const MarketConfig cfg = small_config(10000);
    const auto apps = generate_applications(cfg, make_demand_truth(cfg));
    for (const auto& a : apps) CHECK(a.amount >= 5000.0);
}

TEST_CASE("generate_applications: FICO and PD are strongly anti-correlated") {
    const MarketConfig cfg = small_config(10000);
    const auto apps = generate_applications(cfg, make_demand_truth(cfg));
    std::vector<double> fico, pd;
    for (const auto& a : apps) {
        fico.push_back(static_cast<double>(a.fico));
        pd.push_back(a.pd);
    }
    CHECK(oracle::spearman(fico, pd) < -0.9);
}

TEST_CASE("behavioral_price: deterministic without noise and monotone in PD") {
    LoanApplication a = probe_app();
    Rng r1(5), r2(6);
    CHECK(behavioral_price(a, r1, 0.0) == behavioral_price(a, r2, 0.0));

    LoanApplication risky = a;
    risky.pd = a.pd + 0.1;
    Rng r3(7), r4(8);
    CHECK(behavioral_price(risky, r3, 0.0) >= behavioral_price(a, r4, 0.0));
}

TEST_CASE("behavioral_price: always inside the admissible interval") {
    const MarketConfig cfg = small_config(5000);
    const auto apps = generate_applications(cfg, make_demand_truth(cfg));
    Rng rng(9);
    for (const auto& a : apps) {
        const double p = behavioral_price(a, rng, 3.0);
        CHECK(p >= kRateLow);
        CHECK(p <= kRateHigh);
    }
}

TEST_CASE("true_accept_probability: zero coefficients give one half") {
    DemandTruth t;
    t.family = DemandFamily::logistic;
    t.params = LogisticTruth{0.0, std::vector<double>(response_terms::kBaseCount, 0.0)};
    CHECK(true_accept_probability(t, probe_app(), 5.0) == doctest::Approx(0.5));
    CHECK(true_accept_probability(t, probe_app(), 11.0) == doctest::Approx(0.5));
}

TEST_CASE("true_accept_probability: negative rate coefficient means higher rates accept less") {
    const MarketConfig cfg = small_config();
    const DemandTruth t = make_demand_truth(cfg);
    CHECK(std::get<LogisticTruth>(t.params).coef[0] == doctest::Approx(-0.6599));
    CHECK(true_accept_probability(t, probe_app(), 6.0) < true_accept_probability(t, probe_app(), 5.0));
}

TEST_CASE("true_accept_probability: strictly decreasing in rate across logistic families") {
    for (DemandFamily fam : {DemandFamily::logistic, DemandFamily::logistic_fdpe,
                             DemandFamily::segmented, DemandFamily::time_varying}) {
        MarketConfig cfg = small_config(500, fam);
        const DemandTruth t = make_demand_truth(cfg);
        const auto apps = generate_applications(cfg, t);
        Rng rng(13);
        for (int i = 0; i < 200; ++i) {
            const auto& a = apps[rng.below(apps.size())];
            const double r1 = rng.uniform(kRateLow, kRateHigh);
            const double r2 = r1 + rng.uniform(0.01, 2.0);
            if (r2 > kRateHigh) continue;
            CHECK(t.prob(a, r2) < t.prob(a, r1));
        }
    }
}

TEST_CASE("true_accept_probability: degenerate segmentation reduces to the plain family") {
    MarketConfig cfg = small_config(200, DemandFamily::segmented);
    DemandTruth seg = make_demand_truth(cfg);
    auto& p = std::get<SegmentedTruth>(seg.params);
    for (auto& s : p.segments) s = LogisticTruth{0.0, default_base_coefficients()};

    DemandTruth plain;
    plain.family = DemandFamily::logistic;
    plain.params = LogisticTruth{0.0, default_base_coefficients()};

    auto apps = generate_applications(cfg, seg);
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
        const auto& a = apps[rng.below(apps.size())];
        const double r = rng.uniform(kRateLow, kRateHigh);
        CHECK(std::abs(seg.prob(a, r) - plain.prob(a, r)) <= 1e-12);
    }
}

TEST_CASE("true_accept_probability: time-varying interpolates linearly in app_index") {
    MarketConfig cfg = small_config(1001, DemandFamily::time_varying);
    cfg.drift_magnitude = 0.4;
    const DemandTruth t = make_demand_truth(cfg);
    const auto& p = std::get<TimeVaryingTruth>(t.params);

    LoanApplication a = probe_app();
    const double rate = 8.0;
    auto logit_with = [&](const LogisticTruth& reg) {
        double z = reg.intercept;
        const auto x = response_terms::base_row(a, rate);
        for (std::size_t j = 0; j < x.size(); ++j) z += reg.coef[j] * x[j];
        return z;
    };
    a.app_index = 0;
    CHECK(t.logit(a, rate) == doctest::Approx(logit_with(p.train_regime)).epsilon(1e-12));
    a.app_index = 1000;
    CHECK(t.logit(a, rate) == doctest::Approx(logit_with(p.test_regime)).epsilon(1e-12));
    a.app_index = 500;
    CHECK(t.logit(a, rate) ==
          doctest::Approx(0.5 * (logit_with(p.train_regime) + logit_with(p.test_regime)))
              .epsilon(1e-12));
}

TEST_CASE("truth json: every family round trips exactly") {
    for (DemandFamily fam : {DemandFamily::logistic, DemandFamily::logistic_fdpe,
                             DemandFamily::segmented, DemandFamily::time_varying,
                             DemandFamily::neural_net}) {
        MarketConfig cfg = small_config(300, fam);
        DemandTruth t = make_demand_truth(cfg);
        t.intercept_shift = 3.25;
        const DemandTruth back = demand_truth_from_json(demand_truth_to_json(t));
        const auto apps = generate_applications(cfg, t);
        Rng rng(15);
        for (int i = 0; i < 50; ++i) {
            const auto& a = apps[rng.below(apps.size())];
            const double r = rng.uniform(kRateLow, kRateHigh);
            CHECK(back.prob(a, r) == t.prob(a, r));
        }
    }
}

TEST_CASE("sample_accepts: forced probabilities behave") {
    MarketConfig cfg = small_config(300);
    DemandTruth t = make_demand_truth(cfg);
    const auto apps = generate_applications(cfg, t);
    std::vector<double> prices(apps.size(), 8.0);
    RewardParams rp;

    t.intercept_shift = 200.0;  // probability pinned at 1
    Rng r1(21);
    Dataset all = sample_accepts_and_build_dataset(apps, prices, t, rp, r1);
    for (const auto& row : all.rows) CHECK(row.accept == 1);

    t.intercept_shift = -200.0;  // probability pinned at 0
    Rng r2(22);
    Dataset none = sample_accepts_and_build_dataset(apps, prices, t, rp, r2);
    for (const auto& row : none.rows) {
        CHECK(row.accept == 0);
        CHECK(row.realized_reward == 0.0);
    }
}

TEST_CASE("calibration: empirical accept rate lands within two points of the target") {
    MarketConfig cfg = small_config(50000);
    cfg.target_accept_rate = 0.21;
    RewardParams rp;
    const MarketData m = build_market(cfg, rp);
    double rate = 0.0;
    for (const auto& r : m.dataset.rows) rate += r.accept;
    rate /= static_cast<double>(m.dataset.rows.size());
    CHECK(rate >= 0.19);
    CHECK(rate <= 0.23);
}

TEST_CASE("build_market: deterministic end to end under one seed") {
    MarketConfig cfg = small_config(1500);
    RewardParams rp;
    const MarketData a = build_market(cfg, rp);
    const MarketData b = build_market(cfg, rp);
    REQUIRE(a.dataset.rows.size() == b.dataset.rows.size());
    for (std::size_t i = 0; i < a.dataset.rows.size(); ++i) {
        CHECK(a.dataset.rows[i].offered_rate == b.dataset.rows[i].offered_rate);
        CHECK(a.dataset.rows[i].accept == b.dataset.rows[i].accept);
        CHECK(a.dataset.rows[i].realized_reward == b.dataset.rows[i].realized_reward);
    }
}

TEST_CASE("split: all-train fractions tag every row train") {
    MarketConfig cfg = small_config(120);
    RewardParams rp;
    MarketData m = build_market(cfg, rp, SplitFractions{1.0, 0.0, 0.0});
    CHECK(m.dataset.split_count(Split::train) == 120);
}

TEST_CASE("split: contiguous chronological blocks with exact sizes") {
    MarketConfig cfg = small_config(100);
    RewardParams rp;
    MarketData m = build_market(cfg, rp, SplitFractions{0.8, 0.1, 0.1});
    CHECK(m.dataset.split_count(Split::train) == 80);
    CHECK(m.dataset.split_count(Split::val) == 10);
    CHECK(m.dataset.split_count(Split::test) == 10);
    for (std::size_t i = 0; i < 80; ++i) CHECK(m.dataset.rows[i].split == Split::train);
    for (std::size_t i = 80; i < 90; ++i) CHECK(m.dataset.rows[i].split == Split::val);
    for (std::size_t i = 90; i < 100; ++i) CHECK(m.dataset.rows[i].split == Split::test);
}

TEST_CASE("split: defaults match the historical row proportions") {
    // 161314 / 6482 / 21471 of 189267 rows
    const double train = 161314.0 / 189267.0;
    const double val = 6482.0 / 189267.0;
    const double test = 21471.0 / 189267.0;
    const SplitFractions f{};
    CHECK(std::abs(f.train - train) < 0.01);
    CHECK(std::abs(f.val - val) < 0.01);
    CHECK(std::abs(f.test - test) < 0.01);
}

TEST_CASE("split: bad fractions are rejected") {
    MarketConfig cfg = small_config(50);
    RewardParams rp;
    CHECK_THROWS_AS((void)build_market(cfg, rp, SplitFractions{0.5, 0.2, 0.2}),
                    std::invalid_argument);
}

TEST_CASE("to_transitions: chronology, self-pairing, and reward passthrough") {
    MarketConfig cfg = small_config(60);
    RewardParams rp;
    MarketData m = build_market(cfg, rp, SplitFractions{1.0, 0.0, 0.0});
    const MinMaxScaler sc = fit_state_scaler(m.dataset, Split::train);
    const auto ts = to_transitions(m.dataset, Split::train, sc);
    REQUIRE(ts.size() == 60);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(ts[i].reward == m.dataset.rows[i].realized_reward);
        CHECK(ts[i].action == m.dataset.rows[i].offered_rate);
        if (i + 1 < ts.size()) {
            CHECK(ts[i].next_state == ts[i + 1].state);
            CHECK_FALSE(ts[i].exclude_bootstrap);
        } else {
            CHECK(ts[i].next_state == ts[i].state);
            CHECK(ts[i].exclude_bootstrap);
        }
    }
}

TEST_CASE("to_transitions: three rows give three transitions") {
    MarketConfig cfg = small_config(3);
    RewardParams rp;
    MarketData m = build_market(cfg, rp, SplitFractions{1.0, 0.0, 0.0});
    const MinMaxScaler sc = fit_state_scaler(m.dataset, Split::train);
    CHECK(to_transitions(m.dataset, Split::train, sc).size() == 3);
}

TEST_CASE("dataset csv: write then read restores every field exactly") {
    MarketConfig cfg = small_config(250, DemandFamily::segmented);
    RewardParams rp;
    const MarketData m = build_market(cfg, rp);
    std::stringstream ss;
    write_dataset_csv(m.dataset, ss);
    const Dataset back = read_dataset_csv(ss);
    REQUIRE(back.rows.size() == m.dataset.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        const auto& x = m.dataset.rows[i];
        const auto& y = back.rows[i];
        CHECK(x.app.amount == y.app.amount);
        CHECK(x.app.pd == y.app.pd);
        CHECK(x.app.state_code == y.app.state_code);
        CHECK(x.app.latent_segment == y.app.latent_segment);
        CHECK(x.offered_rate == y.offered_rate);
        CHECK(x.accept == y.accept);
        CHECK(x.realized_reward == y.realized_reward);
        CHECK(x.split == y.split);
        CHECK(x.truth_accept_prob == y.truth_accept_prob);
    }
}

TEST_CASE("market config validation") {
    MarketConfig cfg = small_config(0);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config(10);
    cfg.target_accept_rate = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(demand_family_from_name("nope"), std::invalid_argument);
}

TEST_CASE("realized rewards on the calibrated market have the documented magnitude") {
    MarketConfig cfg = small_config(30000);
    cfg.seed = 333;
    RewardParams rp;
    const MarketData m = build_market(cfg, rp);
    double mean = 0.0;
    for (const auto& r : m.dataset.rows) mean += r.realized_reward;
    mean /= static_cast<double>(m.dataset.rows.size());
    CHECK(mean >= 250.0);
    CHECK(mean <= 500.0);
}
