#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pricer/reward.hpp"
#include "pricer/rng.hpp"

using namespace pricer;

namespace {

LoanApplication sample_app() {
    LoanApplication a;
    a.amount = 10000.0;
    a.term = 36;
    a.prime_rate = 4.0;
    a.pd = 0.05;
    return a;
}

}  // namespace

TEST_CASE("total_payment: zero interest returns the principal exactly") {
    CHECK(total_payment(10000.0, 0.0, 36) == 10000.0);
}

TEST_CASE("total_payment: matches the month-by-month amortization oracle") {
    const double got = total_payment(10000.0, 6.0, 36);
    const double want = oracle::amortized_total_payment(10000.0, 6.0, 36);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got == doctest::Approx(10951.8975).epsilon(1e-6));  // payment ~304.22/month
}

TEST_CASE("total_payment: closed form vs amortization loop over 1000 random loans") {
    Rng rng(404);
    for (int i = 0; i < 1000; ++i) {
        const double amount = rng.uniform(5000.0, 80000.0);
        const double apr = rng.uniform(0.1, 15.0);
        const int term = static_cast<int>(6 + rng.below(120));
        const double got = total_payment(amount, apr, term);
        const double want = oracle::amortized_total_payment(amount, apr, term);
        CHECK(std::abs(got - want) <= 1e-6);
    }
}

TEST_CASE("total_payment: strictly increasing in the rate") {
    Rng rng(405);
    for (int i = 0; i < 200; ++i) {
        const double amount = rng.uniform(5000.0, 60000.0);
        const int term = static_cast<int>(12 + rng.below(60));
        const double a = rng.uniform(0.0, 12.0);
        const double b = a + rng.uniform(0.01, 3.0);
        CHECK(total_payment(amount, b, term) > total_payment(amount, a, term));
    }
}

TEST_CASE("total_payment: rejects bad inputs") {
    CHECK_THROWS_AS((void)total_payment(10000.0, std::nan(""), 36), std::invalid_argument);
    CHECK_THROWS_AS((void)total_payment(-1.0, 5.0, 36), std::invalid_argument);
    CHECK_THROWS_AS((void)total_payment(10000.0, 5.0, 0), std::invalid_argument);
}

TEST_CASE("capital_cost: prime of zero returns the principal; otherwise equals total_payment") {
    CHECK(capital_cost(10000.0, 0.0, 36) == 10000.0);
    CHECK(capital_cost(10000.0, 4.0, 36) ==
          doctest::Approx(oracle::amortized_total_payment(10000.0, 4.0, 36)).epsilon(1e-12));
    Rng rng(406);
    for (int i = 0; i < 100; ++i) {
        const double amount = rng.uniform(5000.0, 60000.0);
        const double p = rng.uniform(0.0, 10.0);
        const int term = static_cast<int>(12 + rng.below(60));
        CHECK(capital_cost(amount, p, term) == total_payment(amount, p, term));
    }
}

TEST_CASE("per_loan_profit: collapses correctly at the PD extremes") {
    RewardParams params;
    LoanApplication a = sample_app();
    const double tp = total_payment(a.amount, 6.0, a.term);
    const double cc = capital_cost(a.amount, a.prime_rate, a.term);

    a.pd = 1e-12;
    CHECK(per_loan_profit(a, 6.0, params) == doctest::Approx(tp - cc).epsilon(1e-6));

    a.pd = 1.0 - 1e-12;
    CHECK(per_loan_profit(a, 6.0, params) == doctest::Approx(-0.5 * cc).epsilon(1e-6));
}

TEST_CASE("per_loan_profit: plugs through the amortization oracles") {
    RewardParams params;
    LoanApplication a = sample_app();
    const double tp = oracle::amortized_total_payment(10000.0, 6.0, 36);
    const double cc = oracle::amortized_total_payment(10000.0, 4.0, 36);
    const double want = 0.95 * (tp - cc) - 0.05 * 0.5 * cc;
    CHECK(per_loan_profit(a, 6.0, params) == doctest::Approx(want).epsilon(1e-10));
    CHECK(want == doctest::Approx(41.3839).epsilon(1e-4));
}

TEST_CASE("per_loan_profit: pd outside (0,1) is rejected") {
    RewardParams params;
    LoanApplication a = sample_app();
    a.pd = 0.0;
    CHECK_THROWS_AS((void)per_loan_profit(a, 6.0, params), std::invalid_argument);
    a.pd = 1.0;
    CHECK_THROWS_AS((void)per_loan_profit(a, 6.0, params), std::invalid_argument);
}

TEST_CASE("per_loan_profit: strictly increasing in the rate") {
    RewardParams params;
    Rng rng(407);
    for (int i = 0; i < 200; ++i) {
        LoanApplication a = sample_app();
        a.amount = rng.uniform(5000.0, 60000.0);
        a.term = static_cast<int>(12 + rng.below(60));
        a.prime_rate = rng.uniform(1.0, 8.0);
        a.pd = rng.uniform(0.01, 0.3);
        const double x = rng.uniform(2.5, 12.0);
        const double y = x + rng.uniform(0.01, 0.5);
        CHECK(per_loan_profit(a, y, params) > per_loan_profit(a, x, params));
    }
}

TEST_CASE("expected_reward: linear in the accept probability") {
    RewardParams params;
    const LoanApplication a = sample_app();
    CHECK(expected_reward(a, 6.0, 0.0, params) == 0.0);
    CHECK(expected_reward(a, 6.0, 1.0, params) == doctest::Approx(per_loan_profit(a, 6.0, params)));
    Rng rng(408);
    for (int i = 0; i < 50; ++i) {
        const double p = rng.uniform();
        CHECK(expected_reward(a, 6.0, p, params) ==
              doctest::Approx(p * expected_reward(a, 6.0, 1.0, params)).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)expected_reward(a, 6.0, 1.5, params), std::invalid_argument);
}

TEST_CASE("realized_reward: accept gate") {
    RewardParams params;
    const LoanApplication a = sample_app();
    CHECK(realized_reward(a, 6.0, false, params) == 0.0);
    CHECK(realized_reward(a, 6.0, true, params) == doctest::Approx(per_loan_profit(a, 6.0, params)));
}

TEST_CASE("expected reward with a logistic response is single-peaked over the rate interval") {
    // dense grid: at most one sign change of the discrete slope
    RewardParams params;
    Rng rng(409);
    for (int trial = 0; trial < 50; ++trial) {
        LoanApplication a = sample_app();
        a.amount = rng.uniform(6000.0, 60000.0);
        a.term = static_cast<int>(12 + rng.below(60));
        a.prime_rate = rng.uniform(2.0, 7.0);
        a.pd = rng.uniform(0.01, 0.25);
        const double beta0 = rng.uniform(2.0, 8.0);
        const double beta1 = -rng.uniform(0.3, 1.1);
        auto value = [&](double rate) {
            const double p = 1.0 / (1.0 + std::exp(-(beta0 + beta1 * rate)));
            return expected_reward(a, rate, p, params);
        };
        int sign_changes = 0;
        double prev_slope = 0.0;
        bool have_prev = false;
        for (double r = kRateLow; r + 0.01 <= kRateHigh + 1e-12; r += 0.01) {
            const double slope = value(r + 0.01) - value(r);
            if (have_prev && slope * prev_slope < 0.0) ++sign_changes;
            if (slope != 0.0) {
                prev_slope = slope;
                have_prev = true;
            }
        }
        CHECK(sign_changes <= 1);
    }
}
