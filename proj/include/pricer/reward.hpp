#pragma once

#include <cmath>
#include <stdexcept>

#include "pricer/loan.hpp"

namespace pricer {

struct RewardParams {
    double lgd = 0.5;            // loss given default
    int payment_frequency = 12;  // payments per year

    void validate() const {
        if (lgd < 0.0 || lgd > 1.0) throw std::invalid_argument("RewardParams: lgd must be in [0,1]");
        if (payment_frequency < 1)
            throw std::invalid_argument("RewardParams: payment_frequency must be >= 1");
    }
};

/// Undiscounted sum of fully-amortizing annuity payments. A zero APR returns
/// the principal exactly.
inline double total_payment(double amount, double apr_pct, int term_months, int freq = 12) {
    if (!(std::isfinite(amount) && std::isfinite(apr_pct)))
        throw std::invalid_argument("total_payment: non-finite input");
    if (amount <= 0.0) throw std::invalid_argument("total_payment: amount must be > 0");
    if (term_months < 1) throw std::invalid_argument("total_payment: term must be >= 1");
    if (apr_pct < 0.0) throw std::invalid_argument("total_payment: apr must be >= 0");
    if (apr_pct == 0.0) return amount;
    const double r = apr_pct / 100.0 / static_cast<double>(freq);
    const double payment = amount * r / (1.0 - std::pow(1.0 + r, -static_cast<double>(term_months)));
    return payment * static_cast<double>(term_months);
}

/// Cost of funding the loan: the same annuity with the prime rate in place of
/// the quoted rate.
inline double capital_cost(double amount, double prime_rate_pct, int term_months, int freq = 12) {
    return total_payment(amount, prime_rate_pct, term_months, freq);
}

/// Expected profit of a funded loan: interest income over capital cost, less
/// the expected default loss.
inline double per_loan_profit(const LoanApplication& app, double apr_pct, const RewardParams& params) {
    if (!(app.pd > 0.0 && app.pd < 1.0)) throw std::invalid_argument("per_loan_profit: pd outside (0,1)");
    const double tp = total_payment(app.amount, apr_pct, app.term, params.payment_frequency);
    const double cc = capital_cost(app.amount, app.prime_rate, app.term, params.payment_frequency);
    return (1.0 - app.pd) * (tp - cc) - app.pd * params.lgd * cc;
}

/// Probability-weighted profit; the quantity the evaluator and the optimizer
/// both work with.
inline double expected_reward(const LoanApplication& app, double apr_pct, double p_accept,
                              const RewardParams& params) {
    if (p_accept < 0.0 || p_accept > 1.0)
        throw std::invalid_argument("expected_reward: p_accept outside [0,1]");
    return p_accept * per_loan_profit(app, apr_pct, params);
}

/// What a historical log records: the profit when funded, zero otherwise.
inline double realized_reward(const LoanApplication& app, double apr_pct, bool accepted,
                              const RewardParams& params) {
    return accepted ? per_loan_profit(app, apr_pct, params) : 0.0;
}

}  // namespace pricer
