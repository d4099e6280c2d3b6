#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pricer/loan.hpp"
#include "pricer/matrix.hpp"

namespace pricer {

/// Regression terms for the price-response models. Order is fixed; reference
/// categories are CarType N, PartnerBin 1 and Tier 1. The intercept is kept
/// separate from the coefficient vector.
namespace response_terms {

inline const std::vector<std::string>& base_names() {
    static const std::vector<std::string> names = {
        "rate",          "prime_rate", "competition_rate", "previous_rate", "log(amount)",
        "log(fico)",     "term",       "car_type[R]",      "car_type[U]",   "partner_bin[2]",
        "partner_bin[3]", "tier[2]",   "tier[3]",          "tier[7]"};
    return names;
}

inline constexpr std::size_t kBaseCount = 14;

inline std::vector<double> base_row(const LoanApplication& a, double rate) {
    return {rate,
            a.prime_rate,
            a.competition_rate,
            a.previous_rate,
            std::log(a.amount),
            std::log(static_cast<double>(a.fico)),
            static_cast<double>(a.term),
            a.car_type == CarType::refinanced ? 1.0 : 0.0,
            a.car_type == CarType::used ? 1.0 : 0.0,
            a.partner_bin == 2 ? 1.0 : 0.0,
            a.partner_bin == 3 ? 1.0 : 0.0,
            a.tier == 2 ? 1.0 : 0.0,
            a.tier == 3 ? 1.0 : 0.0,
            a.tier == 7 ? 1.0 : 0.0};
}

}  // namespace response_terms

/// Term list for a logistic price-response fit: a subset of the base terms,
/// optionally augmented with a rate x feature product for every selected
/// non-rate term (the FDPE variant). The intercept is implicit and never part
/// of the list.
struct FeatureSpec {
    std::vector<std::size_t> terms;  // indices into response_terms::base_names()
    bool interactions = false;

    static FeatureSpec standard(bool with_interactions = false) {
        FeatureSpec s;
        s.terms.resize(response_terms::kBaseCount);
        for (std::size_t j = 0; j < response_terms::kBaseCount; ++j) s.terms[j] = j;
        s.interactions = with_interactions;
        return s;
    }

    static FeatureSpec intercept_only() { return FeatureSpec{}; }

    std::size_t interaction_count() const {
        if (!interactions) return 0;
        std::size_t n = 0;
        for (std::size_t j : terms) n += j != 0;
        return n;
    }

    std::size_t size() const { return terms.size() + interaction_count(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (std::size_t j : terms) out.push_back(response_terms::base_names()[j]);
        if (interactions) {
            for (std::size_t j : terms)
                if (j != 0) out.push_back("rate:" + response_terms::base_names()[j]);
        }
        return out;
    }

    std::vector<double> row(const LoanApplication& a, double rate) const {
        const std::vector<double> base = response_terms::base_row(a, rate);
        std::vector<double> x;
        x.reserve(size());
        for (std::size_t j : terms) x.push_back(base[j]);
        if (interactions) {
            for (std::size_t j : terms)
                if (j != 0) x.push_back(rate * base[j]);
        }
        return x;
    }
};

/// Full state encoding for the agent and the neural response model. One-hot
/// order: tier {2,3,7}, loan type {Refinance}, car type {U,R},
/// partner bin {2,3}, state {TX,NY,FL}; reference levels are tier 1,
/// Finance, car N, partner 1 and CA.
namespace state_encoding {

inline constexpr std::size_t kDim = 22;

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {
        "term",        "amount",        "fico",          "pd",
        "previous_rate", "competition_rate", "prime_rate", "tier[2]",
        "tier[3]",     "tier[7]",       "loan_type[Refinance]", "car_type[U]",
        "car_type[R]", "partner_bin[2]", "partner_bin[3]", "state[TX]",
        "state[NY]",   "state[FL]",     "months_since_start", "day_of_week",
        "month_of_year", "days_since_app"};
    return n;
}

inline void encode_into(const LoanApplication& a, double* out) {
    out[0] = static_cast<double>(a.term);
    out[1] = a.amount;
    out[2] = static_cast<double>(a.fico);
    out[3] = a.pd;
    out[4] = a.previous_rate;
    out[5] = a.competition_rate;
    out[6] = a.prime_rate;
    out[7] = a.tier == 2 ? 1.0 : 0.0;
    out[8] = a.tier == 3 ? 1.0 : 0.0;
    out[9] = a.tier == 7 ? 1.0 : 0.0;
    out[10] = a.loan_type == LoanType::refinance ? 1.0 : 0.0;
    out[11] = a.car_type == CarType::used ? 1.0 : 0.0;
    out[12] = a.car_type == CarType::refinanced ? 1.0 : 0.0;
    out[13] = a.partner_bin == 2 ? 1.0 : 0.0;
    out[14] = a.partner_bin == 3 ? 1.0 : 0.0;
    out[15] = a.state_code == "TX" ? 1.0 : 0.0;
    out[16] = a.state_code == "NY" ? 1.0 : 0.0;
    out[17] = a.state_code == "FL" ? 1.0 : 0.0;
    out[18] = static_cast<double>(a.months_since_start);
    out[19] = static_cast<double>(a.day_of_week);
    out[20] = static_cast<double>(a.month_of_year);
    out[21] = static_cast<double>(a.days_since_app);
}

inline std::vector<double> encode(const LoanApplication& a) {
    std::vector<double> x(kDim);
    encode_into(a, x.data());
    return x;
}

template <typename RowRange>
inline Matrix encode_all(const RowRange& apps) {
    Matrix X(apps.size(), kDim);
    std::size_t i = 0;
    for (const auto& a : apps) encode_into(a, X.row(i++));
    return X;
}

}  // namespace state_encoding

inline double sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace pricer
