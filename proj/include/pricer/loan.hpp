#pragma once

#include <stdexcept>
#include <string>

namespace pricer {

enum class LoanType { finance, refinance };
enum class CarType { new_, used, refinanced };

inline std::string loan_type_name(LoanType t) { return t == LoanType::finance ? "Finance" : "Refinance"; }
inline LoanType loan_type_from_name(const std::string& s) {
    if (s == "Finance") return LoanType::finance;
    if (s == "Refinance") return LoanType::refinance;
    throw std::invalid_argument("unknown loan_type '" + s + "'");
}

inline std::string car_type_name(CarType t) {
    switch (t) {
        case CarType::new_: return "N";
        case CarType::used: return "U";
        case CarType::refinanced: return "R";
    }
    throw std::invalid_argument("car_type_name: bad value");
}
inline CarType car_type_from_name(const std::string& s) {
    if (s == "N") return CarType::new_;
    if (s == "U") return CarType::used;
    if (s == "R") return CarType::refinanced;
    throw std::invalid_argument("unknown car_type '" + s + "'");
}

/// One applicant's state features. Generator-side latents (the true accept
/// probability and the demand segment) ride along but are never visible to
/// any trained model.
struct LoanApplication {
    int term = 36;                 // months
    double amount = 10000.0;       // dollars, >= 5000
    int fico = 700;                // 500..850
    double pd = 0.05;              // probability of default, in (0, 1)
    double previous_rate = 0.0;    // APR %, 0 unless refinance
    double competition_rate = 6.0; // APR %
    double prime_rate = 4.0;       // APR %
    int tier = 1;                  // {1, 2, 3, 7}
    LoanType loan_type = LoanType::finance;
    CarType car_type = CarType::new_;
    int partner_bin = 1;           // {1, 2, 3}
    std::string state_code = "CA";
    int months_since_start = 0;
    int day_of_week = 0;           // 0..6
    int month_of_year = 1;         // 1..12
    int days_since_app = 0;
    int latent_segment = 0;        // generator-only
    long app_index = 0;            // global chronological index

    void validate() const {
        if (!(pd > 0.0 && pd < 1.0)) throw std::invalid_argument("LoanApplication: pd must be in (0,1)");
        if (amount < 5000.0) throw std::invalid_argument("LoanApplication: amount must be >= 5000");
        if (term < 1) throw std::invalid_argument("LoanApplication: term must be >= 1");
        if (previous_rate < 0.0 || competition_rate < 0.0 || prime_rate < 0.0)
            throw std::invalid_argument("LoanApplication: rates must be >= 0");
        const bool refi = loan_type == LoanType::refinance;
        if (refi != (car_type == CarType::refinanced) || refi != (previous_rate > 0.0))
            throw std::invalid_argument(
                "LoanApplication: refinance, car_type R and previous_rate > 0 must coincide");
    }
};

/// The action interval: quoted APRs always live in [2.5, 12.5].
inline constexpr double kRateLow = 2.5;
inline constexpr double kRateHigh = 12.5;

}  // namespace pricer
