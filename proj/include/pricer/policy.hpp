#pragma once

#include <string>

#include "pricer/loan.hpp"

namespace pricer {

/// A trained pricing policy. Implementations are immutable after
/// construction and safe for concurrent pricing queries; prices always land
/// inside [kRateLow, kRateHigh].
struct PricingPolicy {
    virtual ~PricingPolicy() = default;
    virtual double price(const LoanApplication& app) const = 0;
    virtual std::string kind() const = 0;  // cql | opt | opt-fdpe | behavioral
    virtual std::string id() const { return kind(); }
};

}  // namespace pricer
