#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pricer/market.hpp"
#include "pricer/policy.hpp"
#include "pricer/response.hpp"
#include "pricer/reward.hpp"

namespace pricer {

/// Greedy price: dense 0.01-step grid scan followed by golden-section
/// refinement around the best cell. The grid guarantees global capture at
/// its resolution even for non-concave FDPE or neural objectives; ties break
/// toward the lower rate.
inline double optimize_price(const LoanApplication& app, const PriceResponse& model,
                             const RewardParams& params, double lo = kRateLow,
                             double hi = kRateHigh) {
    if (!(lo < hi)) throw std::invalid_argument("optimize_price: empty interval");
    auto objective = [&](double rate) {
        return expected_reward(app, rate, model.predict(app, rate), params);
    };

    const double step = 0.01;
    const long cells = std::lround((hi - lo) / step);
    double best_rate = lo;
    double best_value = objective(lo);
    for (long k = 1; k <= cells; ++k) {
        const double rate = std::min(lo + static_cast<double>(k) * step, hi);
        const double value = objective(rate);
        if (value > best_value) {
            best_value = value;
            best_rate = rate;
        }
    }

    // golden-section inside the winning cell's neighborhood
    double a = std::max(lo, best_rate - step);
    double b = std::min(hi, best_rate + step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    for (int it = 0; it < 48; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        }
    }
    const double refined = f1 >= f2 ? x1 : x2;
    const double refined_value = std::max(f1, f2);
    if (refined_value > best_value + 1e-12) return std::clamp(refined, lo, hi);
    return best_rate;
}

/// Profit-based optimization: prices each application greedily against a
/// fitted price-response model. The model must not have been fit on rows the
/// policy will later be judged on.
class OptPolicy : public PricingPolicy {
public:
    OptPolicy(std::shared_ptr<const PriceResponse> model, RewardParams params, bool fdpe = false)
        : model_(std::move(model)), params_(params), fdpe_(fdpe) {
        if (!model_) throw std::invalid_argument("OptPolicy: null model");
        check_fit_split(*model_);
    }

    double price(const LoanApplication& app) const override {
        return optimize_price(app, *model_, params_);
    }
    std::string kind() const override { return fdpe_ ? "opt-fdpe" : "opt"; }
    std::string id() const override { return kind() + "/" + model_->id(); }
    const PriceResponse& model() const { return *model_; }

    static void check_fit_split(const PriceResponse& model) {
        if (const auto* lg = dynamic_cast<const LogisticModel*>(&model)) {
            if (lg->fit_split() == "val" || lg->fit_split() == "test")
                throw std::invalid_argument("OptPolicy: model was fit on held-out rows");
        } else if (const auto* nn = dynamic_cast<const NeuralResponseModel*>(&model)) {
            if (nn->fit_split() == "val" || nn->fit_split() == "test")
                throw std::invalid_argument("OptPolicy: model was fit on held-out rows");
        }
    }

private:
    std::shared_ptr<const PriceResponse> model_;
    RewardParams params_;
    bool fdpe_;
};

/// Replays the logged offered rate for every application it has seen.
class BehavioralPolicy : public PricingPolicy {
public:
    explicit BehavioralPolicy(const Dataset& ds) {
        for (const auto& r : ds.rows) rate_by_index_[r.app.app_index] = r.offered_rate;
    }

    double price(const LoanApplication& app) const override {
        const auto it = rate_by_index_.find(app.app_index);
        if (it == rate_by_index_.end())
            throw std::invalid_argument("BehavioralPolicy: application not in the log");
        return it->second;
    }
    std::string kind() const override { return "behavioral"; }

private:
    std::unordered_map<long, double> rate_by_index_;
};

/// Replays prices from a precomputed table keyed by application index; the
/// on-disk form of the profit-based policies.
class PriceTablePolicy : public PricingPolicy {
public:
    PriceTablePolicy(std::string kind, std::unordered_map<long, double> prices)
        : kind_(std::move(kind)), prices_(std::move(prices)) {}

    double price(const LoanApplication& app) const override {
        const auto it = prices_.find(app.app_index);
        if (it == prices_.end())
            throw std::invalid_argument("PriceTablePolicy: application not in the table");
        return it->second;
    }
    std::string kind() const override { return kind_; }

private:
    std::string kind_;
    std::unordered_map<long, double> prices_;
};

/// Row-parallel pricing of a whole split. Rows are chunked deterministically,
/// so the output does not depend on scheduling.
inline std::vector<double> policy_prices(const PricingPolicy& policy,
                                         const std::vector<const DatasetRow*>& rows, int jobs = 1) {
    std::vector<double> out(rows.size());
    jobs = std::max(1, jobs);
    if (jobs == 1 || rows.size() < 64) {
        for (std::size_t i = 0; i < rows.size(); ++i) out[i] = policy.price(rows[i]->app);
        return out;
    }
    std::vector<std::future<void>> futures;
    const std::size_t chunk = (rows.size() + jobs - 1) / static_cast<std::size_t>(jobs);
    for (int j = 0; j < jobs; ++j) {
        const std::size_t begin = static_cast<std::size_t>(j) * chunk;
        const std::size_t end = std::min(rows.size(), begin + chunk);
        if (begin >= end) break;
        futures.push_back(std::async(std::launch::async, [&, begin, end] {
            for (std::size_t i = begin; i < end; ++i) out[i] = policy.price(rows[i]->app);
        }));
    }
    for (auto& f : futures) f.get();
    return out;
}

}  // namespace pricer
