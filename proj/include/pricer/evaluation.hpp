#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pricer/baselines.hpp"
#include "pricer/cql.hpp"
#include "pricer/csv.hpp"
#include "pricer/market.hpp"
#include "pricer/policy.hpp"
#include "pricer/response.hpp"
#include "pricer/svg.hpp"

namespace pricer {

struct EvalReport {
    std::string policy_id;
    std::string evaluator_id;
    std::uint64_t seed = 0;
    double cumulative_expected_reward = 0.0;
    std::vector<double> per_row;           // expected reward per test row
    std::vector<double> cumulative_curve;  // prefix sums, row order
    double mapd = 0.0;                     // vs the behavioral prices
    double mean_price = 0.0;
    double uplift = 0.0;  // (return - behavioral return) / behavioral return
    std::optional<double> pct_of_optimal;
};

/// Mean absolute percentage deviation between two aligned price vectors.
inline double mapd(const std::vector<double>& policy_prices,
                   const std::vector<double>& behavioral_prices) {
    if (policy_prices.size() != behavioral_prices.size() || policy_prices.empty())
        throw std::invalid_argument("mapd: misaligned price vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < policy_prices.size(); ++i) {
        if (behavioral_prices[i] <= 0.0) throw std::invalid_argument("mapd: nonpositive reference price");
        acc += std::abs(policy_prices[i] - behavioral_prices[i]) / behavioral_prices[i];
    }
    return acc / static_cast<double>(policy_prices.size());
}

/// Expected rewards of given prices on given rows under an evaluator model.
inline std::vector<double> expected_rewards_at(const std::vector<const DatasetRow*>& rows,
                                               const std::vector<double>& prices,
                                               const PriceResponse& evaluator,
                                               const RewardParams& params, int jobs = 1) {
    if (rows.size() != prices.size()) throw std::invalid_argument("expected_rewards_at: misaligned");
    std::vector<double> out(rows.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = expected_reward(rows[i]->app, prices[i],
                                     evaluator.predict(rows[i]->app, prices[i]), params);
        }
    };
    jobs = std::max(1, jobs);
    if (jobs == 1 || rows.size() < 256) {
        work(0, rows.size());
    } else {
        std::vector<std::future<void>> fs;
        const std::size_t chunk = (rows.size() + jobs - 1) / static_cast<std::size_t>(jobs);
        for (int j = 0; j < jobs; ++j) {
            const std::size_t b = static_cast<std::size_t>(j) * chunk;
            const std::size_t e = std::min(rows.size(), b + chunk);
            if (b >= e) break;
            fs.push_back(std::async(std::launch::async, work, b, e));
        }
        for (auto& f : fs) f.get();
    }
    return out;
}

/// Model-based offline evaluation: price every row with the policy, score the
/// prices with a fitted (or true) response model, accumulate in row order.
inline EvalReport evaluate(const PricingPolicy& policy, const std::vector<const DatasetRow*>& rows,
                           const PriceResponse& evaluator, const RewardParams& params,
                           int jobs = 1) {
    if (rows.empty()) throw std::invalid_argument("evaluate: no rows");
    EvalReport rep;
    rep.policy_id = policy.id();
    rep.evaluator_id = evaluator.id();
    const std::vector<double> prices = policy_prices(policy, rows, jobs);
    rep.per_row = expected_rewards_at(rows, prices, evaluator, params, jobs);

    std::vector<double> behavioral(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) behavioral[i] = rows[i]->offered_rate;
    const std::vector<double> behavioral_rewards =
        expected_rewards_at(rows, behavioral, evaluator, params, jobs);

    rep.cumulative_curve.resize(rows.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        acc += rep.per_row[i];
        rep.cumulative_curve[i] = acc;
    }
    rep.cumulative_expected_reward = acc;
    double beta_total = 0.0;
    for (double v : behavioral_rewards) beta_total += v;
    rep.mapd = mapd(prices, behavioral);
    double mean_price = 0.0;
    for (double p : prices) mean_price += p;
    rep.mean_price = mean_price / static_cast<double>(rows.size());
    rep.uplift = beta_total != 0.0 ? (acc - beta_total) / beta_total : 0.0;
    return rep;
}

/// Per-row greedy prices under the true model; the denominator of the
/// percent-of-optimal metric. Cached by callers that score many policies.
inline std::vector<double> optimal_prices(const std::vector<const DatasetRow*>& rows,
                                          const PriceResponse& true_model,
                                          const RewardParams& params, int jobs = 1) {
    std::vector<double> out(rows.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = optimize_price(rows[i]->app, true_model, params);
    };
    jobs = std::max(1, jobs);
    if (jobs == 1 || rows.size() < 64) {
        work(0, rows.size());
        return out;
    }
    std::vector<std::future<void>> fs;
    const std::size_t chunk = (rows.size() + jobs - 1) / static_cast<std::size_t>(jobs);
    for (int j = 0; j < jobs; ++j) {
        const std::size_t b = static_cast<std::size_t>(j) * chunk;
        const std::size_t e = std::min(rows.size(), b + chunk);
        if (b >= e) break;
        fs.push_back(std::async(std::launch::async, work, b, e));
    }
    for (auto& f : fs) f.get();
    return out;
}

inline double percent_of_optimal(const PricingPolicy& policy,
                                 const std::vector<const DatasetRow*>& rows,
                                 const PriceResponse& true_model, const RewardParams& params,
                                 int jobs = 1,
                                 const std::vector<double>* cached_optimal_prices = nullptr) {
    const std::vector<double> prices = policy_prices(policy, rows, jobs);
    const std::vector<double> policy_rewards =
        expected_rewards_at(rows, prices, true_model, params, jobs);
    std::vector<double> opt_prices;
    if (!cached_optimal_prices) {
        opt_prices = optimal_prices(rows, true_model, params, jobs);
        cached_optimal_prices = &opt_prices;
    }
    const std::vector<double> opt_rewards =
        expected_rewards_at(rows, *cached_optimal_prices, true_model, params, jobs);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        num += policy_rewards[i];
        den += opt_rewards[i];
    }
    if (den == 0.0) throw std::runtime_error("percent_of_optimal: zero optimal return");
    return num / den;
}

struct SweepSummary {
    double min_uplift = 0.0;
    double mean_uplift = 0.0;
    double max_uplift = 0.0;
};

/// One report per evaluator model; exposes the sensitivity of the estimated
/// performance to the response-model choice.
inline std::vector<EvalReport> sensitivity_sweep(
    const PricingPolicy& policy, const std::vector<const DatasetRow*>& rows,
    const std::vector<const PriceResponse*>& evaluators, const RewardParams& params,
    int jobs = 1) {
    if (evaluators.empty()) throw std::invalid_argument("sensitivity_sweep: no evaluators");
    std::vector<EvalReport> out;
    for (const auto* ev : evaluators) out.push_back(evaluate(policy, rows, *ev, params, jobs));
    return out;
}

inline SweepSummary summarize_sweep(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("summarize_sweep: no reports");
    SweepSummary s;
    s.min_uplift = reports.front().uplift;
    s.max_uplift = reports.front().uplift;
    for (const auto& r : reports) {
        s.min_uplift = std::min(s.min_uplift, r.uplift);
        s.max_uplift = std::max(s.max_uplift, r.uplift);
        s.mean_uplift += r.uplift;
    }
    s.mean_uplift /= static_cast<double>(reports.size());
    return s;
}

// ---------------------------------------------------------------------------
// Alpha ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    double cumulative_reward = 0.0;
    double mapd = 0.0;
};

/// Trains one agent per (alpha, seed) with the dual updates disabled and
/// scores each on the first `eval_rows` test rows. Independent trainings may
/// run concurrently; each agent's update loop stays single-threaded.
inline std::vector<AblationRow> alpha_ablation(const Dataset& dataset,
                                               const std::vector<double>& alphas,
                                               const CqlConfig& base_config,
                                               const std::vector<std::uint64_t>& seeds,
                                               const PriceResponse& evaluator,
                                               const RewardParams& params, int jobs = 1,
                                               std::size_t eval_rows = 10000) {
    if (alphas.empty() || seeds.empty()) throw std::invalid_argument("alpha_ablation: empty grid");
    const MinMaxScaler scaler = fit_state_scaler(dataset, Split::train);
    const std::vector<Transition> transitions = to_transitions(dataset, Split::train, scaler);
    std::vector<const DatasetRow*> test = dataset.split_rows(Split::test);
    if (test.size() > eval_rows) test.resize(eval_rows);

    struct Job {
        double alpha;
        std::uint64_t seed;
    };
    std::vector<Job> grid;
    for (double a : alphas)
        for (std::uint64_t s : seeds) grid.push_back({a, s});

    std::vector<AblationRow> rows(grid.size());
    auto run_one = [&](std::size_t k) {
        CqlConfig cfg = base_config;
        cfg.fixed_alpha = grid[k].alpha;
        cfg.seed = grid[k].seed;
        CqlTrainer trainer(transitions, cfg, scaler);
        trainer.train();
        const CqlPolicy policy = trainer.policy();
        const EvalReport rep = evaluate(policy, test, evaluator, params, 1);
        rows[k] = AblationRow{grid[k].alpha, grid[k].seed, rep.cumulative_expected_reward, rep.mapd};
    };
    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (std::size_t k = 0; k < grid.size(); ++k) run_one(k);
    } else {
        std::size_t next = 0;
        while (next < grid.size()) {
            std::vector<std::future<void>> fs;
            for (int j = 0; j < jobs && next < grid.size(); ++j, ++next)
                fs.push_back(std::async(std::launch::async, run_one, next));
            for (auto& f : fs) f.get();
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline void write_report_csv(const std::vector<EvalReport>& reports, std::ostream& os) {
    os << "policy,evaluator,seed,cumulative_expected_reward,mapd,mean_price,uplift,pct_of_optimal\n";
    for (const auto& r : reports) {
        os << r.policy_id << ',' << r.evaluator_id << ',' << r.seed << ','
           << format_double(r.cumulative_expected_reward) << ',' << format_double(r.mapd) << ','
           << format_double(r.mean_price) << ',' << format_double(r.uplift) << ','
           << (r.pct_of_optimal ? format_double(*r.pct_of_optimal) : std::string()) << '\n';
    }
}

/// Markdown summary table: per policy, MAPD and percent-of-optimal averaged
/// over seeds (true-model evaluator), plus the uplift range across the
/// sensitivity evaluators.
inline void write_summary_markdown(const std::vector<EvalReport>& reports, std::ostream& os) {
    struct Agg {
        std::vector<double> mapds, pcts, uplifts;
    };
    std::map<std::string, Agg> by_policy;
    for (const auto& r : reports) {
        auto& a = by_policy[r.policy_id];
        a.mapds.push_back(r.mapd);
        a.uplifts.push_back(r.uplift);
        if (r.pct_of_optimal) a.pcts.push_back(*r.pct_of_optimal);
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    auto minmax = [](const std::vector<double>& v) {
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return std::pair<double, double>(*lo, *hi);
    };
    os << "| Policy | MAPD | % of Optimal Return | Uplift vs behavioral | Uplift range |\n";
    os << "|---|---|---|---|---|\n";
    os.setf(std::ios::fixed);
    for (const auto& [policy, agg] : by_policy) {
        os.precision(1);
        os << "| " << policy << " | ";
        os << mean(agg.mapds) * 100.0 << "% | ";
        if (!agg.pcts.empty())
            os << mean(agg.pcts) * 100.0 << "% | ";
        else
            os << "- | ";
        os << mean(agg.uplifts) * 100.0 << "% | ";
        const auto [lo, hi] = minmax(agg.uplifts);
        os << lo * 100.0 << "% .. " << hi * 100.0 << "% |\n";
    }
}

/// Cumulative expected-reward curves, one polyline per report, downsampled.
inline void write_cumulative_svg(const std::vector<EvalReport>& reports, const std::string& path,
                                 const std::string& title = "Cumulative expected reward") {
    LinePlot plot(title, "test row", "cumulative expected reward ($)");
    for (const auto& r : reports) {
        const std::size_t n = r.cumulative_curve.size();
        const std::size_t stride = std::max<std::size_t>(1, n / 400);
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < n; i += stride) {
            xs.push_back(static_cast<double>(i + 1));
            ys.push_back(r.cumulative_curve[i]);
        }
        xs.push_back(static_cast<double>(n));
        ys.push_back(r.cumulative_curve.back());
        plot.add_series(r.policy_id + " / " + r.evaluator_id, std::move(xs), std::move(ys));
    }
    plot.write(path);
}

}  // namespace pricer
