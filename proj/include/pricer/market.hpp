#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pricer/csv.hpp"
#include "pricer/demand.hpp"
#include "pricer/features.hpp"
#include "pricer/loan.hpp"
#include "pricer/nn.hpp"
#include "pricer/reward.hpp"
#include "pricer/rng.hpp"

namespace pricer {

enum class Split { train, val, test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw std::invalid_argument("split_name: bad value");
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

struct SplitFractions {
    double train = 0.86;
    double val = 0.03;
    double test = 0.11;

    void validate() const {
        if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
            throw std::invalid_argument("SplitFractions: must be nonnegative and sum to 1");
    }
};

struct MarketConfig {
    long n_applications = 30000;
    DemandFamily demand_family = DemandFamily::logistic;
    int n_segments = 3;            // segmented family only
    double drift_magnitude = 0.3;  // time-varying family only
    double behavioral_noise_sd = 1.5;  // APR points
    double target_accept_rate = 0.21;
    std::uint64_t seed = 333;
    // "wide" exaggerates feature dispersion and decouples tier from FICO;
    // used by estimation stress tests, not by the headline markets.
    enum class Profile { standard, wide } profile = Profile::standard;

    void validate() const {
        if (n_applications <= 0) throw std::invalid_argument("MarketConfig: n_applications must be > 0");
        if (!(target_accept_rate > 0.0 && target_accept_rate < 1.0))
            throw std::invalid_argument("MarketConfig: target_accept_rate must be in (0,1)");
        if (n_segments < 1) throw std::invalid_argument("MarketConfig: n_segments must be >= 1");
        if (behavioral_noise_sd < 0.0)
            throw std::invalid_argument("MarketConfig: behavioral_noise_sd must be >= 0");
    }
};

/// PD as a fixed monotone decreasing function of FICO: a logistic curve
/// pinned at roughly 25% for FICO 500 and 1% for FICO 850.
inline double pd_from_fico(int fico) {
    return sigmoid(3.8967 - 0.0099903 * static_cast<double>(fico));
}

struct DatasetRow {
    LoanApplication app;
    double offered_rate = 0.0;
    int accept = 0;
    double realized_reward = 0.0;
    Split split = Split::train;
    double truth_accept_prob = 0.0;  // generator latent
};

struct Dataset {
    std::vector<DatasetRow> rows;

    std::vector<const DatasetRow*> split_rows(Split s) const {
        std::vector<const DatasetRow*> out;
        for (const auto& r : rows)
            if (r.split == s) out.push_back(&r);
        return out;
    }

    std::size_t split_count(Split s) const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.split == s;
        return n;
    }
};

// ---------------------------------------------------------------------------
// Ground truth construction
// ---------------------------------------------------------------------------

/// P(segment | partner_bin): each partner bin concentrates on one segment.
inline std::vector<std::vector<double>> segment_assignment(int n_segments) {
    std::vector<std::vector<double>> table(3, std::vector<double>(n_segments, 1.0));
    for (int p = 0; p < 3; ++p) {
        table[p][p % n_segments] = 30.0;
        double sum = 0.0;
        for (double w : table[p]) sum += w;
        for (double& w : table[p]) w /= sum;
    }
    return table;
}

inline DemandTruth make_demand_truth(const MarketConfig& cfg) {
    DemandTruth t;
    t.family = cfg.demand_family;
    std::vector<double> base = default_base_coefficients();
    if (cfg.profile == MarketConfig::Profile::wide) {
        // keep the logit inside the informative range of the link despite the
        // exaggerated feature dispersion; the truth file records these values
        base[4] *= 0.4;  // log(amount)
        base[5] *= 0.4;  // log(fico)
        base[6] *= 0.5;  // term
        base[8] *= 0.4;  // car U
    }
    switch (cfg.demand_family) {
        case DemandFamily::logistic: {
            t.params = LogisticTruth{0.0, base};
            break;
        }
        case DemandFamily::logistic_fdpe: {
            FdpeTruth p;
            p.base = LogisticTruth{0.0, base};
            p.interactions = {0.015, 0.0, 0.0005, 0.012, -0.02, 0.0004, 0.01,
                              0.06,  -0.03, -0.01, 0.0,   0.01,  -0.04};
            t.params = std::move(p);
            break;
        }
        case DemandFamily::segmented: {
            SegmentedTruth p;
            p.assignment = segment_assignment(cfg.n_segments);
            // Segments sweep price sensitivity, the used-car effect, and the
            // amount effect; intercepts are offset at representative feature
            // values so acceptance levels stay comparable across segments.
            const double ref_rate = 9.5, ref_car_u = 0.375, ref_log_amount = 9.9;
            for (int s = 0; s < cfg.n_segments; ++s) {
                const double w = cfg.n_segments == 1
                                     ? 0.5
                                     : static_cast<double>(s) /
                                           static_cast<double>(cfg.n_segments - 1);
                LogisticTruth seg{0.0, base};
                seg.coef[0] = base[0] * (0.25 + (2.50 - 0.25) * w);
                seg.coef[8] = base[8] * (1.5 + (0.5 - 1.5) * w);
                seg.coef[4] = base[4] * (0.75 + (1.25 - 0.75) * w);
                seg.intercept = -(seg.coef[0] - base[0]) * ref_rate -
                                (seg.coef[8] - base[8]) * ref_car_u -
                                (seg.coef[4] - base[4]) * ref_log_amount;
                p.segments.push_back(std::move(seg));
            }
            t.params = std::move(p);
            break;
        }
        case DemandFamily::time_varying: {
            TimeVaryingTruth p;
            p.train_regime = LogisticTruth{0.0, base};
            p.test_regime = LogisticTruth{0.0, base};
            p.test_regime.coef[0] = base[0] * (1.0 + cfg.drift_magnitude);   // rate
            p.test_regime.coef[1] = base[1] * (1.0 - cfg.drift_magnitude);   // prime
            p.test_regime.coef[8] = base[8] * (1.0 - 0.5 * cfg.drift_magnitude);  // car U
            p.test_regime.intercept = -(p.test_regime.coef[0] - base[0]) * 9.5;
            p.n_rows = cfg.n_applications;
            t.params = std::move(p);
            break;
        }
        case DemandFamily::neural_net: {
            NeuralTruth p;
            Rng net_rng = Rng(cfg.seed).stream(7);
            p.net = Network::make_mlp(response_terms::kBaseCount, {16, 16}, 1, Activation::tanh_,
                                      Activation::tanh_, 0.0, net_rng);
            MinMaxScaler sc(-1.0, 1.0);
            sc.set_bounds({kRateLow, 1.0, 0.0, 0.0, std::log(5000.0), std::log(500.0), 12.0,
                           0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
                          {kRateHigh, 8.0, 12.0, 15.0, std::log(90000.0), std::log(850.0), 72.0,
                           1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
            p.input_scaler = std::move(sc);
            p.rate_coef = -0.6599;
            p.output_scale = 1.5;
            t.params = std::move(p);
            break;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Application stream
// ---------------------------------------------------------------------------

inline int tier_from_fico(int fico) {
    if (fico >= 740) return 1;
    if (fico >= 700) return 2;
    if (fico >= 660) return 3;
    return 7;
}

inline std::vector<LoanApplication> generate_applications(const MarketConfig& cfg,
                                                          const DemandTruth& truth) {
    cfg.validate();
    const bool wide = cfg.profile == MarketConfig::Profile::wide;
    const long n = cfg.n_applications;
    Rng rng = Rng(cfg.seed).stream(1);

    const int horizon_months = 26;
    std::vector<double> prime_path(horizon_months);
    double prime = 4.0;
    const double walk_sd = wide ? 0.30 : 0.06;
    for (int m = 0; m < horizon_months; ++m) {
        prime_path[m] = prime;
        prime = std::clamp(prime + rng.normal(0.0, walk_sd), 1.0, 8.0);
    }

    const SegmentedTruth* seg = cfg.demand_family == DemandFamily::segmented
                                    ? &std::get<SegmentedTruth>(truth.params)
                                    : nullptr;

    std::vector<LoanApplication> apps;
    apps.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        LoanApplication a;
        a.app_index = i;
        a.months_since_start = static_cast<int>(i * horizon_months / n);
        a.month_of_year = static_cast<int>((6 + a.months_since_start) % 12) + 1;  // starts in July
        a.day_of_week = static_cast<int>(rng.below(7));
        a.prime_rate = prime_path[a.months_since_start];

        if (wide) {
            const double mu = rng.bernoulli(0.5) ? 508.0 : 843.0;
            const double sd = mu < 600.0 ? 10.0 : 8.0;
            a.fico = static_cast<int>(std::clamp(std::round(rng.normal(mu, sd)), 500.0, 850.0));
            a.tier = std::vector<int>{1, 2, 3, 7}[rng.below(4)];
        } else {
            a.fico = static_cast<int>(std::clamp(std::round(rng.normal(715.0, 60.0)), 500.0, 850.0));
            a.tier = tier_from_fico(a.fico);
        }
        a.pd = pd_from_fico(a.fico);

        if (wide) {
            a.term = std::vector<int>{12, 24, 36, 48, 60, 72}[rng.below(6)];
            a.amount = 5000.0 + std::exp(rng.normal(9.4, 0.7));
        } else {
            a.term = std::vector<int>{12, 24, 36, 48, 60, 72}[rng.categorical(
                {0.03, 0.07, 0.20, 0.30, 0.25, 0.15})];
            a.amount = 5000.0 + std::exp(rng.normal(9.5, 0.55));
        }
        a.competition_rate = std::max(a.prime_rate + rng.normal(1.9, wide ? 1.0 : 0.6), 0.0);

        const double refi_p = wide ? 0.4 : 0.25;
        if (rng.bernoulli(refi_p)) {
            a.loan_type = LoanType::refinance;
            a.car_type = CarType::refinanced;
            a.previous_rate = wide ? std::clamp(rng.normal(3.0, 3.0), 0.5, 12.0)
                                   : std::clamp(rng.normal(8.0, 2.0), 3.0, 15.0);
        } else {
            a.loan_type = LoanType::finance;
            a.car_type = rng.bernoulli(0.5) ? CarType::used : CarType::new_;
            a.previous_rate = 0.0;
        }
        a.partner_bin = wide ? static_cast<int>(rng.below(3)) + 1
                             : static_cast<int>(rng.categorical({0.5, 0.3, 0.2})) + 1;
        static const char* states[] = {"CA", "TX", "NY", "FL"};
        a.state_code = states[rng.categorical({0.7, 0.1, 0.1, 0.1})];
        int days = 0;
        while (days < 12 && !rng.bernoulli(0.35)) ++days;
        a.days_since_app = days;

        if (seg) {
            a.latent_segment =
                static_cast<int>(rng.categorical(seg->assignment[a.partner_bin - 1]));
        }
        a.validate();
        apps.push_back(std::move(a));
    }
    return apps;
}

// ---------------------------------------------------------------------------
// Behavioral policy
// ---------------------------------------------------------------------------

/// Historical pricing rule: prime plus a fixed margin, tier and partner
/// channel loadings, a PD loading, and Gaussian noise, clamped to the
/// admissible APR interval.
inline double behavioral_price(const LoanApplication& app, Rng& rng, double noise_sd) {
    double tier_load = 0.0;
    switch (app.tier) {
        case 1: tier_load = 0.0; break;
        case 2: tier_load = 0.4; break;
        case 3: tier_load = 0.8; break;
        case 7: tier_load = 1.2; break;
        default: throw std::invalid_argument("behavioral_price: unknown tier");
    }
    double partner_load = 0.0;
    switch (app.partner_bin) {
        case 1: partner_load = 0.8; break;
        case 2: partner_load = -0.8; break;
        case 3: partner_load = -0.6; break;
        default: throw std::invalid_argument("behavioral_price: unknown partner bin");
    }
    const double raw = app.prime_rate + 4.0 + tier_load + partner_load + 6.0 * app.pd +
                       rng.normal(0.0, noise_sd);
    return std::clamp(raw, kRateLow, kRateHigh);
}

// ---------------------------------------------------------------------------
// Calibration and dataset assembly
// ---------------------------------------------------------------------------

/// Bisection on the global intercept shift so the mean true accept
/// probability at the offered prices hits the target rate.
inline void calibrate_intercept(DemandTruth& truth, const std::vector<LoanApplication>& apps,
                                const std::vector<double>& prices, double target) {
    if (apps.size() != prices.size() || apps.empty())
        throw std::invalid_argument("calibrate_intercept: apps/prices misaligned");
    auto mean_prob = [&](double shift) {
        truth.intercept_shift = shift;
        double s = 0.0;
        for (std::size_t i = 0; i < apps.size(); ++i) s += truth.prob(apps[i], prices[i]);
        return s / static_cast<double>(apps.size());
    };
    double lo = -80.0, hi = 80.0;
    if (mean_prob(lo) > target || mean_prob(hi) < target)
        throw std::runtime_error("calibrate_intercept: target rate not bracketed");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_prob(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    truth.intercept_shift = 0.5 * (lo + hi);
    const double achieved = mean_prob(truth.intercept_shift);
    if (std::abs(achieved - target) > 0.02)
        throw std::runtime_error("calibrate_intercept: calibration failed");
}

inline Dataset sample_accepts_and_build_dataset(const std::vector<LoanApplication>& apps,
                                                const std::vector<double>& prices,
                                                const DemandTruth& truth,
                                                const RewardParams& reward_params, Rng& rng) {
    if (apps.size() != prices.size())
        throw std::invalid_argument("sample_accepts_and_build_dataset: apps/prices misaligned");
    Dataset ds;
    ds.rows.reserve(apps.size());
    for (std::size_t i = 0; i < apps.size(); ++i) {
        DatasetRow r;
        r.app = apps[i];
        r.offered_rate = prices[i];
        r.truth_accept_prob = truth.prob(apps[i], prices[i]);
        r.accept = rng.bernoulli(r.truth_accept_prob) ? 1 : 0;
        r.realized_reward = realized_reward(r.app, r.offered_rate, r.accept != 0, reward_params);
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

/// Chronological contiguous split tagging.
inline void split_dataset(Dataset& ds, const SplitFractions& f) {
    f.validate();
    const std::size_t n = ds.rows.size();
    if (n == 0) throw std::invalid_argument("split_dataset: empty dataset");
    const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
    if (n_train + n_val > n) throw std::invalid_argument("split_dataset: fractions overflow");
    const std::size_t n_test = n - n_train - n_val;
    if ((f.train > 0 && n_train == 0) || (f.val > 0 && n_val == 0) || (f.test > 0 && n_test == 0))
        throw std::invalid_argument("split_dataset: a requested split is empty");
    for (std::size_t i = 0; i < n; ++i) {
        ds.rows[i].split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    }
}

struct MarketData {
    Dataset dataset;
    DemandTruth truth;
};

/// Full pipeline: applications, behavioral prices, calibrated truth, sampled
/// accepts, split tags. Deterministic given the config seed.
inline MarketData build_market(const MarketConfig& cfg, const RewardParams& reward_params,
                               const SplitFractions& fractions = {}) {
    cfg.validate();
    reward_params.validate();
    DemandTruth truth = make_demand_truth(cfg);
    std::vector<LoanApplication> apps = generate_applications(cfg, truth);

    Rng price_rng = Rng(cfg.seed).stream(2);
    std::vector<double> prices;
    prices.reserve(apps.size());
    for (const auto& a : apps) prices.push_back(behavioral_price(a, price_rng, cfg.behavioral_noise_sd));

    calibrate_intercept(truth, apps, prices, cfg.target_accept_rate);

    Rng accept_rng = Rng(cfg.seed).stream(3);
    Dataset ds = sample_accepts_and_build_dataset(apps, prices, truth, reward_params, accept_rng);
    split_dataset(ds, fractions);
    return {std::move(ds), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

/// One (s, a, r, s') tuple. States are encoded and min-max scaled; the action
/// stays in APR points and the reward in dollars.
struct Transition {
    std::vector<double> state;
    double action = 0.0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool exclude_bootstrap = false;
};

inline MinMaxScaler fit_state_scaler(const Dataset& ds, Split split) {
    std::vector<const DatasetRow*> rows = ds.split_rows(split);
    if (rows.empty()) throw std::invalid_argument("fit_state_scaler: empty split");
    Matrix X(rows.size(), state_encoding::kDim);
    for (std::size_t i = 0; i < rows.size(); ++i) state_encoding::encode_into(rows[i]->app, X.row(i));
    MinMaxScaler sc(0.0, 1.0);
    sc.fit(X);
    return sc;
}

/// Chronological transitions for one split: the next application's state is
/// s'. The final row pairs with itself and is excluded from bootstrapping.
inline std::vector<Transition> to_transitions(const Dataset& ds, Split split,
                                              const MinMaxScaler& state_scaler) {
    std::vector<const DatasetRow*> rows = ds.split_rows(split);
    if (rows.size() < 2) throw std::invalid_argument("to_transitions: need at least 2 rows");
    std::vector<std::vector<double>> states(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        states[i] = state_encoding::encode(rows[i]->app);
        state_scaler.transform_row(states[i]);
    }
    std::vector<Transition> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i].state = states[i];
        out[i].action = rows[i]->offered_rate;
        out[i].reward = rows[i]->realized_reward;
        const bool last = i + 1 == rows.size();
        out[i].next_state = last ? states[i] : states[i + 1];
        out[i].exclude_bootstrap = last;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV round trip
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& dataset_csv_header() {
    static const std::vector<std::string> h = {
        "term",          "amount",       "fico",
        "pd",            "previous_rate", "competition_rate",
        "prime_rate",    "tier",         "loan_type",
        "car_type",      "partner_bin",  "state_code",
        "months_since_start", "day_of_week", "month_of_year",
        "days_since_app", "app_index",   "offered_rate",
        "accept",        "realized_reward", "split",
        "_truth_accept_prob", "_truth_segment"};
    return h;
}

inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
    csv::write_row(os, dataset_csv_header());
    for (const auto& r : ds.rows) {
        const auto& a = r.app;
        csv::write_row(os, {std::to_string(a.term), format_double(a.amount), std::to_string(a.fico),
                            format_double(a.pd), format_double(a.previous_rate),
                            format_double(a.competition_rate), format_double(a.prime_rate),
                            std::to_string(a.tier), loan_type_name(a.loan_type),
                            car_type_name(a.car_type), std::to_string(a.partner_bin), a.state_code,
                            std::to_string(a.months_since_start), std::to_string(a.day_of_week),
                            std::to_string(a.month_of_year), std::to_string(a.days_since_app),
                            std::to_string(a.app_index), format_double(r.offered_rate),
                            std::to_string(r.accept), format_double(r.realized_reward),
                            split_name(r.split), format_double(r.truth_accept_prob),
                            std::to_string(a.latent_segment)});
    }
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_dataset_csv: cannot write " + path);
    write_dataset_csv(ds, f);
}

inline Dataset read_dataset_csv(std::istream& is) {
    std::vector<std::string> row;
    if (!csv::read_row(is, row)) throw std::runtime_error("read_dataset_csv: empty file");
    if (row != dataset_csv_header()) throw std::runtime_error("read_dataset_csv: unexpected header");
    Dataset ds;
    while (csv::read_row(is, row)) {
        if (row.size() == 1 && row[0].empty()) continue;  // trailing newline
        if (row.size() != dataset_csv_header().size())
            throw std::runtime_error("read_dataset_csv: wrong column count");
        DatasetRow r;
        auto& a = r.app;
        std::size_t c = 0;
        a.term = static_cast<int>(parse_long(row[c++]));
        a.amount = parse_double(row[c++]);
        a.fico = static_cast<int>(parse_long(row[c++]));
        a.pd = parse_double(row[c++]);
        a.previous_rate = parse_double(row[c++]);
        a.competition_rate = parse_double(row[c++]);
        a.prime_rate = parse_double(row[c++]);
        a.tier = static_cast<int>(parse_long(row[c++]));
        a.loan_type = loan_type_from_name(row[c++]);
        a.car_type = car_type_from_name(row[c++]);
        a.partner_bin = static_cast<int>(parse_long(row[c++]));
        a.state_code = row[c++];
        a.months_since_start = static_cast<int>(parse_long(row[c++]));
        a.day_of_week = static_cast<int>(parse_long(row[c++]));
        a.month_of_year = static_cast<int>(parse_long(row[c++]));
        a.days_since_app = static_cast<int>(parse_long(row[c++]));
        a.app_index = parse_long(row[c++]);
        r.offered_rate = parse_double(row[c++]);
        r.accept = static_cast<int>(parse_long(row[c++]));
        r.realized_reward = parse_double(row[c++]);
        r.split = split_from_name(row[c++]);
        r.truth_accept_prob = parse_double(row[c++]);
        a.latent_segment = static_cast<int>(parse_long(row[c++]));
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_dataset_csv: cannot open " + path);
    return read_dataset_csv(f);
}

}  // namespace pricer
