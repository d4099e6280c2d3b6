#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pricer/features.hpp"
#include "pricer/loan.hpp"
#include "pricer/nn.hpp"

namespace pricer {

enum class DemandFamily { logistic, logistic_fdpe, segmented, time_varying, neural_net };

inline std::string demand_family_name(DemandFamily f) {
    switch (f) {
        case DemandFamily::logistic: return "logistic";
        case DemandFamily::logistic_fdpe: return "logistic-fdpe";
        case DemandFamily::segmented: return "segmented";
        case DemandFamily::time_varying: return "time-varying";
        case DemandFamily::neural_net: return "neural-net";
    }
    throw std::invalid_argument("demand_family_name: bad value");
}

inline DemandFamily demand_family_from_name(const std::string& s) {
    if (s == "logistic") return DemandFamily::logistic;
    if (s == "logistic-fdpe") return DemandFamily::logistic_fdpe;
    if (s == "segmented") return DemandFamily::segmented;
    if (s == "time-varying") return DemandFamily::time_varying;
    if (s == "neural-net") return DemandFamily::neural_net;
    throw std::invalid_argument("unknown demand family '" + s + "'");
}

/// Baseline demand coefficients, aligned with response_terms::base_names().
/// The rate coefficient is negative, which every logistic family preserves.
inline const std::vector<double>& default_base_coefficients() {
    static const std::vector<double> c = {-0.6599, 0.8124, 0.1619,  0.0021,  -1.7937, -4.4786, 0.0518,
                                          0.2901,  2.4328, -1.1915, -0.3275, -0.1404, -0.0351, 0.3245};
    return c;
}

struct LogisticTruth {
    double intercept = 0.0;
    std::vector<double> coef;  // response_terms::kBaseCount entries
};

struct FdpeTruth {
    LogisticTruth base;
    std::vector<double> interactions;  // kBaseCount-1, rate x base term j+1
};

struct SegmentedTruth {
    std::vector<LogisticTruth> segments;
    // P(segment | partner_bin); rows are partner bins 1..3.
    std::vector<std::vector<double>> assignment;
};

struct TimeVaryingTruth {
    LogisticTruth train_regime;
    LogisticTruth test_regime;
    long n_rows = 1;  // interpolation scale over app_index
};

struct NeuralTruth {
    double intercept = 0.0;
    double rate_coef = -0.6599;
    double output_scale = 1.5;
    Network net;               // maps scaled base terms to one logit bump
    MinMaxScaler input_scaler; // fixed bounds over the base terms
};

/// Ground-truth price-response function. `intercept_shift` is the global
/// offset the accept-rate calibration adjusts.
struct DemandTruth {
    DemandFamily family = DemandFamily::logistic;
    double intercept_shift = 0.0;
    std::variant<LogisticTruth, FdpeTruth, SegmentedTruth, TimeVaryingTruth, NeuralTruth> params;

    double logit(const LoanApplication& app, double rate) const {
        switch (family) {
            case DemandFamily::logistic: {
                const auto& p = std::get<LogisticTruth>(params);
                return p.intercept + intercept_shift + dot_base(p.coef, app, rate);
            }
            case DemandFamily::logistic_fdpe: {
                const auto& p = std::get<FdpeTruth>(params);
                double z = p.base.intercept + intercept_shift + dot_base(p.base.coef, app, rate);
                const auto x = response_terms::base_row(app, rate);
                for (std::size_t j = 1; j < response_terms::kBaseCount; ++j)
                    z += p.interactions[j - 1] * rate * x[j];
                return z;
            }
            case DemandFamily::segmented: {
                const auto& p = std::get<SegmentedTruth>(params);
                const auto s = static_cast<std::size_t>(app.latent_segment);
                if (s >= p.segments.size())
                    throw std::invalid_argument("DemandTruth: latent segment out of range");
                const auto& seg = p.segments[s];
                return seg.intercept + intercept_shift + dot_base(seg.coef, app, rate);
            }
            case DemandFamily::time_varying: {
                const auto& p = std::get<TimeVaryingTruth>(params);
                const double w = p.n_rows > 1
                                     ? std::clamp(static_cast<double>(app.app_index) /
                                                      static_cast<double>(p.n_rows - 1),
                                                  0.0, 1.0)
                                     : 0.0;
                double z = (1.0 - w) * p.train_regime.intercept + w * p.test_regime.intercept +
                           intercept_shift;
                const auto x = response_terms::base_row(app, rate);
                for (std::size_t j = 0; j < response_terms::kBaseCount; ++j)
                    z += ((1.0 - w) * p.train_regime.coef[j] + w * p.test_regime.coef[j]) * x[j];
                return z;
            }
            case DemandFamily::neural_net: {
                const auto& p = std::get<NeuralTruth>(params);
                std::vector<double> x = response_terms::base_row(app, rate);
                p.input_scaler.transform_row(x);
                const double bump = p.net.forward(std::span<const double>(x))[0];
                return p.intercept + intercept_shift + p.rate_coef * rate + p.output_scale * bump;
            }
        }
        throw std::invalid_argument("DemandTruth: unknown family");
    }

    double prob(const LoanApplication& app, double rate) const { return sigmoid(logit(app, rate)); }

private:
    static double dot_base(const std::vector<double>& coef, const LoanApplication& app, double rate) {
        const auto x = response_terms::base_row(app, rate);
        double z = 0.0;
        for (std::size_t j = 0; j < response_terms::kBaseCount; ++j) z += coef[j] * x[j];
        return z;
    }
};

inline double true_accept_probability(const DemandTruth& truth, const LoanApplication& app, double rate) {
    return truth.prob(app, rate);
}

// ---------------------------------------------------------------------------
// JSON round trip. truth.json reconstructs the response function exactly.
// ---------------------------------------------------------------------------

inline nlohmann::json logistic_truth_to_json(const LogisticTruth& p) {
    return {{"intercept", p.intercept}, {"coefficients", p.coef}};
}

inline LogisticTruth logistic_truth_from_json(const nlohmann::json& j) {
    LogisticTruth p;
    p.intercept = j.at("intercept").get<double>();
    p.coef = j.at("coefficients").get<std::vector<double>>();
    if (p.coef.size() != response_terms::kBaseCount)
        throw std::invalid_argument("truth: coefficient count mismatch");
    return p;
}

inline nlohmann::json demand_truth_to_json(const DemandTruth& t) {
    nlohmann::json j;
    j["family"] = demand_family_name(t.family);
    j["intercept_shift"] = t.intercept_shift;
    j["terms"] = response_terms::base_names();
    switch (t.family) {
        case DemandFamily::logistic:
            j["logistic"] = logistic_truth_to_json(std::get<LogisticTruth>(t.params));
            break;
        case DemandFamily::logistic_fdpe: {
            const auto& p = std::get<FdpeTruth>(t.params);
            j["fdpe"] = {{"base", logistic_truth_to_json(p.base)}, {"interactions", p.interactions}};
            break;
        }
        case DemandFamily::segmented: {
            const auto& p = std::get<SegmentedTruth>(t.params);
            nlohmann::json segs = nlohmann::json::array();
            for (const auto& s : p.segments) segs.push_back(logistic_truth_to_json(s));
            j["segmented"] = {{"segments", segs}, {"assignment", p.assignment}};
            break;
        }
        case DemandFamily::time_varying: {
            const auto& p = std::get<TimeVaryingTruth>(t.params);
            j["time_varying"] = {{"train_regime", logistic_truth_to_json(p.train_regime)},
                                 {"test_regime", logistic_truth_to_json(p.test_regime)},
                                 {"n_rows", p.n_rows}};
            break;
        }
        case DemandFamily::neural_net: {
            const auto& p = std::get<NeuralTruth>(t.params);
            j["neural"] = {{"intercept", p.intercept},
                           {"rate_coef", p.rate_coef},
                           {"output_scale", p.output_scale},
                           {"network", p.net.to_json()},
                           {"input_scaler", p.input_scaler.to_json()}};
            break;
        }
    }
    return j;
}

inline DemandTruth demand_truth_from_json(const nlohmann::json& j) {
    DemandTruth t;
    t.family = demand_family_from_name(j.at("family").get<std::string>());
    t.intercept_shift = j.at("intercept_shift").get<double>();
    switch (t.family) {
        case DemandFamily::logistic:
            t.params = logistic_truth_from_json(j.at("logistic"));
            break;
        case DemandFamily::logistic_fdpe: {
            FdpeTruth p;
            p.base = logistic_truth_from_json(j.at("fdpe").at("base"));
            p.interactions = j.at("fdpe").at("interactions").get<std::vector<double>>();
            if (p.interactions.size() != response_terms::kBaseCount - 1)
                throw std::invalid_argument("truth: interaction count mismatch");
            t.params = std::move(p);
            break;
        }
        case DemandFamily::segmented: {
            SegmentedTruth p;
            for (const auto& sj : j.at("segmented").at("segments"))
                p.segments.push_back(logistic_truth_from_json(sj));
            p.assignment = j.at("segmented").at("assignment").get<std::vector<std::vector<double>>>();
            t.params = std::move(p);
            break;
        }
        case DemandFamily::time_varying: {
            TimeVaryingTruth p;
            p.train_regime = logistic_truth_from_json(j.at("time_varying").at("train_regime"));
            p.test_regime = logistic_truth_from_json(j.at("time_varying").at("test_regime"));
            p.n_rows = j.at("time_varying").at("n_rows").get<long>();
            t.params = std::move(p);
            break;
        }
        case DemandFamily::neural_net: {
            NeuralTruth p;
            const auto& nj = j.at("neural");
            p.intercept = nj.at("intercept").get<double>();
            p.rate_coef = nj.at("rate_coef").get<double>();
            p.output_scale = nj.at("output_scale").get<double>();
            p.net = Network::from_json(nj.at("network"));
            p.input_scaler = MinMaxScaler::from_json(nj.at("input_scaler"));
            t.params = std::move(p);
            break;
        }
    }
    return t;
}

}  // namespace pricer
