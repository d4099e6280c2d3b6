#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/cql.hpp"
#include "pricer/market.hpp"
#include "pricer/response.hpp"
#include "pricer/reward.hpp"

namespace pricer {

/// Fail fast on typos: any key outside the allowed set is an error.
inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
    if (!j.is_object()) throw std::invalid_argument("config: " + context + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "' in " + context);
    }
}

inline nlohmann::json market_config_to_json(const MarketConfig& c) {
    return {{"n_applications", c.n_applications},
            {"demand_family", demand_family_name(c.demand_family)},
            {"n_segments", c.n_segments},
            {"drift_magnitude", c.drift_magnitude},
            {"behavioral_noise_sd", c.behavioral_noise_sd},
            {"target_accept_rate", c.target_accept_rate},
            {"seed", c.seed},
            {"profile", c.profile == MarketConfig::Profile::wide ? "wide" : "standard"}};
}

inline MarketConfig market_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"n_applications", "demand_family", "n_segments", "drift_magnitude",
                "behavioral_noise_sd", "target_accept_rate", "seed", "profile"},
               "market");
    MarketConfig c;
    c.n_applications = j.value("n_applications", c.n_applications);
    if (j.contains("demand_family"))
        c.demand_family = demand_family_from_name(j.at("demand_family").get<std::string>());
    c.n_segments = j.value("n_segments", c.n_segments);
    c.drift_magnitude = j.value("drift_magnitude", c.drift_magnitude);
    c.behavioral_noise_sd = j.value("behavioral_noise_sd", c.behavioral_noise_sd);
    c.target_accept_rate = j.value("target_accept_rate", c.target_accept_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("profile")) {
        const auto p = j.at("profile").get<std::string>();
        if (p == "standard")
            c.profile = MarketConfig::Profile::standard;
        else if (p == "wide")
            c.profile = MarketConfig::Profile::wide;
        else
            throw std::invalid_argument("config: unknown market profile '" + p + "'");
    }
    c.validate();
    return c;
}

struct ResponseOptions {
    std::string variant = "logistic";  // logistic | logistic-l2 | fdpe | neural
    double l2_lambda = 0.0;
    NeuralResponseConfig neural;

    void validate() const {
        if (variant != "logistic" && variant != "logistic-l2" && variant != "fdpe" &&
            variant != "neural")
            throw std::invalid_argument("config: unknown response variant '" + variant + "'");
        if (l2_lambda < 0.0) throw std::invalid_argument("config: l2_lambda must be >= 0");
    }
};

inline nlohmann::json neural_config_to_json(const NeuralResponseConfig& c) {
    return {{"hidden", c.hidden},       {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay}, {"patience", c.patience},
            {"seed", c.seed}};
}

inline NeuralResponseConfig neural_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"hidden", "epochs", "batch_size", "learning_rate", "weight_decay", "patience", "seed"},
               "response.neural");
    NeuralResponseConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    return c;
}

/// The one configuration document every subcommand consumes. Validated up
/// front and echoed verbatim into each output manifest.
struct RunConfig {
    MarketConfig market;
    RewardParams reward;
    SplitFractions split;
    ResponseOptions response;
    CqlConfig cql;
    std::vector<std::string> evaluators = {"logistic", "logistic-l2-0.1", "logistic-l2-1", "fdpe",
                                           "neural"};
    std::vector<std::uint64_t> seeds = {333, 42, 3};
    int jobs = 1;

    void validate() const {
        market.validate();
        reward.validate();
        split.validate();
        response.validate();
        cql.validate();
        if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
        if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
        for (const auto& e : evaluators) {
            if (e != "logistic" && e != "logistic-l2-0.1" && e != "logistic-l2-1" && e != "fdpe" &&
                e != "neural" && e != "truth")
                throw std::invalid_argument("config: unknown evaluator '" + e + "'");
        }
    }

    nlohmann::json to_json() const {
        return {{"market", market_config_to_json(market)},
                {"reward", {{"lgd", reward.lgd}, {"payment_frequency", reward.payment_frequency}}},
                {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}},
                {"response",
                 {{"variant", response.variant},
                  {"l2_lambda", response.l2_lambda},
                  {"neural", neural_config_to_json(response.neural)}}},
                {"cql", cql.to_json()},
                {"evaluators", evaluators},
                {"seeds", seeds},
                {"jobs", jobs}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        check_keys(j, {"market", "reward", "split", "response", "cql", "evaluators", "seeds", "jobs"},
                   "root");
        RunConfig c;
        // the synthetic setup uses two hidden layers by default
        c.cql.hidden = {64, 64};
        if (j.contains("market")) c.market = market_config_from_json(j.at("market"));
        if (j.contains("reward")) {
            check_keys(j.at("reward"), {"lgd", "payment_frequency"}, "reward");
            c.reward.lgd = j.at("reward").value("lgd", c.reward.lgd);
            c.reward.payment_frequency =
                j.at("reward").value("payment_frequency", c.reward.payment_frequency);
        }
        if (j.contains("split")) {
            check_keys(j.at("split"), {"train", "val", "test"}, "split");
            c.split.train = j.at("split").value("train", c.split.train);
            c.split.val = j.at("split").value("val", c.split.val);
            c.split.test = j.at("split").value("test", c.split.test);
        }
        if (j.contains("response")) {
            check_keys(j.at("response"), {"variant", "l2_lambda", "neural"}, "response");
            c.response.variant = j.at("response").value("variant", c.response.variant);
            c.response.l2_lambda = j.at("response").value("l2_lambda", c.response.l2_lambda);
            if (j.at("response").contains("neural"))
                c.response.neural = neural_config_from_json(j.at("response").at("neural"));
        }
        if (j.contains("cql")) {
            check_keys(j.at("cql"),
                       {"gamma", "batch_size", "n_epochs", "hidden", "n_action_samples",
                        "alpha_threshold", "conservative_weight", "initial_alpha", "actor_lr",
                        "critic_lr", "temp_lr", "alpha_lr", "dropout", "weight_decay", "n_critics",
                        "polyak_tau", "fixed_alpha", "initial_temperature", "target_entropy",
                        "scale_rewards", "seed"},
                       "cql");
            nlohmann::json merged = c.cql.to_json();
            merged.update(j.at("cql"));
            c.cql = CqlConfig::from_json(merged);
        }
        if (j.contains("evaluators")) c.evaluators = j.at("evaluators").get<std::vector<std::string>>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.jobs = j.value("jobs", c.jobs);
        c.validate();
        return c;
    }
};

}  // namespace pricer
