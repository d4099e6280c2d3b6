#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/features.hpp"
#include "pricer/market.hpp"
#include "pricer/nn.hpp"
#include "pricer/policy.hpp"
#include "pricer/rng.hpp"

namespace pricer {

struct CqlConfig {
    double gamma = 0.999;
    int batch_size = 256;
    int n_epochs = 20;
    std::vector<std::size_t> hidden = {64, 64, 64, 64};
    int n_action_samples = 10;      // N in the conservative estimator
    double alpha_threshold = 10.0;  // kappa
    double conservative_weight = 5.0;
    double initial_alpha = 1.0;
    double actor_lr = 1e-4;
    double critic_lr = 3e-4;
    double temp_lr = 1e-4;
    double alpha_lr = 1e-4;
    double dropout = 0.2;  // critics only
    double weight_decay = 1e-4;
    int n_critics = 2;
    double polyak_tau = 0.005;
    std::optional<double> fixed_alpha;  // ablation mode: no dual updates
    double initial_temperature = 1.0;
    double target_entropy = -1.0;
    bool scale_rewards = true;  // min-max to [0, 1]
    std::uint64_t seed = 333;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("CqlConfig: gamma must be in (0,1)");
        if (n_action_samples < 1) throw std::invalid_argument("CqlConfig: n_action_samples must be >= 1");
        if (batch_size < 1 || n_epochs < 0) throw std::invalid_argument("CqlConfig: bad batch/epochs");
        if (actor_lr <= 0 || critic_lr <= 0 || temp_lr <= 0 || alpha_lr <= 0)
            throw std::invalid_argument("CqlConfig: learning rates must be > 0");
        if (n_critics != 2) throw std::invalid_argument("CqlConfig: exactly two critics are supported");
        if (hidden.empty()) throw std::invalid_argument("CqlConfig: need at least one hidden layer");
        if (fixed_alpha && *fixed_alpha < 0.0)
            throw std::invalid_argument("CqlConfig: fixed_alpha must be >= 0");
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"gamma", gamma},
                         {"batch_size", batch_size},
                         {"n_epochs", n_epochs},
                         {"hidden", hidden},
                         {"n_action_samples", n_action_samples},
                         {"alpha_threshold", alpha_threshold},
                         {"conservative_weight", conservative_weight},
                         {"initial_alpha", initial_alpha},
                         {"actor_lr", actor_lr},
                         {"critic_lr", critic_lr},
                         {"temp_lr", temp_lr},
                         {"alpha_lr", alpha_lr},
                         {"dropout", dropout},
                         {"weight_decay", weight_decay},
                         {"n_critics", n_critics},
                         {"polyak_tau", polyak_tau},
                         {"initial_temperature", initial_temperature},
                         {"target_entropy", target_entropy},
                         {"scale_rewards", scale_rewards},
                         {"seed", seed}};
        if (fixed_alpha)
            j["fixed_alpha"] = *fixed_alpha;
        else
            j["fixed_alpha"] = nullptr;
        return j;
    }

    static CqlConfig from_json(const nlohmann::json& j) {
        CqlConfig c;
        c.gamma = j.value("gamma", c.gamma);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.n_epochs = j.value("n_epochs", c.n_epochs);
        c.hidden = j.value("hidden", c.hidden);
        c.n_action_samples = j.value("n_action_samples", c.n_action_samples);
        c.alpha_threshold = j.value("alpha_threshold", c.alpha_threshold);
        c.conservative_weight = j.value("conservative_weight", c.conservative_weight);
        c.initial_alpha = j.value("initial_alpha", c.initial_alpha);
        c.actor_lr = j.value("actor_lr", c.actor_lr);
        c.critic_lr = j.value("critic_lr", c.critic_lr);
        c.temp_lr = j.value("temp_lr", c.temp_lr);
        c.alpha_lr = j.value("alpha_lr", c.alpha_lr);
        c.dropout = j.value("dropout", c.dropout);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.n_critics = j.value("n_critics", c.n_critics);
        c.polyak_tau = j.value("polyak_tau", c.polyak_tau);
        c.initial_temperature = j.value("initial_temperature", c.initial_temperature);
        c.target_entropy = j.value("target_entropy", c.target_entropy);
        c.scale_rewards = j.value("scale_rewards", c.scale_rewards);
        c.seed = j.value("seed", c.seed);
        if (j.contains("fixed_alpha") && !j.at("fixed_alpha").is_null())
            c.fixed_alpha = j.at("fixed_alpha").get<double>();
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Squashed-Gaussian actor
// ---------------------------------------------------------------------------

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct ActorSample {
    double action = 0.0;            // APR points
    double action_scaled = 0.0;     // in (-1, 1)
    double log_prob = 0.0;          // density w.r.t. APR
    double log_prob_scaled = 0.0;   // density w.r.t. the scaled interval
    double mu = 0.0;
    double log_std = 0.0;
    double eps = 0.0;
    bool log_std_clamped = false;
};

inline double affine_from_scaled(double t, double lo, double hi) {
    return lo + (t + 1.0) * 0.5 * (hi - lo);
}

/// Reparameterized sample with the tanh Jacobian correction and the affine
/// scale term in the log density.
inline ActorSample actor_sample(const Network& actor, std::span<const double> scaled_state,
                                Rng& rng, double lo = kRateLow, double hi = kRateHigh) {
    const auto out = actor.forward(scaled_state);
    if (!all_finite(std::span<const double>(out)))
        throw std::runtime_error("actor_sample: non-finite network output");
    ActorSample s;
    s.mu = out[0];
    const double raw = out[1];
    s.log_std = std::clamp(raw, kLogStdMin, kLogStdMax);
    s.log_std_clamped = raw != s.log_std;
    s.eps = rng.normal();
    const double sigma = std::exp(s.log_std);
    const double u = s.mu + sigma * s.eps;
    const double t = std::tanh(u);
    s.action_scaled = t;
    s.log_prob_scaled = -0.5 * s.eps * s.eps - s.log_std - 0.5 * std::log(2.0 * std::numbers::pi) -
                        std::log(1.0 - t * t + 1e-6);
    s.log_prob = s.log_prob_scaled - std::log((hi - lo) / 2.0);
    s.action = affine_from_scaled(t, lo, hi);
    return s;
}

/// Deterministic head of the squashed policy: affine(tanh(mu)).
inline double actor_mean_action(const Network& actor, std::span<const double> scaled_state,
                                double lo = kRateLow, double hi = kRateHigh) {
    const auto out = actor.forward(scaled_state);
    return affine_from_scaled(std::tanh(out[0]), lo, hi);
}

// ---------------------------------------------------------------------------
// Conservative penalty pieces
// ---------------------------------------------------------------------------

/// Importance-sampled log-sum-exp over one state's action samples:
/// log( (1/M) sum_i exp(q_i) / d_i ), stabilized by max subtraction.
inline double importance_logsumexp(std::span<const double> q, std::span<const double> log_density) {
    if (q.size() != log_density.size() || q.empty())
        throw std::invalid_argument("importance_logsumexp: misaligned samples");
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < q.size(); ++i) zmax = std::max(zmax, q[i] - log_density[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += std::exp(q[i] - log_density[i] - zmax);
    return zmax + std::log(acc) - std::log(static_cast<double>(q.size()));
}

/// Lagrangian dual ascent on log(alpha): alpha grows while the penalty
/// exceeds the threshold and shrinks otherwise. A fixed alpha skips this.
inline double alpha_update(double log_alpha, double penalty, double kappa, double alpha_lr) {
    return log_alpha + alpha_lr * std::exp(log_alpha) * (penalty - kappa);
}

// ---------------------------------------------------------------------------
// Policy artifact
// ---------------------------------------------------------------------------

/// Deterministic pricing head of a trained agent.
class CqlPolicy : public PricingPolicy {
public:
    CqlPolicy() = default;
    CqlPolicy(Network actor, MinMaxScaler state_scaler, double lo = kRateLow, double hi = kRateHigh)
        : actor_(std::move(actor)), state_scaler_(std::move(state_scaler)), lo_(lo), hi_(hi) {}

    double price(const LoanApplication& app) const override {
        std::vector<double> x = state_encoding::encode(app);
        state_scaler_.transform_row(x);
        return std::clamp(actor_mean_action(actor_, x, lo_, hi_), lo_, hi_);
    }

    std::string kind() const override { return "cql"; }
    const Network& actor() const { return actor_; }
    const MinMaxScaler& state_scaler() const { return state_scaler_; }

    nlohmann::json to_json() const {
        return {{"format", "credit-pricer/policy-v1"},
                {"kind", "cql"},
                {"actor", actor_.to_json()},
                {"state_scaler", state_scaler_.to_json()},
                {"action_low", lo_},
                {"action_high", hi_}};
    }

    static CqlPolicy from_json(const nlohmann::json& j) {
        if (j.at("kind").get<std::string>() != "cql")
            throw std::invalid_argument("CqlPolicy::from_json: not a cql policy");
        return CqlPolicy(Network::from_json(j.at("actor")),
                         MinMaxScaler::from_json(j.at("state_scaler")),
                         j.at("action_low").get<double>(), j.at("action_high").get<double>());
    }

private:
    Network actor_;
    MinMaxScaler state_scaler_;
    double lo_ = kRateLow;
    double hi_ = kRateHigh;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct StepMetrics {
    long step = 0;
    double critic_loss = 0.0;     // full objective, conservative term included
    double critic_td_loss = 0.0;  // mean squared TD error alone
    double actor_loss = 0.0;
    double penalty = 0.0;  // mean conservative gap over critics
    double alpha = 0.0;
    double temperature = 0.0;
    double action_gap = 0.0;  // mean |a_pi - a_data| in APR points
};

class CqlTrainer {
public:
    CqlTrainer(std::vector<Transition> transitions, CqlConfig config,
               MinMaxScaler state_scaler, double action_low = kRateLow,
               double action_high = kRateHigh)
        : data_(std::move(transitions)),
          cfg_(std::move(config)),
          state_scaler_(std::move(state_scaler)),
          lo_(action_low),
          hi_(action_high) {
        cfg_.validate();
        if (data_.size() < 2) throw std::invalid_argument("CqlTrainer: need at least 2 transitions");
        state_dim_ = data_.front().state.size();
        for (const auto& t : data_)
            if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_)
                throw std::invalid_argument("CqlTrainer: inconsistent state dimensions");

        if (cfg_.scale_rewards) {
            Matrix rewards(data_.size(), 1);
            for (std::size_t i = 0; i < data_.size(); ++i) rewards(i, 0) = data_[i].reward;
            reward_scaler_ = MinMaxScaler(0.0, 1.0);
            reward_scaler_->fit(rewards);
        }

        Rng init = Rng(cfg_.seed).stream(21);
        actor_ = Network::make_mlp(state_dim_, cfg_.hidden, 2, Activation::relu,
                                   Activation::identity, 0.0, init);
        q1_ = Network::make_mlp(state_dim_ + 1, cfg_.hidden, 1, Activation::relu,
                                Activation::identity, cfg_.dropout, init);
        q2_ = Network::make_mlp(state_dim_ + 1, cfg_.hidden, 1, Activation::relu,
                                Activation::identity, cfg_.dropout, init);
        tq1_ = q1_;
        tq2_ = q2_;
        actor_opt_ = AdamState::for_network(actor_, cfg_.actor_lr, cfg_.weight_decay);
        q1_opt_ = AdamState::for_network(q1_, cfg_.critic_lr, cfg_.weight_decay);
        q2_opt_ = AdamState::for_network(q2_, cfg_.critic_lr, cfg_.weight_decay);
        log_temp_ = std::log(std::max(cfg_.initial_temperature, 1e-8));
        temp_opt_ = std::make_unique<ScalarAdam>(cfg_.temp_lr);
        log_alpha_ = std::log(std::max(cfg_.fixed_alpha.value_or(cfg_.initial_alpha), 1e-30));
        sample_rng_ = std::make_unique<Rng>(Rng(cfg_.seed).stream(22));
        shuffle_rng_ = std::make_unique<Rng>(Rng(cfg_.seed).stream(23));
        dropout_rng_ = std::make_unique<Rng>(Rng(cfg_.seed).stream(24));
    }

    const CqlConfig& config() const { return cfg_; }
    const Network& actor() const { return actor_; }
    const Network& critic1() const { return q1_; }
    const Network& critic2() const { return q2_; }
    const Network& target1() const { return tq1_; }
    const Network& target2() const { return tq2_; }
    double alpha() const { return std::exp(log_alpha_); }
    double temperature() const { return std::exp(log_temp_); }
    long step_count() const { return step_; }
    const std::vector<Transition>& transitions() const { return data_; }
    std::size_t state_dim() const { return state_dim_; }

    double scaled_reward(double r) const {
        return reward_scaler_ ? reward_scaler_->transform_one(r, 0) : r;
    }

    double scale_action(double apr) const { return (apr - lo_) / (hi_ - lo_) * 2.0 - 1.0; }

    /// TD targets for a batch: y = r + gamma * (min target Q at a' ~ pi - temp * log pi),
    /// with bootstrapping suppressed on flagged rows.
    std::vector<double> compute_targets(const std::vector<std::size_t>& idx, Rng& rng) const {
        const std::size_t B = idx.size();
        Matrix next_states(B, state_dim_);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& ns = data_[idx[b]].next_state;
            std::copy(ns.begin(), ns.end(), next_states.row(b));
        }
        const Matrix actor_out = actor_.forward(next_states);
        Matrix qin(B, state_dim_ + 1);
        std::vector<double> log_pi(B);
        for (std::size_t b = 0; b < B; ++b) {
            const double mu = actor_out(b, 0);
            const double log_std = std::clamp(actor_out(b, 1), kLogStdMin, kLogStdMax);
            const double eps = rng.normal();
            const double u = mu + std::exp(log_std) * eps;
            const double t = std::tanh(u);
            log_pi[b] = -0.5 * eps * eps - log_std - 0.5 * std::log(2.0 * std::numbers::pi) -
                        std::log(1.0 - t * t + 1e-6);
            std::copy(next_states.row(b), next_states.row(b) + state_dim_, qin.row(b));
            qin(b, state_dim_) = t;
        }
        const Matrix tq1 = tq1_.forward(qin);
        const Matrix tq2 = tq2_.forward(qin);
        const double temp = std::exp(log_temp_);
        std::vector<double> y(B);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& tr = data_[idx[b]];
            const double r = scaled_reward(tr.reward);
            if (tr.exclude_bootstrap) {
                y[b] = r;
            } else {
                y[b] = r + cfg_.gamma * (std::min(tq1(b, 0), tq2(b, 0)) - temp * log_pi[b]);
            }
        }
        return y;
    }

    StepMetrics train_step(const std::vector<std::size_t>& idx) {
        const std::size_t B = idx.size();
        if (B == 0) throw std::invalid_argument("train_step: empty batch");
        StepMetrics m;
        m.step = step_;

        // batch tensors
        Matrix states(B, state_dim_);
        std::vector<double> data_actions_scaled(B);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& tr = data_[idx[b]];
            std::copy(tr.state.begin(), tr.state.end(), states.row(b));
            data_actions_scaled[b] = scale_action(tr.action);
        }
        const std::vector<double> targets = compute_targets(idx, *sample_rng_);

        // shared conservative-penalty action samples (N uniform + N policy per state)
        const int N = cfg_.n_action_samples;
        const std::size_t M = static_cast<std::size_t>(2 * N);
        const Matrix actor_out = actor_.forward(states);
        Matrix sampled_qin(B * M, state_dim_ + 1);
        std::vector<double> sample_log_density(B * M);
        for (std::size_t b = 0; b < B; ++b) {
            const double mu = actor_out(b, 0);
            const double log_std = std::clamp(actor_out(b, 1), kLogStdMin, kLogStdMax);
            const double sigma = std::exp(log_std);
            for (std::size_t i = 0; i < M; ++i) {
                const std::size_t row = b * M + i;
                std::copy(states.row(b), states.row(b) + state_dim_, sampled_qin.row(row));
                if (i < static_cast<std::size_t>(N)) {
                    sampled_qin(row, state_dim_) = sample_rng_->uniform(-1.0, 1.0);
                    sample_log_density[row] = std::log(0.5);
                } else {
                    const double eps = sample_rng_->normal();
                    const double u = mu + sigma * eps;
                    const double t = std::tanh(u);
                    sampled_qin(row, state_dim_) = t;
                    const double lp = -0.5 * eps * eps - log_std -
                                      0.5 * std::log(2.0 * std::numbers::pi) -
                                      std::log(1.0 - t * t + 1e-6);
                    sample_log_density[row] = std::max(lp, std::log(1e-10));
                }
            }
        }

        Matrix data_qin(B, state_dim_ + 1);
        for (std::size_t b = 0; b < B; ++b) {
            std::copy(states.row(b), states.row(b) + state_dim_, data_qin.row(b));
            data_qin(b, state_dim_) = data_actions_scaled[b];
        }

        const double alpha = std::exp(log_alpha_);
        const double cw = cfg_.conservative_weight;
        double penalty_sum = 0.0;
        double critic_loss_sum = 0.0;
        double td_loss_sum = 0.0;

        auto update_critic = [&](Network& q, AdamState& opt) {
            ForwardCache data_cache;
            const Matrix q_data = q.forward(data_qin, true, dropout_rng_.get(), &data_cache);
            ForwardCache sample_cache;
            const Matrix q_sampled = q.forward(sampled_qin, true, dropout_rng_.get(), &sample_cache);

            // per-state stabilized logsumexp of q - log density, minus log M
            double lse_mean = 0.0;
            Matrix d_sampled(B * M, 1);
            for (std::size_t b = 0; b < B; ++b) {
                double zmax = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < M; ++i) {
                    const std::size_t row = b * M + i;
                    zmax = std::max(zmax, q_sampled(row, 0) - sample_log_density[row]);
                }
                double acc = 0.0;
                for (std::size_t i = 0; i < M; ++i) {
                    const std::size_t row = b * M + i;
                    acc += std::exp(q_sampled(row, 0) - sample_log_density[row] - zmax);
                }
                lse_mean += zmax + std::log(acc) - std::log(static_cast<double>(M));
                const double inv_acc = 1.0 / acc;
                for (std::size_t i = 0; i < M; ++i) {
                    const std::size_t row = b * M + i;
                    const double softmax =
                        std::exp(q_sampled(row, 0) - sample_log_density[row] - zmax) * inv_acc;
                    d_sampled(row, 0) = cw * alpha * softmax / static_cast<double>(B);
                }
            }
            lse_mean /= static_cast<double>(B);

            double data_q_mean = 0.0;
            for (std::size_t b = 0; b < B; ++b) data_q_mean += q_data(b, 0);
            data_q_mean /= static_cast<double>(B);

            const double penalty = lse_mean - data_q_mean;
            penalty_sum += penalty;

            double mse = 0.0;
            Matrix d_data(B, 1);
            for (std::size_t b = 0; b < B; ++b) {
                const double err = q_data(b, 0) - targets[b];
                mse += err * err;
                d_data(b, 0) = 2.0 * err / static_cast<double>(B) - cw * alpha / static_cast<double>(B);
            }
            mse /= static_cast<double>(B);
            td_loss_sum += mse;
            const double loss = mse + cw * alpha * (penalty - cfg_.alpha_threshold);
            critic_loss_sum += loss;
            if (!std::isfinite(loss))
                throw std::runtime_error("cql train_step: non-finite critic loss at step " +
                                         std::to_string(step_));

            Gradients g_data = q.backward(data_cache, d_data);
            const Gradients g_sample = q.backward(sample_cache, d_sampled);
            for (std::size_t k = 0; k < g_data.d_weights.size(); ++k) {
                for (std::size_t i = 0; i < g_data.d_weights[k].data.size(); ++i)
                    g_data.d_weights[k].data[i] += g_sample.d_weights[k].data[i];
                for (std::size_t i = 0; i < g_data.d_biases[k].size(); ++i)
                    g_data.d_biases[k][i] += g_sample.d_biases[k][i];
            }
            adam_step(q, g_data, opt);
        };
        update_critic(q1_, q1_opt_);
        update_critic(q2_, q2_opt_);
        m.penalty = penalty_sum / 2.0;
        m.critic_loss = critic_loss_sum / 2.0;
        m.critic_td_loss = td_loss_sum / 2.0;

        // ------------------------------------------------------------------
        // actor update: maximize E[min Q(s, a~pi) - temp * log pi]
        // ------------------------------------------------------------------
        ForwardCache actor_cache;
        const Matrix actor_out2 = actor_.forward(states, false, nullptr, &actor_cache);
        std::vector<double> mu(B), log_std(B), eps(B), tanh_u(B), log_pi(B);
        std::vector<bool> clamped(B);
        Matrix pi_qin(B, state_dim_ + 1);
        for (std::size_t b = 0; b < B; ++b) {
            mu[b] = actor_out2(b, 0);
            const double raw = actor_out2(b, 1);
            log_std[b] = std::clamp(raw, kLogStdMin, kLogStdMax);
            clamped[b] = raw != log_std[b];
            eps[b] = sample_rng_->normal();
            const double u = mu[b] + std::exp(log_std[b]) * eps[b];
            tanh_u[b] = std::tanh(u);
            log_pi[b] = -0.5 * eps[b] * eps[b] - log_std[b] -
                        0.5 * std::log(2.0 * std::numbers::pi) -
                        std::log(1.0 - tanh_u[b] * tanh_u[b] + 1e-6);
            std::copy(states.row(b), states.row(b) + state_dim_, pi_qin.row(b));
            pi_qin(b, state_dim_) = tanh_u[b];
        }
        ForwardCache q1_cache, q2_cache;
        const Matrix q1_pi = q1_.forward(pi_qin, true, dropout_rng_.get(), &q1_cache);
        const Matrix q2_pi = q2_.forward(pi_qin, true, dropout_rng_.get(), &q2_cache);
        const double temp = std::exp(log_temp_);

        double actor_loss = 0.0;
        Matrix d_q1(B, 1, 0.0), d_q2(B, 1, 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            const double qmin = std::min(q1_pi(b, 0), q2_pi(b, 0));
            actor_loss += temp * log_pi[b] - qmin;
            const double dq = -1.0 / static_cast<double>(B);
            if (q1_pi(b, 0) <= q2_pi(b, 0))
                d_q1(b, 0) = dq;
            else
                d_q2(b, 0) = dq;
        }
        actor_loss /= static_cast<double>(B);
        if (!std::isfinite(actor_loss))
            throw std::runtime_error("cql train_step: non-finite actor loss at step " +
                                     std::to_string(step_));
        m.actor_loss = actor_loss;

        // dL/dt through the chosen critic's action input
        const Gradients gq1 = q1_.backward(q1_cache, d_q1);
        const Gradients gq2 = q2_.backward(q2_cache, d_q2);
        Matrix d_actor_out(B, 2);
        const double invB = 1.0 / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            const double t = tanh_u[b];
            const double one_m_t2 = 1.0 - t * t;
            const double dL_dt_critic = gq1.d_input(b, state_dim_) + gq2.d_input(b, state_dim_);
            const double dlogpi_du = 2.0 * t * one_m_t2 / (one_m_t2 + 1e-6);
            const double dL_du = invB * temp * dlogpi_du + dL_dt_critic * one_m_t2;
            d_actor_out(b, 0) = dL_du;  // d/dmu
            const double sigma_eps = std::exp(log_std[b]) * eps[b];
            d_actor_out(b, 1) = clamped[b] ? 0.0 : dL_du * sigma_eps - invB * temp;
        }
        adam_step(actor_, actor_.backward(actor_cache, d_actor_out), actor_opt_);

        // temperature toward the target entropy
        double mean_log_pi = 0.0;
        for (std::size_t b = 0; b < B; ++b) mean_log_pi += log_pi[b];
        mean_log_pi /= static_cast<double>(B);
        const double temp_grad = -(mean_log_pi + cfg_.target_entropy) * std::exp(log_temp_);
        log_temp_ = temp_opt_->apply(log_temp_, temp_grad);

        // Lagrangian alpha
        if (!cfg_.fixed_alpha) {
            log_alpha_ = alpha_update(log_alpha_, m.penalty, cfg_.alpha_threshold, cfg_.alpha_lr);
        }

        // Polyak target sync
        polyak(tq1_, q1_, cfg_.polyak_tau);
        polyak(tq2_, q2_, cfg_.polyak_tau);

        m.alpha = std::exp(log_alpha_);
        m.temperature = std::exp(log_temp_);
        double gap = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            gap += std::abs(affine_from_scaled(tanh_u[b], lo_, hi_) - data_[idx[b]].action);
        m.action_gap = gap / static_cast<double>(B);

        ++step_;
        return m;
    }

    /// Epoch loop over shuffled minibatches. The callback fires after every
    /// epoch (checkpointing, logging).
    std::vector<StepMetrics> train(
        const std::function<void(int epoch, const CqlTrainer&)>& on_epoch = nullptr) {
        std::vector<StepMetrics> trace;
        std::vector<std::size_t> order(data_.size());
        std::iota(order.begin(), order.end(), 0);
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        for (int epoch = 0; epoch < cfg_.n_epochs; ++epoch) {
            shuffle_rng_->shuffle(order);
            const std::size_t n_batches = std::max<std::size_t>(1, order.size() / bs);
            for (std::size_t k = 0; k < n_batches; ++k) {
                const std::size_t begin = k * bs;
                const std::size_t end = std::min(order.size(), begin + bs);
                std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
                trace.push_back(train_step(idx));
            }
            if (on_epoch) on_epoch(epoch, *this);
        }
        return trace;
    }

    CqlPolicy policy() const { return CqlPolicy(actor_, state_scaler_, lo_, hi_); }

    /// Mean online Q at actions sampled from the current policy minus mean
    /// online Q at the data actions, evaluated without dropout. The dual
    /// constraint keeps this below kappa.
    double conservative_gap(std::size_t max_rows = 4096, int n_samples = 4) const {
        const std::size_t n = std::min(max_rows, data_.size());
        Rng rng = Rng(cfg_.seed).stream(29);
        const auto ns = static_cast<std::size_t>(n_samples);
        Matrix pi_qin(n * ns, state_dim_ + 1), data_qin(n, state_dim_ + 1);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& tr = data_[i];
            std::copy(tr.state.begin(), tr.state.end(), data_qin.row(i));
            data_qin(i, state_dim_) = scale_action(tr.action);
            const auto out = actor_.forward(std::span<const double>(tr.state));
            const double mu = out[0];
            const double sigma = std::exp(std::clamp(out[1], kLogStdMin, kLogStdMax));
            for (std::size_t k = 0; k < ns; ++k) {
                std::copy(tr.state.begin(), tr.state.end(), pi_qin.row(i * ns + k));
                pi_qin(i * ns + k, state_dim_) = std::tanh(mu + sigma * rng.normal());
            }
        }
        const Matrix q1_pi = q1_.forward(pi_qin), q2_pi = q2_.forward(pi_qin);
        const Matrix q1_d = q1_.forward(data_qin), q2_d = q2_.forward(data_qin);
        double gap = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pi_mean = 0.0;
            for (std::size_t k = 0; k < ns; ++k)
                pi_mean += std::min(q1_pi(i * ns + k, 0), q2_pi(i * ns + k, 0));
            gap += pi_mean / static_cast<double>(ns) - std::min(q1_d(i, 0), q2_d(i, 0));
        }
        return gap / static_cast<double>(n);
    }

private:
    static void polyak(Network& target, const Network& online, double tau) {
        auto& tl = target.layers();
        const auto& ol = online.layers();
        for (std::size_t k = 0; k < tl.size(); ++k) {
            for (std::size_t i = 0; i < tl[k].weights.data.size(); ++i)
                tl[k].weights.data[i] =
                    (1.0 - tau) * tl[k].weights.data[i] + tau * ol[k].weights.data[i];
            for (std::size_t i = 0; i < tl[k].biases.size(); ++i)
                tl[k].biases[i] = (1.0 - tau) * tl[k].biases[i] + tau * ol[k].biases[i];
        }
    }

    std::vector<Transition> data_;
    CqlConfig cfg_;
    MinMaxScaler state_scaler_;
    double lo_, hi_;
    std::size_t state_dim_ = 0;
    std::optional<MinMaxScaler> reward_scaler_;
    Network actor_, q1_, q2_, tq1_, tq2_;
    AdamState actor_opt_, q1_opt_, q2_opt_;
    double log_temp_ = 0.0;
    std::unique_ptr<ScalarAdam> temp_opt_;
    double log_alpha_ = 0.0;
    std::unique_ptr<Rng> sample_rng_, shuffle_rng_, dropout_rng_;
    long step_ = 0;
};

/// Convenience wrapper: transitions in, trained policy and metric trace out.
struct CqlTrainResult {
    CqlPolicy policy;
    std::vector<StepMetrics> metrics;
    double final_conservative_gap = 0.0;
};

inline CqlTrainResult train_cql(std::vector<Transition> transitions, const CqlConfig& cfg,
                                const MinMaxScaler& state_scaler,
                                const std::function<void(int, const CqlTrainer&)>& on_epoch = nullptr) {
    CqlTrainer trainer(std::move(transitions), cfg, state_scaler);
    CqlTrainResult result;
    result.metrics = trainer.train(on_epoch);
    result.policy = trainer.policy();
    result.final_conservative_gap = trainer.conservative_gap();
    return result;
}

/// Metric trace CSV with one row per training step.
inline void write_metrics_csv(const std::vector<StepMetrics>& metrics, std::ostream& os) {
    os << "step,critic_loss,actor_loss,penalty,alpha,temperature\n";
    for (const auto& m : metrics) {
        os << m.step << ',' << format_double(m.critic_loss) << ',' << format_double(m.actor_loss)
           << ',' << format_double(m.penalty) << ',' << format_double(m.alpha) << ','
           << format_double(m.temperature) << '\n';
    }
}

}  // namespace pricer
