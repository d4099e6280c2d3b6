#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/demand.hpp"
#include "pricer/features.hpp"
#include "pricer/market.hpp"
#include "pricer/nn.hpp"

namespace pricer {

/// A price-response function p(Accept | s, a). Implemented by the fitted
/// models below and by the ground-truth adapter.
struct PriceResponse {
    virtual ~PriceResponse() = default;
    virtual double predict(const LoanApplication& app, double rate) const = 0;
    virtual std::string id() const = 0;
};

/// Ground truth exposed through the evaluator interface.
class TruthResponse : public PriceResponse {
public:
    explicit TruthResponse(DemandTruth truth) : truth_(std::move(truth)) {}
    double predict(const LoanApplication& app, double rate) const override {
        return truth_.prob(app, rate);
    }
    std::string id() const override { return "true-" + demand_family_name(truth_.family); }
    const DemandTruth& truth() const { return truth_; }

private:
    DemandTruth truth_;
};

struct FitDiagnostics {
    double log_likelihood = 0.0;
    double null_log_likelihood = 0.0;
    double auc = 0.0;
    double pseudo_r2 = 0.0;
    int iterations = 0;
    bool converged = false;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney AUC from scores and binary labels; ties contribute one half.
inline double auc_from_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc: scores/labels misaligned");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[idx[k]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j + 1;
    }
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: need both classes");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

template <typename Rows>
inline double auc(const PriceResponse& model, const Rows& rows) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : rows) {
        scores.push_back(model.predict(r->app, r->offered_rate));
        labels.push_back(r->accept);
    }
    return auc_from_scores(scores, labels);
}

template <typename Rows>
inline double log_likelihood(const PriceResponse& model, const Rows& rows) {
    double ll = 0.0;
    for (const auto& r : rows) {
        const double p = std::clamp(model.predict(r->app, r->offered_rate), 1e-15, 1.0 - 1e-15);
        ll += r->accept ? std::log(p) : std::log(1.0 - p);
    }
    return ll;
}

template <typename Rows>
inline double null_log_likelihood(const Rows& rows) {
    double mean = 0.0;
    double n = 0.0;
    for (const auto& r : rows) {
        mean += r->accept;
        n += 1.0;
    }
    if (n == 0.0) throw std::invalid_argument("null_log_likelihood: no rows");
    mean /= n;
    mean = std::clamp(mean, 1e-15, 1.0 - 1e-15);
    double ll = 0.0;
    for (const auto& r : rows) ll += r->accept ? std::log(mean) : std::log(1.0 - mean);
    return ll;
}

/// McFadden pseudo R-squared: 1 - LL_model / LL_null on the same rows.
template <typename Rows>
inline double mcfadden_pseudo_r2(const PriceResponse& model, const Rows& rows) {
    const double ll = log_likelihood(model, rows);
    const double ll0 = null_log_likelihood(rows);
    return 1.0 - ll / ll0;
}

// ---------------------------------------------------------------------------
// Logistic regression (IRLS)
// ---------------------------------------------------------------------------

class LogisticModel : public PriceResponse {
public:
    LogisticModel() = default;
    LogisticModel(FeatureSpec spec, std::vector<double> coef, double intercept)
        : spec_(spec), coef_(std::move(coef)), intercept_(intercept) {
        if (coef_.size() != spec_.size())
            throw std::invalid_argument("LogisticModel: coefficient count mismatch");
    }

    double predict(const LoanApplication& app, double rate) const override {
        const auto x = spec_.row(app, rate);
        double z = intercept_;
        for (std::size_t j = 0; j < x.size(); ++j) z += coef_[j] * x[j];
        return sigmoid(z);
    }

    std::string id() const override { return id_; }
    void set_id(std::string id) { id_ = std::move(id); }

    const FeatureSpec& spec() const { return spec_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }
    double l2_lambda() const { return l2_lambda_; }
    const std::string& fit_split() const { return fit_split_; }
    const FitDiagnostics& diagnostics() const { return diag_; }

    nlohmann::json to_json() const {
        return {{"format", "credit-pricer/response-v1"},
                {"kind", "logistic"},
                {"id", id_},
                {"interactions", spec_.interactions},
                {"term_indices", spec_.terms},
                {"terms", spec_.names()},
                {"coefficients", coef_},
                {"intercept", intercept_},
                {"l2_lambda", l2_lambda_},
                {"fit_split", fit_split_},
                {"diagnostics", diagnostics_json(diag_)}};
    }

    static LogisticModel from_json(const nlohmann::json& j) {
        FeatureSpec spec;
        spec.terms = j.at("term_indices").get<std::vector<std::size_t>>();
        spec.interactions = j.at("interactions").get<bool>();
        LogisticModel m(spec, j.at("coefficients").get<std::vector<double>>(),
                        j.at("intercept").get<double>());
        m.id_ = j.at("id").get<std::string>();
        m.l2_lambda_ = j.at("l2_lambda").get<double>();
        m.fit_split_ = j.at("fit_split").get<std::string>();
        m.diag_ = diagnostics_from_json(j.at("diagnostics"));
        return m;
    }

    static nlohmann::json diagnostics_json(const FitDiagnostics& d) {
        return {{"log_likelihood", d.log_likelihood},
                {"null_log_likelihood", d.null_log_likelihood},
                {"auc", d.auc},
                {"pseudo_r2", d.pseudo_r2},
                {"iterations", d.iterations},
                {"converged", d.converged}};
    }

    static FitDiagnostics diagnostics_from_json(const nlohmann::json& j) {
        FitDiagnostics d;
        d.log_likelihood = j.at("log_likelihood").get<double>();
        d.null_log_likelihood = j.at("null_log_likelihood").get<double>();
        d.auc = j.at("auc").get<double>();
        d.pseudo_r2 = j.at("pseudo_r2").get<double>();
        d.iterations = j.at("iterations").get<int>();
        d.converged = j.at("converged").get<bool>();
        return d;
    }

    friend LogisticModel fit_logistic(const std::vector<const DatasetRow*>& rows,
                                      const FeatureSpec& spec, double l2_lambda,
                                      const std::string& fit_split, int max_iter, double tol);

private:
    FeatureSpec spec_;
    std::vector<double> coef_;
    double intercept_ = 0.0;
    double l2_lambda_ = 0.0;
    std::string fit_split_ = "custom";
    FitDiagnostics diag_;
    std::string id_ = "logistic";
};

/// Penalized maximum likelihood by Newton-Raphson. The intercept is never
/// penalized. Divergence of any coefficient signals (quasi-)separation.
inline LogisticModel fit_logistic(const std::vector<const DatasetRow*>& rows, const FeatureSpec& spec,
                                  double l2_lambda, const std::string& fit_split = "custom",
                                  int max_iter = 100, double tol = 1e-8) {
    if (l2_lambda < 0.0) throw std::invalid_argument("fit_logistic: l2_lambda must be >= 0");
    const std::size_t n = rows.size();
    const std::size_t k = spec.size();
    std::size_t n_pos = 0;
    for (const auto* r : rows) n_pos += r->accept == 1;
    if (n_pos == 0 || n_pos == n)
        throw std::invalid_argument("fit_logistic: need at least one positive and one negative label");

    Matrix X(n, k + 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = spec.row(rows[i]->app, rows[i]->offered_rate);
        std::copy(x.begin(), x.end(), X.row(i));
        X(i, k) = 1.0;  // intercept column
        y[i] = rows[i]->accept;
    }

    std::vector<double> beta(k + 1, 0.0);
    FitDiagnostics diag;
    for (int it = 0; it < max_iter; ++it) {
        diag.iterations = it + 1;
        std::vector<double> p(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0.0;
            const double* xi = X.row(i);
            for (std::size_t j = 0; j <= k; ++j) z += beta[j] * xi[j];
            p[i] = sigmoid(z);
            w[i] = p[i] * (1.0 - p[i]);
        }
        std::vector<double> g(k + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double resid = y[i] - p[i];
            const double* xi = X.row(i);
            for (std::size_t j = 0; j <= k; ++j) g[j] += resid * xi[j];
        }
        for (std::size_t j = 0; j < k; ++j) g[j] -= l2_lambda * beta[j];
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax < tol) {
            diag.converged = true;
            break;
        }
        Matrix H(k + 1, k + 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = X.row(i);
            const double wi = w[i];
            for (std::size_t a = 0; a <= k; ++a) {
                const double waxa = wi * xi[a];
                double* hrow = H.row(a);
                for (std::size_t b = a; b <= k; ++b) hrow[b] += waxa * xi[b];
            }
        }
        for (std::size_t a = 0; a <= k; ++a)
            for (std::size_t b = 0; b < a; ++b) H(a, b) = H(b, a);
        for (std::size_t j = 0; j < k; ++j) H(j, j) += l2_lambda;
        std::vector<double> step;
        try {
            step = solve_linear(H, g);
        } catch (const std::runtime_error&) {
            throw std::runtime_error(
                "fit_logistic: rank-deficient design matrix; drop collinear terms");
        }
        for (std::size_t j = 0; j <= k; ++j) beta[j] += step[j];
        for (std::size_t j = 0; j < k; ++j) {
            if (!std::isfinite(beta[j]) || std::abs(beta[j]) > 50.0)
                throw std::runtime_error(
                    "fit_logistic: coefficients diverged (separation?); consider l2_lambda > 0");
        }
    }

    LogisticModel m(spec, std::vector<double>(beta.begin(), beta.begin() + k), beta[k]);
    m.l2_lambda_ = l2_lambda;
    m.fit_split_ = fit_split;
    m.id_ = spec.interactions ? "fdpe" : (l2_lambda > 0.0 ? "logistic-l2" : "logistic");
    diag.log_likelihood = log_likelihood(m, rows);
    diag.null_log_likelihood = null_log_likelihood(rows);
    diag.pseudo_r2 = 1.0 - diag.log_likelihood / diag.null_log_likelihood;
    diag.auc = auc(m, rows);
    m.diag_ = diag;
    return m;
}

inline LogisticModel fit_logistic(const Dataset& ds, Split split, const FeatureSpec& spec,
                                  double l2_lambda) {
    return fit_logistic(ds.split_rows(split), spec, l2_lambda, split_name(split));
}

// ---------------------------------------------------------------------------
// Neural response model
// ---------------------------------------------------------------------------

struct NeuralResponseConfig {
    std::vector<std::size_t> hidden = {32, 32};
    int epochs = 40;
    int batch_size = 512;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int patience = 5;  // early stop on validation loss
    std::uint64_t seed = 333;
};

class NeuralResponseModel : public PriceResponse {
public:
    NeuralResponseModel() = default;
    NeuralResponseModel(Network net, MinMaxScaler scaler) : net_(std::move(net)), scaler_(std::move(scaler)) {}

    double predict(const LoanApplication& app, double rate) const override {
        std::vector<double> x(state_encoding::kDim + 1);
        state_encoding::encode_into(app, x.data());
        x[state_encoding::kDim] = rate;
        scaler_.transform_row(x);
        return sigmoid(net_.forward(std::span<const double>(x))[0]);
    }

    std::string id() const override { return "neural"; }
    const Network& network() const { return net_; }
    const std::string& fit_split() const { return fit_split_; }
    const FitDiagnostics& diagnostics() const { return diag_; }

    nlohmann::json to_json() const {
        return {{"format", "credit-pricer/response-v1"},
                {"kind", "neural"},
                {"id", id()},
                {"network", net_.to_json()},
                {"scaler", scaler_.to_json()},
                {"fit_split", fit_split_},
                {"diagnostics", LogisticModel::diagnostics_json(diag_)}};
    }

    static NeuralResponseModel from_json(const nlohmann::json& j) {
        NeuralResponseModel m(Network::from_json(j.at("network")),
                              MinMaxScaler::from_json(j.at("scaler")));
        m.fit_split_ = j.at("fit_split").get<std::string>();
        m.diag_ = LogisticModel::diagnostics_from_json(j.at("diagnostics"));
        return m;
    }

    friend NeuralResponseModel fit_neural_response(const std::vector<const DatasetRow*>& train_rows,
                                                   const std::vector<const DatasetRow*>& val_rows,
                                                   const NeuralResponseConfig& cfg,
                                                   const std::string& fit_split);

private:
    Network net_;
    MinMaxScaler scaler_;
    std::string fit_split_ = "custom";
    FitDiagnostics diag_;
};

/// Binary cross entropy on the logit output, Adam updates, early stopping on
/// the validation loss. Bitwise reproducible for a fixed seed.
inline NeuralResponseModel fit_neural_response(const std::vector<const DatasetRow*>& train_rows,
                                               const std::vector<const DatasetRow*>& val_rows,
                                               const NeuralResponseConfig& cfg,
                                               const std::string& fit_split = "custom") {
    if (train_rows.size() < 2) throw std::invalid_argument("fit_neural_response: too few rows");
    const std::size_t dim = state_encoding::kDim + 1;
    auto build = [&](const std::vector<const DatasetRow*>& rows, Matrix& X, std::vector<double>& y) {
        X = Matrix(rows.size(), dim);
        y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            state_encoding::encode_into(rows[i]->app, X.row(i));
            X(i, dim - 1) = rows[i]->offered_rate;
            y[i] = rows[i]->accept;
        }
    };
    Matrix Xtr;
    std::vector<double> ytr;
    build(train_rows, Xtr, ytr);
    MinMaxScaler scaler(0.0, 1.0);
    scaler.fit(Xtr);
    Xtr = scaler.transform(std::move(Xtr));

    Matrix Xva;
    std::vector<double> yva;
    if (!val_rows.empty()) {
        build(val_rows, Xva, yva);
        Xva = scaler.transform(std::move(Xva));
    }

    Rng init_rng = Rng(cfg.seed).stream(11);
    Network net = Network::make_mlp(dim, cfg.hidden, 1, Activation::relu, Activation::identity, 0.0,
                                    init_rng);
    AdamState opt = AdamState::for_network(net, cfg.learning_rate, cfg.weight_decay);
    Rng shuffle_rng = Rng(cfg.seed).stream(12);

    auto val_loss = [&]() {
        if (yva.empty()) return 0.0;
        const Matrix z = net.forward(Xva);
        double loss = 0.0;
        for (std::size_t i = 0; i < yva.size(); ++i) {
            const double zi = z(i, 0);
            loss += std::max(zi, 0.0) - yva[i] * zi + std::log1p(std::exp(-std::abs(zi)));
        }
        return loss / static_cast<double>(yva.size());
    };

    Network best = net;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::size_t> order(train_rows.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Matrix bX(end - start, dim);
            std::vector<double> by(end - start);
            for (std::size_t i = start; i < end; ++i) {
                std::copy(Xtr.row(order[i]), Xtr.row(order[i]) + dim, bX.row(i - start));
                by[i - start] = ytr[order[i]];
            }
            ForwardCache cache;
            const Matrix z = net.forward(bX, true, nullptr, &cache);
            Matrix dz(z.rows, 1);
            const double inv_n = 1.0 / static_cast<double>(z.rows);
            for (std::size_t i = 0; i < z.rows; ++i) dz(i, 0) = (sigmoid(z(i, 0)) - by[i]) * inv_n;
            if (!all_finite(dz)) throw std::runtime_error("fit_neural_response: non-finite loss gradient");
            adam_step(net, net.backward(cache, dz), opt);
        }
        if (!yva.empty()) {
            const double vl = val_loss();
            if (vl < best_val - 1e-9) {
                best_val = vl;
                best = net;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    if (!yva.empty()) net = best;

    NeuralResponseModel m(std::move(net), std::move(scaler));
    m.fit_split_ = fit_split;
    FitDiagnostics diag;
    diag.log_likelihood = log_likelihood(m, train_rows);
    diag.null_log_likelihood = null_log_likelihood(train_rows);
    diag.pseudo_r2 = 1.0 - diag.log_likelihood / diag.null_log_likelihood;
    diag.auc = auc(m, train_rows);
    diag.converged = true;
    m.diag_ = diag;
    return m;
}

inline NeuralResponseModel fit_neural_response(const Dataset& ds, const NeuralResponseConfig& cfg) {
    return fit_neural_response(ds.split_rows(Split::train), ds.split_rows(Split::val), cfg, "train");
}

// ---------------------------------------------------------------------------
// Polymorphic load
// ---------------------------------------------------------------------------

inline std::unique_ptr<PriceResponse> response_from_json(const nlohmann::json& j) {
    if (j.at("format").get<std::string>() != "credit-pricer/response-v1")
        throw std::invalid_argument("response_from_json: unknown format");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "logistic") return std::make_unique<LogisticModel>(LogisticModel::from_json(j));
    if (kind == "neural") return std::make_unique<NeuralResponseModel>(NeuralResponseModel::from_json(j));
    throw std::invalid_argument("response_from_json: unknown kind '" + kind + "'");
}

}  // namespace pricer
