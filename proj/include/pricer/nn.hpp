#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/matrix.hpp"
#include "pricer/rng.hpp"

namespace pricer {

enum class Activation { identity, relu, tanh_ };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh_: return "tanh";
    }
    throw std::invalid_argument("activation_name: unknown activation");
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

/// One fully-connected layer: y = dropout(act(W x + b)).
/// Dropout uses inverted scaling at train time, so inference needs no rescale.
struct DenseLayer {
    Matrix weights;               // out x in
    std::vector<double> biases;   // out
    Activation activation = Activation::identity;
    double dropout_rate = 0.0;

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }
};

/// Activations cached by a forward pass, consumed by backward.
struct ForwardCache {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> activations;  // post-activation, pre-dropout
    std::vector<Matrix> drop_masks;   // empty when dropout was inactive
    bool valid = false;
};

/// Per-parameter gradients plus the gradient w.r.t. the network input.
struct Gradients {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_biases;
    Matrix d_input;
};

class Network {
public:
    Network() = default;
    explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
        for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
            if (layers_[k].out_dim() != layers_[k + 1].in_dim())
                throw std::invalid_argument("Network: layer dimensions do not chain");
        }
    }

    /// MLP with Glorot-uniform weights, zero biases. `dropout` applies to the
    /// hidden activations only; the output layer never drops.
    static Network make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                            Activation hidden_act, Activation out_act, double dropout, Rng& rng) {
        std::vector<DenseLayer> layers;
        std::size_t prev = in;
        for (std::size_t h : hidden) {
            layers.push_back(glorot_layer(prev, h, hidden_act, dropout, rng));
            prev = h;
        }
        layers.push_back(glorot_layer(prev, out, out_act, 0.0, rng));
        return Network(std::move(layers));
    }

    std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.data.size() + l.biases.size();
        return n;
    }

    /// Batched forward. Rows of X are samples. With training=true, dropout is
    /// applied and `rng` must be non-null when any layer has a positive rate.
    Matrix forward(const Matrix& X, bool training = false, Rng* rng = nullptr,
                   ForwardCache* cache = nullptr) const {
        if (layers_.empty()) throw std::runtime_error("Network::forward: empty network");
        if (X.cols != input_dim())
            throw std::invalid_argument("Network::forward: input dimension mismatch");
        if (!all_finite(X)) throw std::runtime_error("Network::forward: non-finite input");
        if (cache) {
            cache->inputs.clear();
            cache->activations.clear();
            cache->drop_masks.clear();
            cache->valid = false;
        }
        Matrix cur = X;
        for (const auto& layer : layers_) {
            if (cache) cache->inputs.push_back(cur);
            Matrix z = matmul_nt(cur, layer.weights);
            for (std::size_t i = 0; i < z.rows; ++i) {
                double* zr = z.row(i);
                for (std::size_t j = 0; j < z.cols; ++j) zr[j] += layer.biases[j];
            }
            apply_activation(layer.activation, z);
            if (cache) cache->activations.push_back(z);
            Matrix mask;
            if (training && layer.dropout_rate > 0.0) {
                if (!rng) throw std::invalid_argument("Network::forward: dropout requires an rng");
                const double keep = 1.0 - layer.dropout_rate;
                mask = Matrix(z.rows, z.cols);
                for (std::size_t i = 0; i < mask.data.size(); ++i)
                    mask.data[i] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i];
            }
            if (cache) cache->drop_masks.push_back(std::move(mask));
            cur = std::move(z);
        }
        if (cache) cache->valid = true;
        return cur;
    }

    std::vector<double> forward(std::span<const double> x, bool training = false,
                                Rng* rng = nullptr) const {
        Matrix X(1, x.size());
        std::copy(x.begin(), x.end(), X.data.begin());
        Matrix Y = forward(X, training, rng);
        return Y.data;
    }

    /// Reverse pass from cached activations. d_output is the loss gradient at
    /// the network output, one row per sample.
    Gradients backward(const ForwardCache& cache, const Matrix& d_output) const {
        if (!cache.valid || cache.inputs.size() != layers_.size())
            throw std::runtime_error("Network::backward: no cached forward pass");
        if (d_output.cols != output_dim() || d_output.rows != cache.inputs.front().rows)
            throw std::invalid_argument("Network::backward: gradient shape mismatch");
        Gradients g;
        g.d_weights.resize(layers_.size());
        g.d_biases.resize(layers_.size());
        Matrix delta = d_output;
        for (std::size_t k = layers_.size(); k-- > 0;) {
            const auto& layer = layers_[k];
            const Matrix& mask = cache.drop_masks[k];
            if (mask.rows > 0)
                for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] *= mask.data[i];
            const Matrix& act = cache.activations[k];
            switch (layer.activation) {
                case Activation::identity: break;
                case Activation::relu:
                    for (std::size_t i = 0; i < delta.data.size(); ++i)
                        if (act.data[i] <= 0.0) delta.data[i] = 0.0;
                    break;
                case Activation::tanh_:
                    for (std::size_t i = 0; i < delta.data.size(); ++i)
                        delta.data[i] *= 1.0 - act.data[i] * act.data[i];
                    break;
            }
            g.d_weights[k] = matmul_tn(delta, cache.inputs[k]);
            auto& db = g.d_biases[k];
            db.assign(layer.out_dim(), 0.0);
            for (std::size_t i = 0; i < delta.rows; ++i) {
                const double* dr = delta.row(i);
                for (std::size_t j = 0; j < delta.cols; ++j) db[j] += dr[j];
            }
            delta = matmul_nn(delta, layer.weights);
        }
        g.d_input = std::move(delta);
        return g;
    }

    void assert_finite(const std::string& where) const {
        for (const auto& l : layers_) {
            if (!all_finite(l.weights) || !all_finite(std::span<const double>(l.biases)))
                throw std::runtime_error("non-finite network parameter detected in " + where);
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : layers_) {
            layers.push_back({{"in", l.in_dim()},
                              {"out", l.out_dim()},
                              {"activation", activation_name(l.activation)},
                              {"dropout_rate", l.dropout_rate},
                              {"weights", l.weights.data},
                              {"biases", l.biases}});
        }
        return {{"format", "credit-pricer/net-v1"}, {"layers", layers}};
    }

    static Network from_json(const nlohmann::json& j) {
        if (j.at("format").get<std::string>() != "credit-pricer/net-v1")
            throw std::invalid_argument("Network::from_json: unknown format");
        std::vector<DenseLayer> layers;
        for (const auto& lj : j.at("layers")) {
            DenseLayer l;
            const auto in = lj.at("in").get<std::size_t>();
            const auto out = lj.at("out").get<std::size_t>();
            l.weights = Matrix(out, in);
            l.weights.data = lj.at("weights").get<std::vector<double>>();
            if (l.weights.data.size() != in * out)
                throw std::invalid_argument("Network::from_json: weight size mismatch");
            l.biases = lj.at("biases").get<std::vector<double>>();
            if (l.biases.size() != out)
                throw std::invalid_argument("Network::from_json: bias size mismatch");
            l.activation = activation_from_name(lj.at("activation").get<std::string>());
            l.dropout_rate = lj.at("dropout_rate").get<double>();
            layers.push_back(std::move(l));
        }
        return Network(std::move(layers));
    }

private:
    static DenseLayer glorot_layer(std::size_t in, std::size_t out, Activation act, double dropout,
                                   Rng& rng) {
        DenseLayer l;
        l.weights = Matrix(out, in);
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : l.weights.data) w = rng.uniform(-bound, bound);
        l.biases.assign(out, 0.0);
        l.activation = act;
        l.dropout_rate = dropout;
        return l;
    }

    static void apply_activation(Activation a, Matrix& z) {
        switch (a) {
            case Activation::identity: return;
            case Activation::relu:
                for (double& v : z.data) v = v > 0.0 ? v : 0.0;
                return;
            case Activation::tanh_:
                for (double& v : z.data) v = std::tanh(v);
                return;
        }
    }

    std::vector<DenseLayer> layers_;
};

/// Adam with decoupled weight decay. Accumulators shape-match the network the
/// state was created for; the step counter increases once per update.
struct AdamState {
    std::vector<Matrix> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;

    static AdamState for_network(const Network& net, double lr, double wd = 0.0) {
        AdamState s;
        s.learning_rate = lr;
        s.weight_decay = wd;
        for (const auto& l : net.layers()) {
            s.m_weights.emplace_back(l.out_dim(), l.in_dim());
            s.v_weights.emplace_back(l.out_dim(), l.in_dim());
            s.m_biases.emplace_back(l.out_dim(), 0.0);
            s.v_biases.emplace_back(l.out_dim(), 0.0);
        }
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array();
        for (const auto& m : m_weights) mw.push_back(m.data);
        for (const auto& v : v_weights) vw.push_back(v.data);
        return {{"format", "credit-pricer/adam-v1"}, {"step", step},
                {"learning_rate", learning_rate}, {"beta1", beta1},
                {"beta2", beta2},                 {"epsilon", epsilon},
                {"weight_decay", weight_decay},   {"m_weights", mw},
                {"v_weights", vw},                {"m_biases", m_biases},
                {"v_biases", v_biases}};
    }

    static AdamState from_json(const nlohmann::json& j, const Network& net) {
        if (j.at("format").get<std::string>() != "credit-pricer/adam-v1")
            throw std::invalid_argument("AdamState::from_json: unknown format");
        AdamState s = for_network(net, j.at("learning_rate").get<double>(),
                                  j.at("weight_decay").get<double>());
        s.step = j.at("step").get<long>();
        s.beta1 = j.at("beta1").get<double>();
        s.beta2 = j.at("beta2").get<double>();
        s.epsilon = j.at("epsilon").get<double>();
        const auto mw = j.at("m_weights");
        const auto vw = j.at("v_weights");
        const auto mb = j.at("m_biases").get<std::vector<std::vector<double>>>();
        const auto vb = j.at("v_biases").get<std::vector<std::vector<double>>>();
        for (std::size_t k = 0; k < s.m_weights.size(); ++k) {
            s.m_weights[k].data = mw.at(k).get<std::vector<double>>();
            s.v_weights[k].data = vw.at(k).get<std::vector<double>>();
            s.m_biases[k] = mb.at(k);
            s.v_biases[k] = vb.at(k);
        }
        return s;
    }
};

inline void adam_step(Network& net, const Gradients& grads, AdamState& st) {
    auto& layers = net.layers();
    if (grads.d_weights.size() != layers.size())
        throw std::invalid_argument("adam_step: gradient layer count mismatch");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& l = layers[k];
        const Matrix& gw = grads.d_weights[k];
        if (!gw.same_shape(l.weights) || grads.d_biases[k].size() != l.biases.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        if (!all_finite(gw) || !all_finite(std::span<const double>(grads.d_biases[k])))
            throw std::runtime_error("adam_step: non-finite gradient");
        auto update = [&](double& p, double g, double& m, double& v) {
            m = st.beta1 * m + (1.0 - st.beta1) * g;
            v = st.beta2 * v + (1.0 - st.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p -= st.learning_rate * st.weight_decay * p;
            p -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
        };
        for (std::size_t i = 0; i < l.weights.data.size(); ++i)
            update(l.weights.data[i], gw.data[i], st.m_weights[k].data[i], st.v_weights[k].data[i]);
        for (std::size_t i = 0; i < l.biases.size(); ++i)
            update(l.biases[i], grads.d_biases[k][i], st.m_biases[k][i], st.v_biases[k][i]);
    }
    net.assert_finite("adam_step");
}

/// Scalar Adam for single learnable values (entropy temperature).
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    long step = 0;
    double learning_rate;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

    explicit ScalarAdam(double lr) : learning_rate(lr) {}

    double apply(double param, double grad) {
        step += 1;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
        const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
        return param - learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
};

/// Per-column min-max scaler. Constant columns transform to the midpoint of
/// the target range and invert back to the constant.
class MinMaxScaler {
public:
    MinMaxScaler() = default;
    MinMaxScaler(double lo, double hi) : lo_(lo), hi_(hi) {}

    void fit(const Matrix& data) {
        if (data.rows == 0 || data.cols == 0)
            throw std::invalid_argument("MinMaxScaler::fit: empty data");
        mins_.assign(data.cols, std::numeric_limits<double>::infinity());
        maxs_.assign(data.cols, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < data.rows; ++i) {
            const double* r = data.row(i);
            for (std::size_t j = 0; j < data.cols; ++j) {
                mins_[j] = std::min(mins_[j], r[j]);
                maxs_[j] = std::max(maxs_[j], r[j]);
            }
        }
        fitted_ = true;
    }

    bool fitted() const { return fitted_; }
    std::size_t dim() const { return mins_.size(); }
    double range_low() const { return lo_; }
    double range_high() const { return hi_; }
    const std::vector<double>& mins() const { return mins_; }
    const std::vector<double>& maxs() const { return maxs_; }

    void set_bounds(std::vector<double> mins, std::vector<double> maxs) {
        if (mins.size() != maxs.size()) throw std::invalid_argument("MinMaxScaler: bound size mismatch");
        for (std::size_t j = 0; j < mins.size(); ++j)
            if (maxs[j] < mins[j]) throw std::invalid_argument("MinMaxScaler: max < min");
        mins_ = std::move(mins);
        maxs_ = std::move(maxs);
        fitted_ = true;
    }

    double transform_one(double x, std::size_t j) const {
        check(j);
        if (maxs_[j] == mins_[j]) return 0.5 * (lo_ + hi_);
        return lo_ + (x - mins_[j]) / (maxs_[j] - mins_[j]) * (hi_ - lo_);
    }

    double inverse_one(double y, std::size_t j) const {
        check(j);
        if (maxs_[j] == mins_[j]) return mins_[j];
        return mins_[j] + (y - lo_) / (hi_ - lo_) * (maxs_[j] - mins_[j]);
    }

    void transform_row(std::span<double> row) const {
        if (!fitted_) throw std::runtime_error("MinMaxScaler: transform before fit");
        if (row.size() != mins_.size())
            throw std::invalid_argument("MinMaxScaler::transform: dimension mismatch");
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = transform_one(row[j], j);
    }

    Matrix transform(Matrix data) const {
        for (std::size_t i = 0; i < data.rows; ++i) transform_row(data.row_span(i));
        return data;
    }

    Matrix inverse_transform(Matrix data) const {
        if (data.cols != mins_.size())
            throw std::invalid_argument("MinMaxScaler::inverse_transform: dimension mismatch");
        for (std::size_t i = 0; i < data.rows; ++i) {
            double* r = data.row(i);
            for (std::size_t j = 0; j < data.cols; ++j) r[j] = inverse_one(r[j], j);
        }
        return data;
    }

    nlohmann::json to_json() const {
        return {{"lo", lo_}, {"hi", hi_}, {"mins", mins_}, {"maxs", maxs_}};
    }

    static MinMaxScaler from_json(const nlohmann::json& j) {
        MinMaxScaler s(j.at("lo").get<double>(), j.at("hi").get<double>());
        s.set_bounds(j.at("mins").get<std::vector<double>>(), j.at("maxs").get<std::vector<double>>());
        return s;
    }

private:
    void check(std::size_t j) const {
        if (!fitted_) throw std::runtime_error("MinMaxScaler: transform before fit");
        if (j >= mins_.size()) throw std::invalid_argument("MinMaxScaler: column out of range");
    }

    double lo_ = 0.0, hi_ = 1.0;
    std::vector<double> mins_, maxs_;
    bool fitted_ = false;
};

inline void save_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_json: cannot write " + path);
    f << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_json: cannot open " + path);
    return nlohmann::json::parse(f);
}

}  // namespace pricer
