#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pricer/nn.hpp"

using namespace pricer;

namespace {

Network identity_net(std::size_t dim, Activation act) {
    DenseLayer l;
    l.weights = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weights(i, i) = 1.0;
    l.biases.assign(dim, 0.0);
    l.activation = act;
    return Network({l});
}

Network random_net(Rng& rng, std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
                   Activation hidden_act = Activation::tanh_) {
    return Network::make_mlp(in, hidden, out, hidden_act, Activation::identity, 0.0, rng);
}

}  // namespace

TEST_CASE("forward: identity layer reproduces its input") {
    Network net = identity_net(2, Activation::identity);
    const auto y = net.forward(std::vector<double>{1.0, 2.0});
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(2.0));
}

TEST_CASE("forward: relu clips negatives") {
    Network net = identity_net(2, Activation::relu);
    const auto y = net.forward(std::vector<double>{-3.0, 5.0});
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 5.0);
}

TEST_CASE("forward: matches a hand-rolled trace of the same weights") {
    Rng rng(17);
    Network net = random_net(rng, 3, {4}, 2);
    const std::vector<double> x = {0.3, -1.2, 0.7};
    const auto y = net.forward(x);

    // straight-line recomputation with explicit loops over the stored weights
    const auto& l0 = net.layers()[0];
    const auto& l1 = net.layers()[1];
    std::vector<double> h(4, 0.0);
    for (std::size_t o = 0; o < 4; ++o) {
        double z = l0.biases[o];
        for (std::size_t j = 0; j < 3; ++j) z += l0.weights(o, j) * x[j];
        h[o] = std::tanh(z);
    }
    for (std::size_t o = 0; o < 2; ++o) {
        double z = l1.biases[o];
        for (std::size_t j = 0; j < 4; ++j) z += l1.weights(o, j) * h[j];
        CHECK(y[o] == doctest::Approx(z).epsilon(1e-12));
    }
}

TEST_CASE("forward: dimension mismatch and non-finite input are hard errors") {
    Rng rng(3);
    Network net = random_net(rng, 3, {4}, 1);
    CHECK_THROWS_AS((void)net.forward(std::vector<double>{1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS((void)net.forward(std::vector<double>{1.0, std::nan(""), 0.0}),
                    std::runtime_error);
}

TEST_CASE("backward: scalar linear net has gradient equal to its input") {
    DenseLayer l;
    l.weights = Matrix(1, 1);
    l.weights(0, 0) = 0.5;
    l.biases = {0.0};
    Network net({l});
    Matrix X(1, 1);
    X(0, 0) = 2.0;
    ForwardCache cache;
    (void)net.forward(X, false, nullptr, &cache);
    Matrix dY(1, 1);
    dY(0, 0) = 1.0;  // loss = f
    const auto g = net.backward(cache, dY);
    CHECK(g.d_weights[0](0, 0) == doctest::Approx(2.0));
    CHECK(g.d_biases[0][0] == doctest::Approx(1.0));
}

TEST_CASE("backward: zero upstream gradient zeroes every parameter gradient") {
    Rng rng(5);
    Network net = random_net(rng, 4, {5, 3}, 2);
    Matrix X(2, 4);
    for (auto& v : X.data) v = rng.normal();
    ForwardCache cache;
    (void)net.forward(X, false, nullptr, &cache);
    const auto g = net.backward(cache, Matrix(2, 2, 0.0));
    for (const auto& dw : g.d_weights)
        for (double v : dw.data) CHECK(v == 0.0);
}

TEST_CASE("backward: requires a cached forward pass") {
    Rng rng(5);
    Network net = random_net(rng, 2, {3}, 1);
    ForwardCache cache;
    CHECK_THROWS_AS((void)net.backward(cache, Matrix(1, 1, 1.0)), std::runtime_error);
}

TEST_CASE("backward: matches central finite differences on 100 random nets") {
    // loss = c . f(x) for a fixed random direction c
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        const std::size_t in = 1 + rng.below(5);
        const std::size_t out = 1 + rng.below(3);
        std::vector<std::size_t> hidden;
        const std::size_t depth = 1 + rng.below(2);
        for (std::size_t k = 0; k < depth; ++k) hidden.push_back(2 + rng.below(6));
        const Activation act = seed % 2 ? Activation::tanh_ : Activation::relu;
        Network net = random_net(rng, in, hidden, out, act);

        Matrix X(1, in);
        for (auto& v : X.data) v = rng.normal();
        std::vector<double> c(out);
        for (auto& v : c) v = rng.normal();

        ForwardCache cache;
        (void)net.forward(X, false, nullptr, &cache);
        Matrix dY(1, out);
        for (std::size_t j = 0; j < out; ++j) dY(0, j) = c[j];
        const auto g = net.backward(cache, dY);

        auto loss = [&]() {
            const Matrix y = net.forward(X);
            double s = 0.0;
            for (std::size_t j = 0; j < out; ++j) s += c[j] * y(0, j);
            return s;
        };
        const double h = 1e-5;
        for (std::size_t k = 0; k < net.layers().size(); ++k) {
            auto& layer = net.layers()[k];
            for (std::size_t idx = 0; idx < layer.weights.data.size(); ++idx) {
                double& p = layer.weights.data[idx];
                const double saved = p;
                p = saved + h;
                const double up = loss();
                p = saved - h;
                const double dn = loss();
                p = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = g.d_weights[k].data[idx];
                CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(an)));
            }
            for (std::size_t idx = 0; idx < layer.biases.size(); ++idx) {
                double& p = layer.biases[idx];
                const double saved = p;
                p = saved + h;
                const double up = loss();
                p = saved - h;
                const double dn = loss();
                p = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = g.d_biases[k][idx];
                CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(an)));
            }
        }
    }
}

TEST_CASE("backward: input gradient matches finite differences") {
    Rng rng(23);
    Network net = random_net(rng, 3, {6}, 1);
    Matrix X(1, 3);
    for (auto& v : X.data) v = rng.normal();
    ForwardCache cache;
    (void)net.forward(X, false, nullptr, &cache);
    const auto g = net.backward(cache, Matrix(1, 1, 1.0));
    for (std::size_t j = 0; j < 3; ++j) {
        auto f = [&](double xj) {
            Matrix Xp = X;
            Xp(0, j) = xj;
            return net.forward(Xp)(0, 0);
        };
        const double fd = oracle::central_difference(f, X(0, j), 1e-6);
        CHECK(g.d_input(0, j) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("dropout: train-mode mask scales kept units by 1/keep and zeroes gradients of dropped ones") {
    DenseLayer l;
    const std::size_t dim = 64;
    l.weights = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weights(i, i) = 1.0;
    l.biases.assign(dim, 0.0);
    l.dropout_rate = 0.5;
    Network net({l});

    Matrix X(1, dim, 1.0);
    Rng rng(99);
    ForwardCache cache;
    const Matrix y = net.forward(X, true, &rng, &cache);
    std::size_t kept = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double v = y(0, j);
        CHECK((v == 0.0 || v == doctest::Approx(2.0)));
        kept += v != 0.0;
    }
    CHECK(kept > 10);
    CHECK(kept < dim);

    const auto g = net.backward(cache, Matrix(1, dim, 1.0));
    for (std::size_t j = 0; j < dim; ++j) {
        if (y(0, j) == 0.0) {
            CHECK(g.d_biases[0][j] == 0.0);
        } else {
            CHECK(g.d_biases[0][j] == doctest::Approx(2.0));
        }
    }

    // inference is deterministic: no mask applied
    const Matrix y_eval = net.forward(X, false);
    for (std::size_t j = 0; j < dim; ++j) CHECK(y_eval(0, j) == doctest::Approx(1.0));
}

TEST_CASE("determinism: identical seeds give bitwise-identical traces") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Network net = Network::make_mlp(3, {8, 8}, 2, Activation::relu, Activation::identity, 0.2, rng);
        AdamState st = AdamState::for_network(net, 1e-3, 1e-4);
        Rng drop(seed + 1);
        std::vector<double> trace;
        Matrix X(4, 3);
        Rng data(seed + 2);
        for (auto& v : X.data) v = data.normal();
        for (int it = 0; it < 5; ++it) {
            ForwardCache cache;
            Matrix y = net.forward(X, true, &drop, &cache);
            Matrix dY(y.rows, y.cols, 1.0);
            adam_step(net, net.backward(cache, dY), st);
            for (const auto& l : net.layers())
                for (double w : l.weights.data) trace.push_back(w);
        }
        return trace;
    };
    const auto a = run(7);
    const auto b = run(7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam: zero gradient with zero weight decay leaves parameters unchanged") {
    Rng rng(11);
    Network net = random_net(rng, 2, {3}, 1);
    const auto before = net.layers()[0].weights.data;
    AdamState st = AdamState::for_network(net, 1e-2, 0.0);
    Gradients g;
    for (const auto& l : net.layers()) {
        g.d_weights.emplace_back(l.out_dim(), l.in_dim(), 0.0);
        g.d_biases.emplace_back(l.out_dim(), 0.0);
    }
    adam_step(net, g, st);
    CHECK(st.step == 1);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(net.layers()[0].weights.data[i] == before[i]);
}

TEST_CASE("adam: first step moves each parameter by about -lr * sign(gradient)") {
    Rng rng(12);
    Network net = random_net(rng, 2, {3}, 1);
    const Network saved = net;
    AdamState st = AdamState::for_network(net, 1e-2, 0.0);
    Gradients g;
    Rng grng(13);
    for (const auto& l : net.layers()) {
        Matrix gw(l.out_dim(), l.in_dim());
        for (auto& v : gw.data) v = grng.normal();
        g.d_weights.push_back(std::move(gw));
        g.d_biases.emplace_back(l.out_dim(), 0.5);
    }
    adam_step(net, g, st);
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
        for (std::size_t i = 0; i < net.layers()[k].weights.data.size(); ++i) {
            const double delta = net.layers()[k].weights.data[i] - saved.layers()[k].weights.data[i];
            const double grad = g.d_weights[k].data[i];
            CHECK(delta == doctest::Approx(-1e-2 * grad / (std::abs(grad) + 1e-8)).epsilon(1e-9));
        }
    }
}

TEST_CASE("adam: decoupled decay shrinks a zero-gradient parameter by exactly (1 - lr*wd)") {
    Rng rng(14);
    Network net = random_net(rng, 2, {}, 1);
    const double w0 = net.layers()[0].weights(0, 0);
    AdamState st = AdamState::for_network(net, 1e-2, 1e-4);
    Gradients g;
    g.d_weights.emplace_back(1, 2, 0.0);
    g.d_biases.emplace_back(1, 0.0);
    adam_step(net, g, st);
    CHECK(net.layers()[0].weights(0, 0) == doctest::Approx(w0 * (1.0 - 1e-2 * 1e-4)).epsilon(1e-15));
}

TEST_CASE("adam: non-finite gradients are rejected") {
    Rng rng(15);
    Network net = random_net(rng, 2, {}, 1);
    AdamState st = AdamState::for_network(net, 1e-2, 0.0);
    Gradients g;
    g.d_weights.emplace_back(1, 2, std::numeric_limits<double>::infinity());
    g.d_biases.emplace_back(1, 0.0);
    CHECK_THROWS_AS(adam_step(net, g, st), std::runtime_error);
}

TEST_CASE("scaler: maps min/max to the target range") {
    Matrix data(3, 1);
    data(0, 0) = 2.0;
    data(1, 0) = 4.0;
    data(2, 0) = 6.0;
    MinMaxScaler sc(0.0, 1.0);
    sc.fit(data);
    const Matrix t = sc.transform(data);
    CHECK(t(0, 0) == doctest::Approx(0.0));
    CHECK(t(1, 0) == doctest::Approx(0.5));
    CHECK(t(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("scaler: round trip is the identity within 1e-9") {
    Rng rng(21);
    Matrix data(50, 4);
    for (auto& v : data.data) v = rng.uniform(-30.0, 90.0);
    MinMaxScaler sc(-1.0, 1.0);
    sc.fit(data);
    const Matrix back = sc.inverse_transform(sc.transform(data));
    for (std::size_t i = 0; i < data.data.size(); ++i)
        CHECK(std::abs(back.data[i] - data.data[i]) <= 1e-9);
}

TEST_CASE("scaler: constant columns map to the range midpoint and invert to the constant") {
    Matrix data(2, 1, 5.0);
    MinMaxScaler sc(0.0, 1.0);
    sc.fit(data);
    const Matrix t = sc.transform(data);
    CHECK(t(0, 0) == doctest::Approx(0.5));
    CHECK(t(1, 0) == doctest::Approx(0.5));
    const Matrix back = sc.inverse_transform(t);
    CHECK(back(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("scaler: transform before fit throws") {
    MinMaxScaler sc(0.0, 1.0);
    std::vector<double> row = {1.0};
    CHECK_THROWS_AS(sc.transform_row(row), std::runtime_error);
}

TEST_CASE("checkpoint: network and optimizer state round trip exactly") {
    Rng rng(31);
    Network net = Network::make_mlp(4, {8}, 2, Activation::relu, Activation::identity, 0.1, rng);
    AdamState st = AdamState::for_network(net, 3e-4, 1e-4);
    // push one update through so the state is non-trivial
    Matrix X(2, 4);
    for (auto& v : X.data) v = rng.normal();
    ForwardCache cache;
    Matrix y = net.forward(X, false, nullptr, &cache);
    adam_step(net, net.backward(cache, Matrix(y.rows, y.cols, 0.3)), st);

    const Network loaded = Network::from_json(net.to_json());
    const AdamState lst = AdamState::from_json(st.to_json(), loaded);
    REQUIRE(loaded.layers().size() == net.layers().size());
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
        CHECK(loaded.layers()[k].weights.data == net.layers()[k].weights.data);
        CHECK(loaded.layers()[k].biases == net.layers()[k].biases);
        CHECK(loaded.layers()[k].dropout_rate == net.layers()[k].dropout_rate);
        CHECK(lst.m_weights[k].data == st.m_weights[k].data);
    }
    CHECK(lst.step == st.step);
    const Matrix ya = net.forward(X);
    const Matrix yb = loaded.forward(X);
    for (std::size_t i = 0; i < ya.data.size(); ++i) CHECK(ya.data[i] == yb.data[i]);
}

TEST_CASE("network: mismatched layer dimensions are rejected at construction") {
    DenseLayer a;
    a.weights = Matrix(3, 2);
    a.biases.assign(3, 0.0);
    DenseLayer b;
    b.weights = Matrix(1, 4);
    b.biases.assign(1, 0.0);
    CHECK_THROWS_AS(Network({a, b}), std::invalid_argument);
}
