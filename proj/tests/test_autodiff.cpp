#include <cmath>
#include <limits>
#include <stdexcept>

#include "a2fm/graph.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace a2fm;
using namespace a2fm::testutil;

namespace {
constexpr double kFdStep = 1e-4;
constexpr double kFdTol = 1e-3;
}

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("finite_diff matches the analytic gradient of sum of squares") {
    // The oracle's own sanity check: f(x) = sum x_i^2, grad = 2x.
    Rng rng(7);
    Tensor x = random_tensor({5}, rng);
    auto f = [](const Tensor& t) {
        double s = 0;
        for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
        return s;
    };
    Tensor g = finite_diff(f, x, kFdStep);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(g[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-6));
    }
}

TEST_CASE("relu forward holds the frozen example") {
    Graph g;
    int x = g.input("x", {3});
    int y = g.relu(x);
    g.eval({{"x", Tensor({3}, {-1.0, 0.0, 2.0})}});
    const Tensor& v = g.value(y);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 2.0);
}

TEST_CASE("sum of relu has unit gradient on strictly positive inputs") {
    Graph g;
    int x = g.input("x", {2});
    int y = g.sum_abs(g.relu(x));
    g.eval({{"x", Tensor({2}, {3.0, 5.0})}});
    GradMap grads = g.backward(y, {x});
    CHECK(grads.at(x)[0] == 1.0);
    CHECK(grads.at(x)[1] == 1.0);
}

TEST_CASE("softmax of a constant vector is uniform") {
    Graph g;
    int x = g.input("x", {4});
    int y = g.softmax(x);
    g.eval({{"x", Tensor({4}, 0.0)}});
    for (int i = 0; i < 4; ++i) CHECK(g.value(y)[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy of uniform logits is log K") {
    Graph g;
    int x = g.input("x", {4});
    int y = g.constant(Tensor({4}, {1.0, 0.0, 0.0, 0.0}));
    int loss = g.softmax_xent(x, y);
    g.eval({{"x", Tensor({4}, 0.0)}});
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // d loss / d logits = softmax(logits) - onehot.
    GradMap grads = g.backward(loss, {x});
    CHECK(grads.at(x)[0] == doctest::Approx(-0.75).epsilon(1e-12));
    for (int i = 1; i < 4; ++i) CHECK(grads.at(x)[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("l2 norm, max-abs and sum-abs frozen values and subgradients") {
    Graph g;
    int x = g.input("x", {2});
    int n2 = g.l2_norm(x);
    g.eval({{"x", Tensor({2}, {3.0, 4.0})}});
    CHECK(g.value(n2)[0] == doctest::Approx(5.0).epsilon(1e-12));
    GradMap gn = g.backward(n2, {x});
    CHECK(gn.at(x)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(gn.at(x)[1] == doctest::Approx(0.8).epsilon(1e-12));

    Graph h;
    int z = h.input("z", {3});
    int mx = h.max_abs(z);
    int sa = h.sum_abs(z);
    h.eval({{"z", Tensor({3}, {1.0, -3.0, 2.0})}});
    CHECK(h.value(mx)[0] == 3.0);
    CHECK(h.value(sa)[0] == 6.0);
    GradMap gm = h.backward(mx, {z});
    CHECK(gm.at(z)[0] == 0.0);
    CHECK(gm.at(z)[1] == -1.0);
    CHECK(gm.at(z)[2] == 0.0);
    GradMap gs = h.backward(sa, {z});
    CHECK(gs.at(z)[0] == 1.0);
    CHECK(gs.at(z)[1] == -1.0);
    CHECK(gs.at(z)[2] == 1.0);
}

TEST_CASE("gru cell with zero weights halves the hidden state") {
    // r = z = sigmoid(0) = 1/2, n = tanh(0) = 0, h' = (1-z)*n + z*h = h/2.
    Graph g;
    int x = g.input("x", {3});
    int h = g.input("h", {2});
    int wx = g.constant(Tensor({3, 6}, 0.0));
    int wh = g.constant(Tensor({2, 6}, 0.0));
    int bx = g.constant(Tensor({6}, 0.0));
    int bh = g.constant(Tensor({6}, 0.0));
    int out = g.gru_cell(x, h, wx, wh, bx, bh);
    g.eval({{"x", Tensor({3}, {0.3, -0.4, 0.9})}, {"h", Tensor({2}, {0.6, -1.0})}});
    CHECK(g.value(out)[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(g.value(out)[1] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("conv3d gradients agree with finite differences") {
    Rng rng(11);
    for (auto [pt, pw, ph] : {std::tuple{0, 0, 0}, std::tuple{1, 1, 1}, std::tuple{1, 0, 0}}) {
        Graph g;
        int x = g.input("x", {3, 4, 4, 2});
        int w = g.input("w", {2, 3, 3, 2, 2});
        int b = g.input("b", {2});
        int y = g.conv3d(x, w, b, pt, pw, ph);
        int rw = g.constant(random_tensor({static_cast<int>(shape_numel(g.node_at(y).shape)), 1}, rng));
        int rb = g.constant(Tensor({1}, 0.0));
        int out = g.dense(y, rw, rb);
        Bindings bind{{"x", random_tensor({3, 4, 4, 2}, rng)},
                      {"w", random_tensor({2, 3, 3, 2, 2}, rng)},
                      {"b", random_tensor({2}, rng)}};
        CHECK(fd_check(g, out, {"x", "w", "b"}, {x, w, b}, bind, kFdStep) < kFdTol);
    }
}

TEST_CASE("dense gradients agree with finite differences") {
    Rng rng(12);
    Graph g;
    int x = g.input("x", {2, 3});
    int w = g.input("w", {6, 4});
    int b = g.input("b", {4});
    int y = g.dense(x, w, b);
    int rw = g.constant(random_tensor({4, 1}, rng));
    int rb = g.constant(Tensor({1}, 0.0));
    int out = g.dense(y, rw, rb);
    Bindings bind{{"x", random_tensor({2, 3}, rng)},
                  {"w", random_tensor({6, 4}, rng)},
                  {"b", random_tensor({4}, rng)}};
    CHECK(fd_check(g, out, {"x", "w", "b"}, {x, w, b}, bind, kFdStep) < kFdTol);
}

TEST_CASE("relu gradient agrees with finite differences away from the kink") {
    Rng rng(13);
    Graph g;
    int x = g.input("x", {7});
    int out = g.sum_abs(g.relu(x));
    Bindings bind{{"x", random_tensor_margin({7}, rng)}};
    CHECK(fd_check(g, out, {"x"}, {x}, bind, kFdStep) < kFdTol);
}

TEST_CASE("mean pool gradient agrees with finite differences") {
    Rng rng(14);
    Graph g;
    int x = g.input("x", {4, 4, 2, 3});
    int y = g.mean_pool(x, 2, 2, 2);
    int rw = g.constant(random_tensor({static_cast<int>(shape_numel(g.node_at(y).shape)), 1}, rng));
    int out = g.dense(y, rw, g.constant(Tensor({1}, 0.0)));
    Bindings bind{{"x", random_tensor({4, 4, 2, 3}, rng)}};
    CHECK(fd_check(g, out, {"x"}, {x}, bind, kFdStep) < kFdTol);
}

TEST_CASE("softmax gradient agrees with finite differences") {
    Rng rng(15);
    Graph g;
    int x = g.input("x", {5});
    int y = g.softmax(x);
    int rw = g.constant(random_tensor({5, 1}, rng));
    int out = g.dense(y, rw, g.constant(Tensor({1}, 0.0)));
    Bindings bind{{"x", random_tensor({5}, rng, 2.0)}};
    CHECK(fd_check(g, out, {"x"}, {x}, bind, kFdStep) < kFdTol);
}

TEST_CASE("softmax cross-entropy gradient agrees with finite differences") {
    Rng rng(16);
    Graph g;
    int x = g.input("x", {6});
    int y = g.constant(Tensor({6}, {0.0, 0.0, 1.0, 0.0, 0.0, 0.0}));
    int out = g.softmax_xent(x, y);
    Bindings bind{{"x", random_tensor({6}, rng, 2.0)}};
    CHECK(fd_check(g, out, {"x"}, {x}, bind, kFdStep) < kFdTol);
}

TEST_CASE("gru cell gradients agree with finite differences") {
    Rng rng(17);
    Graph g;
    int x = g.input("x", {4});
    int h = g.input("h", {3});
    int wx = g.input("wx", {4, 9});
    int wh = g.input("wh", {3, 9});
    int bx = g.input("bx", {9});
    int bh = g.input("bh", {9});
    int hp = g.gru_cell(x, h, wx, wh, bx, bh);
    int rw = g.constant(random_tensor({3, 1}, rng));
    int out = g.dense(hp, rw, g.constant(Tensor({1}, 0.0)));
    Bindings bind{{"x", random_tensor({4}, rng)},   {"h", random_tensor({3}, rng)},
                  {"wx", random_tensor({4, 9}, rng)}, {"wh", random_tensor({3, 9}, rng)},
                  {"bx", random_tensor({9}, rng)},  {"bh", random_tensor({9}, rng)}};
    CHECK(fd_check(g, out, {"x", "h", "wx", "wh", "bx", "bh"}, {x, h, wx, wh, bx, bh}, bind, kFdStep) < kFdTol);
}

TEST_CASE("elementwise ops, scale, concat and slice gradients agree with finite differences") {
    Rng rng(18);
    Graph g;
    int a = g.input("a", {2, 3});
    int b = g.input("b", {2, 3});
    int c = g.input("c", {3, 3});
    int sum = g.add(a, b);
    int dif = g.sub(sum, b);
    int prod = g.mul(dif, b);
    int sc = g.scale(prod, -1.7);
    int cat = g.concat_time({sc, c});       // [5,3]
    int sl = g.slice_time(cat, 1, 3);       // [3,3]
    int rw = g.constant(random_tensor({9, 1}, rng));
    int out = g.dense(sl, rw, g.constant(Tensor({1}, 0.0)));
    Bindings bind{{"a", random_tensor({2, 3}, rng)},
                  {"b", random_tensor({2, 3}, rng)},
                  {"c", random_tensor({3, 3}, rng)}};
    CHECK(fd_check(g, out, {"a", "b", "c"}, {a, b, c}, bind, kFdStep) < kFdTol);
}

TEST_CASE("norm gradients agree with finite differences away from kinks") {
    Rng rng(19);

    Graph g;
    int x = g.input("x", {8});
    int out = g.l2_norm(x);
    Bindings bind{{"x", random_tensor_margin({8}, rng)}};
    CHECK(fd_check(g, out, {"x"}, {x}, bind, kFdStep) < kFdTol);

    Graph h;
    int z = h.input("z", {8});
    int mo = h.max_abs(z);
    Tensor zt = random_tensor_margin({8}, rng);
    widen_top_gap(zt);
    CHECK(fd_check(h, mo, {"z"}, {z}, {{"z", zt}}, kFdStep) < kFdTol);

    Graph s;
    int y = s.input("y", {8});
    int so = s.sum_abs(y);
    Bindings sbind{{"y", random_tensor_margin({8}, rng)}};
    CHECK(fd_check(s, so, {"y"}, {y}, sbind, kFdStep) < kFdTol);
}

TEST_CASE("backward is deterministic across rebuilds") {
    auto run = [] {
        Rng rng(23);
        Graph g;
        int x = g.input("x", {3, 4, 4, 1});
        int w = g.input("w", {2, 3, 3, 1, 2});
        int b = g.input("b", {2});
        int y = g.relu(g.conv3d(x, w, b, 1, 0, 0));
        int rw = g.constant(random_tensor({static_cast<int>(shape_numel(g.node_at(y).shape)), 1}, rng));
        int out = g.dense(y, rw, g.constant(Tensor({1}, 0.0)));
        Bindings bind{{"x", random_tensor({3, 4, 4, 1}, rng)},
                      {"w", random_tensor({2, 3, 3, 1, 2}, rng)},
                      {"b", random_tensor({2}, rng)}};
        g.eval(bind);
        return g.backward(out, {x, w, b});
    };
    GradMap g1 = run();
    GradMap g2 = run();
    for (const auto& [id, t] : g1) {
        const Tensor& u = g2.at(id);
        REQUIRE(t.size() == u.size());
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
    }
}

TEST_CASE("values are cached and refreshed per eval") {
    Graph g;
    int x = g.input("x", {2});
    int y = g.scale(x, 2.0);
    g.eval({{"x", Tensor({2}, {1.0, 2.0})}});
    CHECK(g.value(y)[0] == 2.0);
    g.eval({{"x", Tensor({2}, {5.0, 2.0})}});
    CHECK(g.value(y)[0] == 10.0);
}

TEST_CASE("shape and binding errors are reported with the offending node") {
    Graph g;
    int x = g.input("x", {2, 3});
    CHECK_THROWS_AS(g.dense(x, g.constant(Tensor({5, 4}, 0.0)), g.constant(Tensor({4}, 0.0))),
                    std::invalid_argument);
    CHECK_THROWS_AS(g.mean_pool(x, 1, 2, 1), std::invalid_argument);  // needs rank 4
    int v = g.input("v", {4, 4, 4, 1});
    CHECK_THROWS_AS(g.mean_pool(v, 3, 1, 1), std::invalid_argument);  // 3 does not divide 4
    CHECK_THROWS_AS(g.slice_time(v, 3, 4), std::invalid_argument);    // past the end
    CHECK_THROWS_AS(g.concat_time({x, v}), std::invalid_argument);    // rank mismatch

    Graph h;
    int a = h.input("a", {2});
    h.relu(a);
    CHECK_THROWS_AS(h.eval({}), std::invalid_argument);  // unbound input
    CHECK_THROWS_AS(h.eval({{"a", Tensor({3}, 0.0)}}), std::invalid_argument);  // wrong shape

    // backward needs a scalar output and a prior eval
    Graph k;
    int b = k.input("b", {2});
    int r = k.relu(b);
    CHECK_THROWS_AS(k.backward(r, {b}), std::runtime_error);  // not evaluated
    k.eval({{"b", Tensor({2}, {1.0, 2.0})}});
    CHECK_THROWS_AS(k.backward(r, {b}), std::invalid_argument);  // not scalar
}

TEST_CASE("non-finite values are rejected at eval with the node named") {
    Graph g;
    int x = g.input("x", {2});
    g.scale(x, 2.0);
    Tensor bad({2}, {1.0, std::numeric_limits<double>::infinity()});
    bool threw = false;
    try {
        g.eval({{"x", bad}});
    } catch (const std::runtime_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
    CHECK(threw);
}

TEST_SUITE_END();
