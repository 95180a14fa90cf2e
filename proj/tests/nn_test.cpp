#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tabitd/errors.hpp"
#include "tabitd/nn.hpp"
#include "tabitd/rng.hpp"
#include "tabitd/tensor.hpp"

using namespace tabitd;
using nn::ParamBlock;
using rng::Engine;

namespace {

// ---------------------------------------------------------------------------
// Independent simplex-projection oracles. Both solve
//   min ||p - z||^2  s.t.  p >= 0, sum p = 1
// without the sort-based closed form under test.
// ---------------------------------------------------------------------------

// Oracle 1: bisection on the threshold tau with g(tau) = sum max(z-tau, 0),
// which is continuous and strictly decreasing wherever it is positive.
std::vector<double> project_bisect(const std::vector<double>& z) {
    double lo = *std::min_element(z.begin(), z.end()) - 1.0;
    double hi = *std::max_element(z.begin(), z.end());
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (double v : z) s += std::max(v - mid, 0.0);
        (s > 1.0 ? lo : hi) = mid;
    }
    double tau = 0.5 * (lo + hi);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
    return p;
}

// Oracle 2 (small D only): enumerate every candidate support set, compute its
// tau, and keep the unique candidate satisfying the KKT conditions.
std::vector<double> project_subsets(const std::vector<double>& z) {
    const std::size_t d = z.size();
    REQUIRE(d <= 16);
    for (std::size_t bits = 1; bits < (1u << d); ++bits) {
        double sum = 0.0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < d; ++i)
            if (bits & (1u << i)) {
                sum += z[i];
                ++k;
            }
        double tau = (sum - 1.0) / static_cast<double>(k);
        bool valid = true;
        for (std::size_t i = 0; i < d; ++i) {
            bool in = bits & (1u << i);
            if (in && z[i] - tau < -1e-12) valid = false;   // primal feasibility
            if (!in && z[i] - tau > 1e-12) valid = false;   // dual feasibility
        }
        if (valid) {
            std::vector<double> p(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                if (bits & (1u << i)) p[i] = z[i] - tau;
            return p;
        }
    }
    FAIL("no KKT-consistent support set found");
    return {};
}

Tensor2 random_tensor(Engine& eng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor2 t(r, c);
    for (double& v : t.data) v = eng.normal(0.0, scale);
    return t;
}

double weighted_sum(const Tensor2& y, const Tensor2& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
    return s;
}

} // namespace

// ---------------------------------------------------------------------------
// Sparsemax
// ---------------------------------------------------------------------------

TEST_CASE("sparsemax matches both simplex-projection oracles") {
    Engine eng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t d = 2 + eng.below(9); // 2..10, subset oracle feasible
        std::vector<double> z(d);
        double scale = (trial % 3 == 0) ? 10.0 : 1.0;
        for (double& v : z) v = eng.normal(0.0, scale);
        auto got = nn::sparsemax(z);
        auto want1 = project_bisect(z);
        auto want2 = project_subsets(z);
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            CHECK(std::abs(got[i] - want1[i]) < 1e-10);
            CHECK(std::abs(got[i] - want2[i]) < 1e-10);
            sum += got[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("sparsemax frozen hand values") {
    auto p = nn::sparsemax(std::vector<double>{0.5, 0.1, -0.2});
    CHECK(p[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(p[2] == 0.0);

    // Exact ties split evenly.
    auto q = nn::sparsemax(std::vector<double>{1.0, 1.0, 0.0});
    CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(q[2] == 0.0);

    // A large-margin winner takes the whole simplex.
    auto r = nn::sparsemax(std::vector<double>{5.0, 0.0, 0.0});
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 0.0);

    // Uniform input -> uniform output.
    auto u = nn::sparsemax(std::vector<double>{3.0, 3.0, 3.0, 3.0});
    for (double v : u) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sparsemax gradient matches finite differences away from kinks") {
    Engine eng(77);
    std::size_t b = 6, d = 5;
    Tensor2 z;
    // Resample until every row sits clear of a support-change boundary,
    // where the true function is not differentiable.
    do {
        z = random_tensor(eng, b, d);
    } while ([&] {
        for (std::size_t r = 0; r < b; ++r)
            if (nn::sparsemax_boundary_gap(z.row(r)) < 1e-3) return true;
        return false;
    }());
    Tensor2 w = random_tensor(eng, b, d);

    nn::SparsemaxCache cache;
    Tensor2 y = nn::sparsemax_rows(z, &cache);
    (void)y;
    Tensor2 analytic = nn::sparsemax_backward(w, cache);

    auto f = [&](std::span<const double> flat) {
        Tensor2 zz(b, d, std::vector<double>(flat.begin(), flat.end()));
        return weighted_sum(nn::sparsemax_rows(zz), w);
    };
    auto res = nn::grad_check(f, z.data, analytic.data, 1e-6);
    CHECK(res.max_rel < 1e-5);
    CHECK(res.checked == b * d);
}

// ---------------------------------------------------------------------------
// GLU / ReLU
// ---------------------------------------------------------------------------

TEST_CASE("glu frozen value and gradient") {
    Tensor2 x(1, 1);
    x.at(0, 0) = 1.0;
    Tensor2 y = nn::glu_forward(x);
    CHECK(y.at(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));

    Engine eng(5);
    Tensor2 in = random_tensor(eng, 4, 6);
    Tensor2 w = random_tensor(eng, 4, 6);
    nn::GluCache cache;
    nn::glu_forward(in, &cache);
    Tensor2 analytic = nn::glu_backward(w, cache);
    auto f = [&](std::span<const double> flat) {
        Tensor2 xx(4, 6, std::vector<double>(flat.begin(), flat.end()));
        return weighted_sum(nn::glu_forward(xx), w);
    };
    auto res = nn::grad_check(f, in.data, analytic.data, 1e-6);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("relu forward and backward") {
    Tensor2 x(1, 4, {-1.0, 0.0, 2.5, -0.1});
    nn::ReluCache cache;
    Tensor2 y = nn::relu_forward(x, &cache);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 0.0);
    CHECK(y.at(0, 2) == 2.5);
    CHECK(y.at(0, 3) == 0.0);
    Tensor2 dy(1, 4, {1.0, 1.0, 1.0, 1.0});
    Tensor2 dx = nn::relu_backward(dy, cache);
    CHECK(dx.at(0, 0) == 0.0);
    CHECK(dx.at(0, 2) == 1.0);
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

TEST_CASE("linear frozen value and all three gradients") {
    Tensor2 x(1, 2, {1.0, 2.0});
    Tensor2 w(2, 1, {1.0, 1.0});
    Tensor2 b(1, 1, {0.5});
    Tensor2 y = nn::linear_forward(x, w, b);
    CHECK(y.at(0, 0) == doctest::Approx(3.5).epsilon(1e-15));

    Engine eng(9);
    std::size_t bs = 5, in = 4, out = 3;
    Tensor2 xx = random_tensor(eng, bs, in);
    Tensor2 ww = random_tensor(eng, in, out);
    Tensor2 bb = random_tensor(eng, 1, out);
    Tensor2 wt = random_tensor(eng, bs, out);

    nn::LinearCache cache;
    nn::linear_forward(xx, ww, bb, &cache);
    Tensor2 dw(in, out), db(1, out);
    Tensor2 dx = nn::linear_backward(wt, cache, ww, dw, db);

    auto fx = [&](std::span<const double> flat) {
        Tensor2 t(bs, in, std::vector<double>(flat.begin(), flat.end()));
        return weighted_sum(nn::linear_forward(t, ww, bb), wt);
    };
    CHECK(nn::grad_check(fx, xx.data, dx.data, 1e-6).max_rel < 1e-5);

    auto fw = [&](std::span<const double> flat) {
        Tensor2 t(in, out, std::vector<double>(flat.begin(), flat.end()));
        return weighted_sum(nn::linear_forward(xx, t, bb), wt);
    };
    CHECK(nn::grad_check(fw, ww.data, dw.data, 1e-6).max_rel < 1e-5);

    auto fb = [&](std::span<const double> flat) {
        Tensor2 t(1, out, std::vector<double>(flat.begin(), flat.end()));
        return weighted_sum(nn::linear_forward(xx, ww, t), wt);
    };
    CHECK(nn::grad_check(fb, bb.data, db.data, 1e-6).max_rel < 1e-5);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

TEST_CASE("batch norm hand case: column [1,2,3]") {
    Tensor2 x(3, 1, {1.0, 2.0, 3.0});
    nn::BnStats stats(1);
    Tensor2 y = nn::batch_norm_train(x, stats);
    double expect = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5); // population variance
    CHECK(y.at(0, 0) == doctest::Approx(-expect).epsilon(1e-14));
    CHECK(y.at(1, 0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(y.at(2, 0) == doctest::Approx(expect).epsilon(1e-14));
    // Running stats moved toward the batch statistics by the momentum.
    CHECK(stats.running_mean[0] == doctest::Approx(0.01 * 2.0).epsilon(1e-12));
    CHECK(stats.running_var[0] == doctest::Approx(0.99 * 1.0 + 0.01 * (2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("batch norm gradient through the batch statistics") {
    Engine eng(13);
    std::size_t b = 7, d = 4;
    Tensor2 x = random_tensor(eng, b, d);
    Tensor2 w = random_tensor(eng, b, d);

    nn::BnStats stats(d);
    nn::BnCache cache;
    nn::batch_norm_train(x, stats, 0, &cache);
    Tensor2 analytic = nn::batch_norm_backward(w, cache);

    auto f = [&](std::span<const double> flat) {
        Tensor2 t(b, d, std::vector<double>(flat.begin(), flat.end()));
        nn::BnStats s(d);
        return weighted_sum(nn::batch_norm_train(t, s), w);
    };
    auto res = nn::grad_check(f, x.data, analytic.data, 1e-6);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("ghost batch norm normalizes each chunk independently") {
    Engine eng(21);
    Tensor2 x = random_tensor(eng, 8, 3);
    nn::BnStats a(3), b_(3);

    Tensor2 whole = nn::batch_norm_train(x, a, 4);
    // Manually normalize rows 0..3 and 4..7 separately.
    for (std::size_t lo : {std::size_t{0}, std::size_t{4}}) {
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t r = lo; r < lo + 4; ++r) mean += x.at(r, c);
            mean /= 4.0;
            double var = 0.0;
            for (std::size_t r = lo; r < lo + 4; ++r)
                var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
            var /= 4.0;
            for (std::size_t r = lo; r < lo + 4; ++r) {
                double want = (x.at(r, c) - mean) / std::sqrt(var + 1e-5);
                CHECK(whole.at(r, c) == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
    (void)b_;
}

TEST_CASE("ghost batch norm gradient with chunked batch") {
    Engine eng(22);
    std::size_t b = 10, d = 3, vb = 4; // chunks: [0,4) [4,8) [8,10)
    Tensor2 x = random_tensor(eng, b, d);
    Tensor2 w = random_tensor(eng, b, d);
    nn::BnStats stats(d);
    nn::BnCache cache;
    nn::batch_norm_train(x, stats, vb, &cache);
    Tensor2 analytic = nn::batch_norm_backward(w, cache);
    auto f = [&](std::span<const double> flat) {
        Tensor2 t(b, d, std::vector<double>(flat.begin(), flat.end()));
        nn::BnStats s(d);
        return weighted_sum(nn::batch_norm_train(t, s, vb), w);
    };
    CHECK(nn::grad_check(f, x.data, analytic.data, 1e-6).max_rel < 1e-5);
}

TEST_CASE("ghost chunk folding rules") {
    using P = std::pair<std::size_t, std::size_t>;
    CHECK(nn::ghost_chunks(8, 4) == std::vector<P>{{0, 4}, {4, 8}});
    CHECK(nn::ghost_chunks(9, 4) == std::vector<P>{{0, 4}, {4, 9}});   // trailing 1 folds
    CHECK(nn::ghost_chunks(10, 4) == std::vector<P>{{0, 4}, {4, 8}, {8, 10}});
    CHECK(nn::ghost_chunks(5, 0) == std::vector<P>{{0, 5}});
    CHECK(nn::ghost_chunks(3, 8) == std::vector<P>{{0, 3}});
}

TEST_CASE("batch norm refuses a single-row batch") {
    Tensor2 x(1, 2, {1.0, 2.0});
    nn::BnStats stats(2);
    CHECK_THROWS_AS(nn::batch_norm_train(x, stats), NumericError);
}

TEST_CASE("batch norm inference uses running statistics only") {
    nn::BnStats stats(1);
    stats.running_mean[0] = 3.0;
    stats.running_var[0] = 4.0;
    Tensor2 x(2, 1, {3.0, 5.0});
    Tensor2 y = nn::batch_norm_infer(x, stats);
    CHECK(y.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.at(1, 0) == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Softmax + cross entropy
// ---------------------------------------------------------------------------

TEST_CASE("cross entropy frozen values and gradient") {
    // Uniform logits over 3 classes -> loss log 3 regardless of labels.
    Tensor2 logits(2, 3);
    std::vector<int> labels{0, 2};
    CHECK(nn::cross_entropy(logits, labels) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Engine eng(31);
    Tensor2 z = random_tensor(eng, 5, 7);
    std::vector<int> y{3, 0, 6, 2, 2};
    Tensor2 d;
    nn::cross_entropy(z, y, &d);
    auto f = [&](std::span<const double> flat) {
        Tensor2 t(5, 7, std::vector<double>(flat.begin(), flat.end()));
        return nn::cross_entropy(t, y);
    };
    CHECK(nn::grad_check(f, z.data, d.data, 1e-6).max_rel < 1e-5);
}

TEST_CASE("softmax rows sum to one and honor shift invariance") {
    Engine eng(37);
    Tensor2 z = random_tensor(eng, 4, 7, 5.0);
    Tensor2 p = nn::softmax_rows(z);
    for (std::size_t r = 0; r < 4; ++r) {
        double s = std::accumulate(p.row(r).begin(), p.row(r).end(), 0.0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor2 shifted = z;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += 100.0;
    Tensor2 q = nn::softmax_rows(shifted);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        CHECK(p.data[i] == doctest::Approx(q.data[i]).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("adam first step equals lr * g / (|g| + eps) after bias correction") {
    ParamBlock p(1, 1);
    p.value.at(0, 0) = 1.0;
    p.grad.at(0, 0) = 0.5;
    nn::Adam opt({&p}, 0.02);
    opt.step();
    double want = 1.0 - 0.02 * 0.5 / (0.5 + 1e-8);
    CHECK(p.value.at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adam converges on a quadratic bowl") {
    ParamBlock p(1, 2);
    p.value.at(0, 0) = 4.0;
    p.value.at(0, 1) = -3.0;
    nn::Adam opt({&p}, 0.1);
    for (int it = 0; it < 500; ++it) {
        p.zero_grad();
        p.grad.at(0, 0) = 2.0 * p.value.at(0, 0);
        p.grad.at(0, 1) = 2.0 * p.value.at(0, 1);
        opt.step();
    }
    CHECK(std::abs(p.value.at(0, 0)) < 1e-3);
    CHECK(std::abs(p.value.at(0, 1)) < 1e-3);
}

// ---------------------------------------------------------------------------
// grad_check self-test
// ---------------------------------------------------------------------------

TEST_CASE("grad_check accepts a correct gradient and rejects a corrupted one") {
    std::vector<double> x{1.0, -2.0, 0.5};
    auto f = [](std::span<const double> v) {
        double s = 0.0;
        for (double a : v) s += a * a * a;
        return s;
    };
    std::vector<double> good{3.0, 12.0, 0.75}; // 3 x^2
    CHECK(nn::grad_check(f, x, good, 1e-5).max_rel < 1e-8);
    std::vector<double> bad{3.0, 12.0, 1.75};
    CHECK(nn::grad_check(f, x, bad, 1e-5).max_rel > 0.5);
}

TEST_CASE("grad_check validates its step size") {
    std::vector<double> x{1.0};
    std::vector<double> g{1.0};
    auto f = [](std::span<const double> v) { return v[0]; };
    CHECK_THROWS_AS(nn::grad_check(f, x, g, 1e-9), ConfigError);
    CHECK_THROWS_AS(nn::grad_check(f, x, g, 0.5), ConfigError);
}
