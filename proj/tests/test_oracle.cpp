#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "kfan/error.hpp"
#include "kfan/oracle.hpp"
#include "kfan/rbm.hpp"
#include "kfan/rng.hpp"

using namespace kfan;
using testutil::mat;
using testutil::vec;

namespace {

Rbm make_rbm(Matrix w, Vector b, Vector c) {
    Rbm r;
    r.weights = std::move(w);
    r.visible_bias = std::move(b);
    r.hidden_bias = std::move(c);
    return r;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("zero-parameter partition function is uniform") {
    const Rbm zero = make_rbm(Matrix::Zero(2, 3), Vector::Zero(3), Vector::Zero(2));
    CHECK(std::abs(oracle::exact_log_partition(zero) - 5.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("one-by-one partition function by hand") {
    const Rbm r = make_rbm(mat({{0.7}}), Vector::Zero(1), Vector::Zero(1));
    CHECK(std::abs(oracle::exact_log_partition(r) - std::log(3.0 + std::exp(0.7))) <
          1e-12);
}

TEST_CASE("partition function is transposition invariant") {
    Rng rng(5);
    Rbm r = init_rbm(3, 2, 0.8, rng);
    r.visible_bias = vec({0.3, -0.1, 0.5});
    r.hidden_bias = vec({-0.6, 0.2});
    const Rbm t = make_rbm(r.weights.transpose(), r.hidden_bias, r.visible_bias);
    CHECK(std::abs(oracle::exact_log_partition(r) - oracle::exact_log_partition(t)) <
          1e-10);
}

TEST_CASE("probabilities normalize to one") {
    Rng rng(6);
    Rbm r = init_rbm(3, 2, 0.9, rng);
    r.visible_bias = vec({0.4, -0.3, 0.1});
    const double ln_z = oracle::exact_log_partition(r);
    double total = 0.0;
    for (int mv = 0; mv < 8; ++mv) {
        Vector v(3);
        for (int i = 0; i < 3; ++i) v[i] = (mv >> i) & 1 ? 1.0 : 0.0;
        for (int mh = 0; mh < 4; ++mh) {
            Vector h(2);
            for (int i = 0; i < 2; ++i) h[i] = (mh >> i) & 1 ? 1.0 : 0.0;
            total += std::exp(-energy(r, v, h) - ln_z);
        }
    }
    CHECK(std::abs(total - 1.0) < 1e-12);

    double visible_total = 0.0;
    for (int mv = 0; mv < 8; ++mv) {
        Vector v(3);
        for (int i = 0; i < 3; ++i) v[i] = (mv >> i) & 1 ? 1.0 : 0.0;
        visible_total += std::exp(oracle::exact_loglik(r, v));
    }
    CHECK(std::abs(visible_total - 1.0) < 1e-12);
}

TEST_CASE("exact gradient of the zero-parameter two-pixel model") {
    const Rbm zero = make_rbm(Matrix::Zero(1, 2), Vector::Zero(2), Vector::Zero(1));
    const RbmGradient g = oracle::exact_loglik_grad(zero, mat({{1, 0}}));
    CHECK(std::abs(g.d_weights(0, 0) - 0.25) < 1e-12);
    CHECK(std::abs(g.d_weights(0, 1) - (-0.25)) < 1e-12);
    CHECK(std::abs(g.d_visible_bias[0] - 0.5) < 1e-12);
    CHECK(std::abs(g.d_visible_bias[1] - (-0.5)) < 1e-12);
    CHECK(std::abs(g.d_hidden_bias[0]) < 1e-12);
}

TEST_CASE("exact gradient vanishes when the model matches the data") {
    const Rbm r = make_rbm(Matrix::Zero(1, 2), vec({20, 20}), Vector::Zero(1));
    const RbmGradient g = oracle::exact_loglik_grad(r, mat({{1, 1}}));
    CHECK(g.d_weights.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(g.d_visible_bias.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(g.d_hidden_bias.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("exact gradient matches finite differences of the exact likelihood") {
    Rng rng(12);
    Rbm r = init_rbm(3, 2, 0.5, rng);
    r.visible_bias = vec({0.2, -0.3, 0.1});
    r.hidden_bias = vec({0.4, -0.2});
    const Matrix data = mat({{1, 0, 1}, {0, 1, 0}});
    const RbmGradient g = oracle::exact_loglik_grad(r, data);

    const double h = 1e-6;
    const auto fd = [&](auto&& set, double base) {
        Rbm plus = r, minus = r;
        set(plus, base + h);
        set(minus, base - h);
        return (oracle::exact_mean_loglik(plus, data) -
                oracle::exact_mean_loglik(minus, data)) /
               (2.0 * h);
    };
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) {
            const double d = fd(
                [&](Rbm& m, double x) { m.weights(i, j) = x; }, r.weights(i, j));
            CHECK(std::abs(d - g.d_weights(i, j)) < 1e-8);
        }
    for (Eigen::Index j = 0; j < 3; ++j) {
        const double d = fd(
            [&](Rbm& m, double x) { m.visible_bias[j] = x; }, r.visible_bias[j]);
        CHECK(std::abs(d - g.d_visible_bias[j]) < 1e-8);
    }
    for (Eigen::Index i = 0; i < 2; ++i) {
        const double d = fd(
            [&](Rbm& m, double x) { m.hidden_bias[i] = x; }, r.hidden_bias[i]);
        CHECK(std::abs(d - g.d_hidden_bias[i]) < 1e-8);
    }
}

TEST_CASE("enumerated posterior fixed points") {
    const Rbm biased =
        make_rbm(Matrix::Zero(2, 3), Vector::Zero(3), vec({0.7, -1.2}));
    const Vector p = oracle::enumerate_posterior(biased, vec({1, 0, 1}));
    CHECK(std::abs(p[0] - sigmoid(0.7)) < 1e-12);
    CHECK(std::abs(p[1] - sigmoid(-1.2)) < 1e-12);

    Rng rng(14);
    const Rbm r = init_rbm(4, 3, 0.6, rng);
    const Vector v = vec({1, 1, 0, 0});
    CHECK((oracle::enumerate_posterior(r, v) - hidden_given_visible(r, v))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("budget refusals") {
    Rng rng(15);
    const Rbm big = init_rbm(12, 9, 0.1, rng);  // 21 units
    CHECK_THROWS_AS(oracle::exact_log_partition(big), BudgetError);
    CHECK_THROWS_AS(oracle::exact_loglik(big, Vector::Zero(12)), BudgetError);

    // Posterior enumeration clamps the visibles, so only hidden units count.
    const Rbm wide = init_rbm(19, 2, 0.1, rng);  // 21 units, 2 hidden
    CHECK_NOTHROW(oracle::enumerate_posterior(wide, Vector::Zero(19)));
    CHECK_THROWS_AS(oracle::exact_log_partition(wide), BudgetError);

    oracle::OracleBudget small;
    small.max_total_units = 4;
    const Rbm tiny = init_rbm(3, 2, 0.1, rng);
    CHECK_THROWS_AS(oracle::exact_log_partition(tiny, small), BudgetError);
}

TEST_CASE("single-stack fan matches the plain rbm distribution") {
    Rng rng(16);
    Rbm r = init_rbm(3, 2, 0.7, rng);
    r.visible_bias = vec({0.3, -0.2, 0.4});
    r.hidden_bias = vec({-0.1, 0.5});

    // One branch plus an uncoupled shared layer: the shared units only
    // contribute a factor 2^shared to the partition function.
    KFanNetwork net;
    Branch br;
    br.spec = BranchSpec{"x", 3, {2}};
    br.layers.push_back(r);
    br.top_weights = Matrix::Zero(2, 2);
    net.branches.push_back(br);
    net.top_bias = Vector::Zero(2);

    CHECK(std::abs(oracle::exact_log_partition(net) -
                   (oracle::exact_log_partition(r) + 2.0 * std::log(2.0))) < 1e-10);
    const Vector v = vec({1, 0, 1});
    CHECK(std::abs(oracle::exact_joint_loglik(net, {v}) - oracle::exact_loglik(r, v)) <
          1e-10);
}

TEST_CASE("fan partition function matches independent enumeration") {
    const KFanNetwork net = testutil::tiny_net(99, 0.4);
    // Independent brute force: walk every configuration with bit loops.
    std::vector<Eigen::Index> dims;
    for (const auto& br : net.branches) {
        dims.push_back(br.layers.front().n_visible());
        for (const auto& l : br.layers) dims.push_back(l.n_hidden());
    }
    dims.push_back(net.shared_dim());
    Eigen::Index total = 0;
    for (const Eigen::Index d : dims) total += d;
    REQUIRE(total <= 20);

    double peak = -1e300, sum = 0.0;
    for (std::uint64_t mask = 0; mask < (1ull << total); ++mask) {
        std::vector<Vector> vs;
        MeanFieldState hs;
        hs.mu.resize(net.branches.size());
        int bit = 0;
        const auto take = [&](Eigen::Index n) {
            Vector out(n);
            for (Eigen::Index i = 0; i < n; ++i)
                out[i] = (mask >> bit++) & 1 ? 1.0 : 0.0;
            return out;
        };
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            vs.push_back(take(net.branches[b].layers.front().n_visible()));
            for (const auto& l : net.branches[b].layers)
                hs.mu[b].push_back(take(l.n_hidden()));
        }
        hs.shared = take(net.shared_dim());
        const double e = -joint_energy(net, vs, hs);
        if (e > peak) {
            sum = sum * std::exp(peak - e) + 1.0;
            peak = e;
        } else {
            sum += std::exp(e - peak);
        }
    }
    const double expected = peak + std::log(sum);
    CHECK(std::abs(oracle::exact_log_partition(net) - expected) < 1e-10);
}

TEST_CASE("fan posterior marginals on an uncoupled network") {
    // Zero weights decouple every unit; each hidden unit's marginal is the
    // sigmoid of its total bias (own bias plus the next layer's visible bias).
    KFanNetwork net = testutil::tiny_net(7, 0.0);
    Rng rng(21);
    for (auto& br : net.branches)
        for (auto& l : br.layers) {
            for (Eigen::Index i = 0; i < l.hidden_bias.size(); ++i)
                l.hidden_bias[i] = rng.next_gaussian();
            for (Eigen::Index i = 0; i < l.visible_bias.size(); ++i)
                l.visible_bias[i] = rng.next_gaussian();
        }
    std::vector<Vector> vs;
    for (const auto& br : net.branches)
        vs.push_back(Vector::Zero(br.layers.front().n_visible()));

    const MeanFieldState post = oracle::enumerate_posterior(net, vs);
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const auto& layers = net.branches[b].layers;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Vector bias = layers[l].hidden_bias;
            if (l + 1 < layers.size()) bias += layers[l + 1].visible_bias;
            for (Eigen::Index i = 0; i < bias.size(); ++i)
                CHECK(std::abs(post.mu[b][l][i] - sigmoid(bias[i])) < 1e-12);
        }
    }
    for (Eigen::Index i = 0; i < net.shared_dim(); ++i)
        CHECK(std::abs(post.shared[i] - 0.5) < 1e-12);
}

}  // TEST_SUITE
