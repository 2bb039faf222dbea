#include "kfan/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kfan/error.hpp"

namespace kfan {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

Matrix sigmoid(Matrix m) {
    return m.unaryExpr([](double x) { return kfan::sigmoid(x); });
}

Vector sigmoid_vec(Vector v) {
    return v.unaryExpr([](double x) { return kfan::sigmoid(x); });
}

void check_shapes(const Rbm& rbm, Eigen::Index v_size, Eigen::Index h_size,
                  const char* op) {
    if (v_size >= 0 && v_size != rbm.n_visible()) {
        throw DimensionError(std::string(op) + ": visible size " +
                             std::to_string(v_size) + " does not match " +
                             std::to_string(rbm.n_visible()));
    }
    if (h_size >= 0 && h_size != rbm.n_hidden()) {
        throw DimensionError(std::string(op) + ": hidden size " +
                             std::to_string(h_size) + " does not match " +
                             std::to_string(rbm.n_hidden()));
    }
}

}  // namespace

Rbm init_rbm(Eigen::Index n_visible, Eigen::Index n_hidden, double stddev, Rng& rng) {
    if (n_visible < 1 || n_hidden < 1) {
        throw DomainError("init_rbm: layer sizes must be positive");
    }
    Rbm rbm;
    rbm.weights.resize(n_hidden, n_visible);
    for (Eigen::Index j = 0; j < n_visible; ++j) {
        for (Eigen::Index i = 0; i < n_hidden; ++i) {
            rbm.weights(i, j) = stddev == 0.0 ? 0.0 : stddev * rng.next_gaussian();
        }
    }
    rbm.visible_bias = Vector::Zero(n_visible);
    rbm.hidden_bias = Vector::Zero(n_hidden);
    return rbm;
}

double energy(const Rbm& rbm, const Vector& v, const Vector& h) {
    check_shapes(rbm, v.size(), h.size(), "energy");
    return -h.dot(rbm.weights * v) - rbm.visible_bias.dot(v) - rbm.hidden_bias.dot(h);
}

Vector hidden_given_visible(const Rbm& rbm, const Vector& v) {
    check_shapes(rbm, v.size(), -1, "hidden_given_visible");
    return sigmoid_vec(rbm.weights * v + rbm.hidden_bias);
}

Vector visible_given_hidden(const Rbm& rbm, const Vector& h) {
    check_shapes(rbm, -1, h.size(), "visible_given_hidden");
    return sigmoid_vec(rbm.weights.transpose() * h + rbm.visible_bias);
}

Matrix hidden_given_visible_cols(const Rbm& rbm, const Matrix& v_cols) {
    check_shapes(rbm, v_cols.rows(), -1, "hidden_given_visible");
    return sigmoid((rbm.weights * v_cols).colwise() + rbm.hidden_bias);
}

Matrix visible_given_hidden_cols(const Rbm& rbm, const Matrix& h_cols) {
    check_shapes(rbm, -1, h_cols.rows(), "visible_given_hidden");
    return sigmoid((rbm.weights.transpose() * h_cols).colwise() + rbm.visible_bias);
}

Vector sample_bernoulli(const Vector& probs, Rng& rng) {
    Vector out(probs.size());
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0)) {
            throw DomainError("sample_bernoulli: probability " + std::to_string(p) +
                              " outside [0,1]");
        }
        out[i] = rng.next_uniform() < p ? 1.0 : 0.0;
    }
    return out;
}

Matrix sample_bernoulli(const Matrix& probs, Rng& rng) {
    Matrix out(probs.rows(), probs.cols());
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            const double p = probs(i, j);
            if (!(p >= 0.0 && p <= 1.0)) {
                throw DomainError("sample_bernoulli: probability " +
                                  std::to_string(p) + " outside [0,1]");
            }
            out(i, j) = rng.next_uniform() < p ? 1.0 : 0.0;
        }
    }
    return out;
}

RbmGradient positive_statistics(const Rbm& rbm, const Matrix& batch) {
    if (batch.rows() == 0) {
        throw DomainError("positive_statistics: empty batch");
    }
    check_shapes(rbm, batch.cols(), -1, "positive_statistics");
    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    const Matrix v_cols = batch.transpose();
    const Matrix h_probs = hidden_given_visible_cols(rbm, v_cols);
    RbmGradient g;
    g.d_weights = inv_b * (h_probs * v_cols.transpose());
    g.d_visible_bias = inv_b * v_cols.rowwise().sum();
    g.d_hidden_bias = inv_b * h_probs.rowwise().sum();
    return g;
}

RbmGradient cd_gradient(const Rbm& rbm, const Matrix& batch, int k, Rng& rng,
                        const CdHooks& hooks) {
    if (batch.rows() == 0) {
        throw DomainError("cd_gradient: empty batch");
    }
    if (k < 1) {
        throw DomainError("cd_gradient: k must be >= 1");
    }
    check_shapes(rbm, batch.cols(), -1, "cd_gradient");

    RbmGradient g = positive_statistics(rbm, batch);

    Matrix v_neg = batch.transpose();
    Matrix h_neg;
    if (hooks.clamp_negative_to_data) {
        h_neg = hidden_given_visible_cols(rbm, v_neg);
    } else {
        Matrix h_probs = hidden_given_visible_cols(rbm, v_neg);
        for (int step = 0; step < k; ++step) {
            const Matrix h_sample = sample_bernoulli(h_probs, rng);
            const Matrix v_probs = visible_given_hidden_cols(rbm, h_sample);
            v_neg = sample_bernoulli(v_probs, rng);
            h_probs = hidden_given_visible_cols(rbm, v_neg);
        }
        h_neg = h_probs;
    }

    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    g.d_weights -= inv_b * (h_neg * v_neg.transpose());
    g.d_visible_bias -= inv_b * v_neg.rowwise().sum();
    g.d_hidden_bias -= inv_b * h_neg.rowwise().sum();
    return g;
}

Rbm apply_update(const Rbm& rbm, const RbmGradient& grad, double eta) {
    if (grad.d_weights.rows() != rbm.weights.rows() ||
        grad.d_weights.cols() != rbm.weights.cols() ||
        grad.d_visible_bias.size() != rbm.visible_bias.size() ||
        grad.d_hidden_bias.size() != rbm.hidden_bias.size()) {
        throw DimensionError("apply_update: gradient shape mismatch");
    }
    if (!grad.d_weights.allFinite() || !grad.d_visible_bias.allFinite() ||
        !grad.d_hidden_bias.allFinite() || !std::isfinite(eta)) {
        throw NumericError("apply_update: non-finite gradient entry");
    }
    Rbm out = rbm;
    out.weights += eta * grad.d_weights;
    out.visible_bias += eta * grad.d_visible_bias;
    out.hidden_bias += eta * grad.d_hidden_bias;
    return out;
}

Rbm train_rbm(Rbm rbm, const Matrix& data, const TrainConfig& config, Rng& rng) {
    if (data.rows() == 0) {
        throw DomainError("train_rbm: empty dataset");
    }
    const Eigen::Index n = data.rows();
    const Eigen::Index batch_size = std::max<Eigen::Index>(1, config.batch_size);

    RbmGradient velocity;
    velocity.d_weights = Matrix::Zero(rbm.weights.rows(), rbm.weights.cols());
    velocity.d_visible_bias = Vector::Zero(rbm.visible_bias.size());
    velocity.d_hidden_bias = Vector::Zero(rbm.hidden_bias.size());

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates driven by the seeded stream; one draw per element.
        for (Eigen::Index i = n - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(
                rng.next_uniform() * static_cast<double>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(j)]);
        }
        for (Eigen::Index start = 0; start < n; start += batch_size) {
            const Eigen::Index b = std::min(batch_size, n - start);
            Matrix batch(b, data.cols());
            for (Eigen::Index r = 0; r < b; ++r) {
                batch.row(r) = data.row(order[static_cast<std::size_t>(start + r)]);
            }
            const RbmGradient g = cd_gradient(rbm, batch, config.cd_steps, rng);
            velocity.d_weights = config.momentum * velocity.d_weights +
                                 config.learning_rate *
                                     (g.d_weights - config.weight_decay * rbm.weights);
            velocity.d_visible_bias = config.momentum * velocity.d_visible_bias +
                                      config.learning_rate * g.d_visible_bias;
            velocity.d_hidden_bias = config.momentum * velocity.d_hidden_bias +
                                     config.learning_rate * g.d_hidden_bias;
            rbm.weights += velocity.d_weights;
            rbm.visible_bias += velocity.d_visible_bias;
            rbm.hidden_bias += velocity.d_hidden_bias;
        }
    }
    return rbm;
}

std::vector<Rbm> pretrain_stack(const std::vector<Eigen::Index>& layer_sizes,
                                const Matrix& data, const TrainConfig& config,
                                Rng& rng) {
    if (layer_sizes.empty()) {
        throw DomainError("pretrain_stack: at least one hidden layer required");
    }
    for (const Eigen::Index s : layer_sizes) {
        if (s < 1) {
            throw DomainError("pretrain_stack: layer size must be positive");
        }
    }
    std::vector<Rbm> stack;
    stack.reserve(layer_sizes.size());
    Matrix layer_data = data;
    for (const Eigen::Index n_hidden : layer_sizes) {
        Rbm rbm = init_rbm(layer_data.cols(), n_hidden, config.weight_init_stddev, rng);
        rbm = train_rbm(std::move(rbm), layer_data, config, rng);
        layer_data = hidden_given_visible_cols(rbm, layer_data.transpose()).transpose();
        stack.push_back(std::move(rbm));
    }
    return stack;
}

}  // namespace kfan
