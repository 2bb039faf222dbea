#include "kfan/oracle.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "kfan/error.hpp"

namespace kfan::oracle {

namespace {

/// Streaming log-sum-exp with a fixed accumulation order.
class LogSumExp {
  public:
    void add(double x) {
        if (x <= peak_) {
            sum_ += std::exp(x - peak_);
        } else {
            sum_ = sum_ * std::exp(peak_ - x) + 1.0;
            peak_ = x;
        }
    }
    double value() const { return peak_ + std::log(sum_); }

  private:
    double peak_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
};

void check_budget(Eigen::Index units, const OracleBudget& budget) {
    if (budget.max_total_units <= 0) throw BudgetError("enumeration budget must be positive");
    if (units > budget.max_total_units)
        throw BudgetError("enumeration over " + std::to_string(units) +
                          " units exceeds the budget of " +
                          std::to_string(budget.max_total_units));
}

void set_bits(Vector& v, std::uint64_t mask, int offset) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = static_cast<double>((mask >> (offset + i)) & 1u);
}

/// Walk every configuration of the units that `slots` point at (visibles
/// excluded when clamped) and hand the energy to `visit`.
template <typename Energy, typename Visit>
void enumerate(const std::vector<Vector*>& slots, const Energy& energy_of,
               const Visit& visit) {
    Eigen::Index total = 0;
    for (const Vector* s : slots) total += s->size();
    const std::uint64_t count = std::uint64_t(1) << total;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        int offset = 0;
        for (Vector* s : slots) {
            set_bits(*s, mask, offset);
            offset += static_cast<int>(s->size());
        }
        visit(energy_of());
    }
}

Eigen::Index hidden_units(const KFanNetwork& net) {
    Eigen::Index n = net.shared_dim();
    for (const Branch& br : net.branches)
        for (const Rbm& r : br.layers) n += r.n_hidden();
    return n;
}

Eigen::Index total_units(const KFanNetwork& net) {
    Eigen::Index n = hidden_units(net);
    for (const Branch& br : net.branches) n += br.layers.front().n_visible();
    return n;
}

struct NetScratch {
    std::vector<Vector> visibles;
    MeanFieldState hidden;
};

NetScratch make_scratch(const KFanNetwork& net) {
    NetScratch s;
    s.hidden.mu.resize(net.branches.size());
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const Branch& br = net.branches[b];
        s.visibles.emplace_back(Vector::Zero(br.layers.front().n_visible()));
        for (const Rbm& r : br.layers)
            s.hidden.mu[b].emplace_back(Vector::Zero(r.n_hidden()));
    }
    s.hidden.shared = Vector::Zero(net.shared_dim());
    return s;
}

// Slot lists alias the scratch object, so they are rebuilt wherever the
// scratch finally lives.
std::vector<Vector*> hidden_slots(NetScratch& s) {
    std::vector<Vector*> slots;
    for (auto& layers : s.hidden.mu)
        for (Vector& m : layers) slots.push_back(&m);
    slots.push_back(&s.hidden.shared);
    return slots;
}

std::vector<Vector*> all_slots(NetScratch& s) {
    std::vector<Vector*> slots;
    for (Vector& v : s.visibles) slots.push_back(&v);
    auto hidden = hidden_slots(s);
    slots.insert(slots.end(), hidden.begin(), hidden.end());
    return slots;
}

double rbm_log_partition_unchecked(const Rbm& rbm) {
    Vector v = Vector::Zero(rbm.n_visible());
    Vector h = Vector::Zero(rbm.n_hidden());
    LogSumExp lse;
    enumerate({&v, &h}, [&] { return energy(rbm, v, h); },
              [&](double e) { lse.add(-e); });
    return lse.value();
}

}  // namespace

double exact_log_partition(const Rbm& rbm, const OracleBudget& budget) {
    check_budget(rbm.n_visible() + rbm.n_hidden(), budget);
    return rbm_log_partition_unchecked(rbm);
}

double exact_log_partition(const KFanNetwork& net, const OracleBudget& budget) {
    check_budget(total_units(net), budget);
    NetScratch s = make_scratch(net);
    LogSumExp lse;
    enumerate(all_slots(s), [&] { return joint_energy(net, s.visibles, s.hidden); },
              [&](double e) { lse.add(-e); });
    return lse.value();
}

double exact_loglik(const Rbm& rbm, const Vector& v, const OracleBudget& budget) {
    if (v.size() != rbm.n_visible()) throw DimensionError("visible size mismatch");
    check_budget(rbm.n_visible() + rbm.n_hidden(), budget);
    Vector vv = v;
    Vector h = Vector::Zero(rbm.n_hidden());
    LogSumExp clamped;
    enumerate({&h}, [&] { return energy(rbm, vv, h); },
              [&](double e) { clamped.add(-e); });
    return clamped.value() - rbm_log_partition_unchecked(rbm);
}

double exact_mean_loglik(const Rbm& rbm, const Matrix& data, const OracleBudget& budget) {
    if (data.rows() == 0) throw DimensionError("need at least one example");
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        total += exact_loglik(rbm, data.row(i).transpose(), budget);
    return total / static_cast<double>(data.rows());
}

double exact_joint_loglik(const KFanNetwork& net, const std::vector<Vector>& visibles,
                          const OracleBudget& budget) {
    check_budget(total_units(net), budget);
    NetScratch s = make_scratch(net);
    if (visibles.size() != s.visibles.size())
        throw DimensionError("visible inputs do not match branch count");
    for (std::size_t b = 0; b < visibles.size(); ++b) {
        if (visibles[b].size() != s.visibles[b].size())
            throw DimensionError("visible input size mismatch");
        s.visibles[b] = visibles[b];
    }
    LogSumExp clamped;
    enumerate(hidden_slots(s), [&] { return joint_energy(net, s.visibles, s.hidden); },
              [&](double e) { clamped.add(-e); });
    return clamped.value() - exact_log_partition(net, budget);
}

RbmGradient exact_loglik_grad(const Rbm& rbm, const Matrix& data,
                              const OracleBudget& budget) {
    check_budget(rbm.n_visible() + rbm.n_hidden(), budget);
    RbmGradient grad = positive_statistics(rbm, data);

    // Model expectations: two passes, first ln Z, then probability-
    // weighted sums of the sufficient statistics.
    const double log_z = rbm_log_partition_unchecked(rbm);
    Vector v = Vector::Zero(rbm.n_visible());
    Vector h = Vector::Zero(rbm.n_hidden());
    Matrix vh = Matrix::Zero(rbm.n_hidden(), rbm.n_visible());
    Vector ev = Vector::Zero(rbm.n_visible());
    Vector eh = Vector::Zero(rbm.n_hidden());
    enumerate({&v, &h}, [&] { return energy(rbm, v, h); },
              [&](double e) {
                  const double p = std::exp(-e - log_z);
                  vh += p * (h * v.transpose());
                  ev += p * v;
                  eh += p * h;
              });
    grad.d_weights -= vh;
    grad.d_visible_bias -= ev;
    grad.d_hidden_bias -= eh;
    return grad;
}

Vector enumerate_posterior(const Rbm& rbm, const Vector& v, const OracleBudget& budget) {
    if (v.size() != rbm.n_visible()) throw DimensionError("visible size mismatch");
    check_budget(rbm.n_hidden(), budget);
    Vector vv = v;
    Vector h = Vector::Zero(rbm.n_hidden());
    LogSumExp norm;
    enumerate({&h}, [&] { return energy(rbm, vv, h); },
              [&](double e) { norm.add(-e); });
    const double log_norm = norm.value();
    Vector marginals = Vector::Zero(rbm.n_hidden());
    enumerate({&h}, [&] { return energy(rbm, vv, h); },
              [&](double e) { marginals += std::exp(-e - log_norm) * h; });
    return marginals;
}

MeanFieldState enumerate_posterior(const KFanNetwork& net,
                                   const std::vector<Vector>& visibles,
                                   const OracleBudget& budget) {
    check_budget(hidden_units(net), budget);
    NetScratch s = make_scratch(net);
    if (visibles.size() != s.visibles.size())
        throw DimensionError("visible inputs do not match branch count");
    for (std::size_t b = 0; b < visibles.size(); ++b) {
        if (visibles[b].size() != s.visibles[b].size())
            throw DimensionError("visible input size mismatch");
        s.visibles[b] = visibles[b];
    }

    const std::vector<Vector*> slots = hidden_slots(s);
    LogSumExp norm;
    enumerate(slots, [&] { return joint_energy(net, s.visibles, s.hidden); },
              [&](double e) { norm.add(-e); });
    const double log_norm = norm.value();

    MeanFieldState out = s.hidden;
    for (auto& layers : out.mu)
        for (Vector& m : layers) m.setZero();
    out.shared.setZero();
    std::vector<Vector*> out_slots;
    for (auto& layers : out.mu)
        for (Vector& m : layers) out_slots.push_back(&m);
    out_slots.push_back(&out.shared);

    enumerate(slots, [&] { return joint_energy(net, s.visibles, s.hidden); },
              [&](double e) {
                  const double p = std::exp(-e - log_norm);
                  for (std::size_t i = 0; i < out_slots.size(); ++i)
                      *out_slots[i] += p * (*slots[i]);
              });
    return out;
}

}  // namespace kfan::oracle
