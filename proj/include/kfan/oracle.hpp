#pragma once

#include <vector>

#include "kfan/kfan_network.hpp"
#include "kfan/rbm.hpp"
#include "kfan/types.hpp"

namespace kfan::oracle {

/// Cap on brute-force enumeration; 2^max_total_units configurations are
/// visited, so 20 keeps everything near one million states. Anything
/// larger is refused rather than truncated.
struct OracleBudget {
    Eigen::Index max_total_units = 20;
};

/// ln Z by summing exp(-E) over every joint binary configuration
/// (streaming log-sum-exp, fixed enumeration order).
double exact_log_partition(const Rbm& rbm, const OracleBudget& budget = {});
double exact_log_partition(const KFanNetwork& net, const OracleBudget& budget = {});

/// Exact ln p(v): configurations of the hidden units are summed with the
/// visibles clamped, minus ln Z.
double exact_loglik(const Rbm& rbm, const Vector& v, const OracleBudget& budget = {});
/// Mean of exact_loglik over rows of `data`.
double exact_mean_loglik(const Rbm& rbm, const Matrix& data,
                         const OracleBudget& budget = {});
/// Exact ln p(v_1, ..., v_K) of one joint visible configuration.
double exact_joint_loglik(const KFanNetwork& net, const std::vector<Vector>& visibles,
                          const OracleBudget& budget = {});

/// The exact quantity CD approximates: data expectation minus model
/// expectation of the sufficient statistics, both by enumeration.
RbmGradient exact_loglik_grad(const Rbm& rbm, const Matrix& data,
                              const OracleBudget& budget = {});

/// Exact marginal p(h_j = 1 | v) for every hidden unit. The budget here
/// bounds the hidden unit count only (visibles are clamped).
Vector enumerate_posterior(const Rbm& rbm, const Vector& v,
                           const OracleBudget& budget = {});
MeanFieldState enumerate_posterior(const KFanNetwork& net,
                                   const std::vector<Vector>& visibles,
                                   const OracleBudget& budget = {});

}  // namespace kfan::oracle
