#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "kfan/kfan_network.hpp"
#include "kfan/rbm.hpp"
#include "kfan/rng.hpp"
#include "kfan/types.hpp"

namespace testutil {

inline kfan::Vector vec(std::initializer_list<double> xs) {
    kfan::Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

inline kfan::Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = static_cast<Eigen::Index>(rows.begin()->size());
    kfan::Matrix m(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double x : row) m(i, j++) = x;
        ++i;
    }
    return m;
}

/// Unique scratch directory for file-format tests.
inline std::filesystem::path fresh_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("kfan_" + tag + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

/// 3-branch net small enough for exhaustive enumeration (17 units total).
inline kfan::KFanNetwork tiny_net(std::uint64_t seed, double stddev = 0.3) {
    kfan::Rng rng(seed);
    kfan::TrainConfig init;
    init.weight_init_stddev = stddev;
    return kfan::build_kfan(
        {{"x", 3, {2, 2}}, {"y", 2, {2}}, {"z", 2, {2}}}, 2, init, rng);
}

inline std::vector<kfan::Vector> random_visibles(const kfan::KFanNetwork& net,
                                                 kfan::Rng& rng) {
    std::vector<kfan::Vector> vs;
    for (const auto& br : net.branches) {
        kfan::Vector half =
            kfan::Vector::Constant(br.layers.front().n_visible(), 0.5);
        vs.push_back(kfan::sample_bernoulli(half, rng));
    }
    return vs;
}

inline bool same_params(const kfan::KFanNetwork& a, const kfan::KFanNetwork& b) {
    if (a.branches.size() != b.branches.size()) return false;
    if (a.top_bias != b.top_bias) return false;
    for (std::size_t i = 0; i < a.branches.size(); ++i) {
        const auto& ba = a.branches[i];
        const auto& bb = b.branches[i];
        if (ba.layers.size() != bb.layers.size()) return false;
        if (ba.top_weights != bb.top_weights) return false;
        for (std::size_t l = 0; l < ba.layers.size(); ++l) {
            if (ba.layers[l].weights != bb.layers[l].weights) return false;
            if (ba.layers[l].visible_bias != bb.layers[l].visible_bias) return false;
            if (ba.layers[l].hidden_bias != bb.layers[l].hidden_bias) return false;
        }
    }
    return true;
}

}  // namespace testutil
