#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bioenv/model.hpp"
#include "bioenv/rng.hpp"

namespace bioenv {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::map<std::string, double> per_tensor;
    std::size_t coords_checked = 0;
};

inline double gradcheck_rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Central finite differences of the full loss against a supplied gradient
/// set, sampling up to `samples_per_tensor` coordinates per tensor (small
/// tensors are checked exhaustively). Double precision only.
inline GradCheckReport finite_difference_check(ModelParameters<double> params,
                                               const ModelConfig& cfg,
                                               const MatX<double>& batch,
                                               const std::vector<int>& labels,
                                               double l2_lambda,
                                               const ModelParameters<double>& analytic,
                                               double epsilon = 1e-5,
                                               std::size_t samples_per_tensor = 200,
                                               std::uint64_t seed = 7) {
    auto loss_at = [&]() {
        const MatX<double> probs = forward(params, cfg, batch, false);
        return loss(probs, labels, params, l2_lambda);
    };

    std::map<std::string, MatX<double>> analytic_by_name;
    analytic.for_each_tensor([&](const char* name, const auto& g) {
        analytic_by_name[name] = g;
    });

    GradCheckReport report;
    Rng rng(seed);
    // Mutates one coordinate at a time and restores it, so `params` is taken
    // by value and `analytic` stays untouched.
    params.for_each_tensor([&](const char* name, auto& tensor) {
        const MatX<double>& grad = analytic_by_name.at(name);
        const Eigen::Index size = tensor.size();
        std::vector<Eigen::Index> coords;
        if (static_cast<std::size_t>(size) <= samples_per_tensor) {
            for (Eigen::Index i = 0; i < size; ++i) coords.push_back(i);
        } else {
            for (std::size_t i = 0; i < samples_per_tensor; ++i)
                coords.push_back(static_cast<Eigen::Index>(
                    rng.below(static_cast<std::uint64_t>(size))));
        }
        double worst = 0.0;
        for (const Eigen::Index idx : coords) {
            double* coeff = tensor.data() + idx;
            const double saved = *coeff;
            *coeff = saved + epsilon;
            const double up = loss_at();
            *coeff = saved - epsilon;
            const double down = loss_at();
            *coeff = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            worst = std::max(worst, gradcheck_rel_error(*(grad.data() + idx), numeric));
        }
        report.per_tensor[name] = worst;
        report.max_rel_error = std::max(report.max_rel_error, worst);
        report.coords_checked += coords.size();
    });
    return report;
}

/// End-to-end gradient verification: seeds a model and a batch-sized label
/// set, runs backward(), and compares against central finite differences.
/// Dropout is forced off; everything runs in double.
inline GradCheckReport gradient_check(ModelConfig cfg, const MatX<double>& batch,
                                      const std::vector<int>& labels,
                                      double epsilon = 1e-5,
                                      std::size_t samples_per_tensor = 200,
                                      std::uint64_t seed = 7) {
    cfg.dropout_post_cnn = 0.0;
    cfg.dropout_post_lstm = 0.0;
    const ModelParameters<double> params = init_model<double>(cfg, seed);
    ForwardCache<double> cache;
    forward(params, cfg, batch, true, nullptr, &cache);
    const ModelParameters<double> analytic =
        backward(params, cfg, cache, labels, cfg.l2_lambda);
    return finite_difference_check(params, cfg, batch, labels, cfg.l2_lambda, analytic,
                                   epsilon, samples_per_tensor, seed + 1);
}

} // namespace bioenv
