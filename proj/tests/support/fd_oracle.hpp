#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace ccm::testing {

/// Central finite differences over a flat parameter vector: the independent
/// reference every analytic gradient in the project is checked against.
inline std::vector<double> fd_gradient(std::vector<double>& params,
                                       const std::function<double()>& loss,
                                       double h = 1e-4) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = loss();
        params[i] = keep - h;
        const double down = loss();
        params[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// Largest relative error between two gradients, with an absolute floor so
/// near-zero coordinates compare sanely.
inline double max_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace ccm::testing
