#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/tensor.hpp"

namespace iseat::nd {

// |a−b| / max(|a|, |b|, 1e−12)
inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<double> per_coordinate;
    double step = 0.0;
};

// Central-difference gradient of a scalar function, one coordinate at a time.
// Independent of the reverse-mode path by construction; this is the oracle the
// whole numerical test suite leans on.
template <typename T>
Tensor<T> finite_diff_gradient(const std::function<double(const Tensor<T>&)>& f,
                               const Tensor<T>& point, double h) {
    if (!(h > 0)) throw NumericError("finite_diff_gradient: step h must be positive");
    Tensor<T> grad(point.shape());
    Tensor<T> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const T orig = probe[i];
        probe[i] = orig + static_cast<T>(h);
        const double fp = f(probe);
        probe[i] = orig - static_cast<T>(h);
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_gradient: non-finite evaluation at coordinate " +
                               std::to_string(i));
        grad[i] = static_cast<T>((fp - fm) / (2.0 * h));
    }
    return grad;
}

template <typename T>
GradCheckReport compare_gradients(const Tensor<T>& analytic, const Tensor<T>& numeric,
                                  double h) {
    if (!analytic.same_shape(numeric))
        throw ShapeError("compare_gradients: shape mismatch " + analytic.shape_str() + " vs " +
                         numeric.shape_str());
    GradCheckReport rep;
    rep.step = h;
    rep.per_coordinate.resize(analytic.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        rep.per_coordinate[i] = relative_error(static_cast<double>(analytic[i]),
                                               static_cast<double>(numeric[i]));
        rep.max_relative_error = std::max(rep.max_relative_error, rep.per_coordinate[i]);
    }
    return rep;
}

}  // namespace iseat::nd
