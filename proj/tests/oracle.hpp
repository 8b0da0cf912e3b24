#pragma once

// Reference implementations the tests check against. Everything here is
// computed in double precision straight from the defining formulas and is
// deliberately kept independent of the code under src/.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

using dvec = std::vector<double>;

inline dvec matmul(const dvec& a, const dvec& b, int64_t m, int64_t k, int64_t n) {
    dvec c(size_t(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t t = 0; t < k; ++t) s += a[size_t(i * k + t)] * b[size_t(t * n + j)];
            c[size_t(i * n + j)] = s;
        }
    return c;
}

inline dvec softmax_row(const dvec& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    dvec y(x.size());
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        s += y[i];
    }
    for (double& v : y) v /= s;
    return y;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

inline dvec layer_norm(const dvec& x, const dvec& g, const dvec& b, double eps) {
    size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= double(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= double(d);
    double inv = 1.0 / std::sqrt(var + eps);
    dvec y(d);
    for (size_t i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * g[i] + b[i];
    return y;
}

// Mean of -log softmax(logits_row)[label] over rows with label >= 0.
inline double cross_entropy(const dvec& logits, const std::vector<int32_t>& labels, int64_t k) {
    double total = 0.0;
    int64_t count = 0;
    for (size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0) continue;
        dvec row(logits.begin() + int64_t(r) * k, logits.begin() + int64_t(r + 1) * k);
        dvec p = softmax_row(row);
        total += -std::log(p[size_t(labels[r])]);
        ++count;
    }
    return total / double(count);
}

// Central finite differences of a scalar functional at x.
inline dvec central_diff(const std::function<double(const dvec&)>& f, dvec x, double h = 1e-3) {
    dvec g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double xi = x[i];
        x[i] = xi + h;
        double fp = f(x);
        x[i] = xi - h;
        double fm = f(x);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Relative error with a floor on the denominator so near-zero references
// don't blow the ratio up.
inline double rel_err(double got, double want, double floor_val = 1e-2) {
    return std::abs(got - want) / std::max(std::abs(want), floor_val);
}

inline double max_rel_err(const std::vector<float>& got, const dvec& want, double floor_val = 1e-2) {
    double worst = 0.0;
    for (size_t i = 0; i < want.size(); ++i) worst = std::max(worst, rel_err(double(got[i]), want[i], floor_val));
    return worst;
}

}  // namespace oracle
