#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dht {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double sqnorm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a)
        s += v * v;
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(sqnorm(a)); }

// a += c * b
inline void axpy(Vector& a, double c, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] += c * b[i];
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("sub: size mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        r[i] = a[i] - b[i];
    return r;
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v))
            return false;
    return true;
}

// Dense row-major matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vector data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// y = M x
inline Vector matvec(const Matrix& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.cols)
        throw std::invalid_argument("matvec: size mismatch");
    Vector y(m.rows, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double s = 0.0;
        const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c)
            s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

// Input vector for learners and teachers. When has_bias is set the last
// coordinate is pinned to 1 and never optimized.
struct FeatureVector {
    Vector values;
    bool has_bias = false;

    FeatureVector() = default;
    explicit FeatureVector(Vector v, bool bias = false) : values(std::move(v)), has_bias(bias) {}

    int dim() const { return static_cast<int>(values.size()); }
    // Dimensions a teacher may modify.
    int free_dim() const { return dim() - (has_bias ? 1 : 0); }

    FeatureVector lifted() const {
        if (has_bias)
            return *this;
        Vector v = values;
        v.push_back(1.0);
        return FeatureVector(std::move(v), true);
    }

    void pin_bias() {
        if (has_bias && !values.empty())
            values.back() = 1.0;
    }
};

}  // namespace dht
