#pragma once

// Metric multidimensional scaling via SMACOF (stress majorization with the
// Guttman transform), specialized to 2-D embeddings of unweighted complete
// dissimilarity matrices. The caller supplies the initial configuration;
// there are no random restarts.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "geoprobe/geometry.hpp"

namespace geoprobe {

// Symmetric, zero-diagonal, nonnegative dense matrix of pairwise
// dissimilarities. set() mirrors both triangles so a populated matrix is
// symmetric by construction; validate() re-checks the full invariant.
class DissimilarityMatrix {
  public:
    explicit DissimilarityMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {
        if (n < 2) throw std::invalid_argument("DissimilarityMatrix: need at least 2 points");
    }

    std::size_t size() const { return n_; }

    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }

    void set(std::size_t i, std::size_t j, double v) {
        if (i >= n_ || j >= n_) throw std::out_of_range("DissimilarityMatrix::set");
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("DissimilarityMatrix: entries must be finite and >= 0");
        if (i == j && v != 0.0)
            throw std::invalid_argument("DissimilarityMatrix: diagonal must stay zero");
        values_[i * n_ + j] = v;
        values_[j * n_ + i] = v;
    }

    void validate() const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (values_[i * n_ + i] != 0.0)
                throw std::invalid_argument("DissimilarityMatrix: nonzero diagonal");
            for (std::size_t j = 0; j < n_; ++j) {
                const double v = values_[i * n_ + j];
                if (!std::isfinite(v) || v < 0.0)
                    throw std::invalid_argument("DissimilarityMatrix: bad entry");
                if (v != values_[j * n_ + i])
                    throw std::invalid_argument("DissimilarityMatrix: asymmetric");
            }
        }
    }

    static DissimilarityMatrix from_values(std::size_t n, const std::vector<double>& row_major) {
        if (row_major.size() != n * n)
            throw std::invalid_argument("DissimilarityMatrix: size mismatch");
        DissimilarityMatrix m(n);
        m.values_ = row_major;
        m.validate();
        return m;
    }

    /// Pairwise Euclidean distances of a planar configuration.
    static DissimilarityMatrix from_points(const PointSet2D& pts) {
        DissimilarityMatrix m(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j)
                m.set(i, j, euclidean(pts[i], pts[j]));
        return m;
    }

  private:
    std::size_t n_;
    std::vector<double> values_;
};

struct SmacofConfig {
    int max_iterations = 300;
    double convergence_eps = 1e-9;  // threshold on relative stress decrease
};

struct SmacofResult {
    PointSet2D points;
    double stress = 0.0;
    int iterations = 0;
};

/// sigma(X) = sum over unordered pairs of (delta_ij - d_ij(X))^2.
inline double raw_stress(const DissimilarityMatrix& d, const PointSet2D& x) {
    if (x.size() != d.size()) throw std::invalid_argument("raw_stress: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const double diff = d(i, j) - euclidean(x[i], x[j]);
            s += diff * diff;
        }
    return s;
}

namespace detail {

// One Guttman transform step, X' = (1/n) B(X) X. All weights are 1, so the
// pseudo-inverse V+ reduces to centering scaled by 1/n. Pairs at distance
// zero contribute b_ij = 0 (standard SMACOF convention).
inline PointSet2D guttman_step(const DissimilarityMatrix& d, const PointSet2D& x) {
    const std::size_t n = x.size();
    std::vector<double> b(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double diag = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dist = euclidean(x[i], x[j]);
            const double bij = dist > 0.0 ? -d(i, j) / dist : 0.0;
            b[i * n + j] = bij;
            diag -= bij;
        }
        b[i * n + i] = diag;
    }
    PointSet2D out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sx = 0.0, sy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sx += b[i * n + j] * x[j].x;
            sy += b[i * n + j] * x[j].y;
        }
        out[i] = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
    }
    return out;
}

}  // namespace detail

/// Called as (0, initial stress) and then (k, stress after the k-th Guttman
/// update); lets tests assert per-iteration monotonicity.
using StressCallback = std::function<void(int iteration, double stress)>;

/// Iterate the Guttman transform from `init` until the relative stress
/// decrease |s_k - s_{k+1}| / max(s_k, eps0) drops below convergence_eps or
/// max_iterations is reached. Deterministic: one run from the given init.
inline SmacofResult smacof_fit(const DissimilarityMatrix& d, const PointSet2D& init,
                               const SmacofConfig& cfg = {},
                               const StressCallback& on_iteration = {}) {
    if (init.size() != d.size()) throw std::invalid_argument("smacof_fit: dimension mismatch");
    if (cfg.max_iterations <= 0 || !(cfg.convergence_eps > 0.0))
        throw std::invalid_argument("smacof_fit: bad config");
    bool degenerate = true;
    for (std::size_t i = 1; i < init.size() && degenerate; ++i)
        if (init[i].x != init[0].x || init[i].y != init[0].y) degenerate = false;
    if (degenerate)
        throw std::invalid_argument("smacof_fit: degenerate init (all points coincident)");

    constexpr double kFloor = 1e-30;  // keeps the relative test defined at stress 0
    SmacofResult res;
    res.points = init;
    double stress = raw_stress(d, res.points);
    if (on_iteration) on_iteration(0, stress);
    for (int k = 1; k <= cfg.max_iterations; ++k) {
        res.points = detail::guttman_step(d, res.points);
        const double next = raw_stress(d, res.points);
        res.iterations = k;
        if (on_iteration) on_iteration(k, next);
        const double rel = std::abs(stress - next) / std::max(stress, kFloor);
        stress = next;
        if (rel < cfg.convergence_eps) break;
    }
    res.stress = stress;
    return res;
}

}  // namespace geoprobe
