#pragma once

// Least-squares similarity-transform estimation between two 2-D point
// patterns (Umeyama 1991): the closed-form (scale, rotation, translation)
// minimizing sum ||dst_i - (c * R * src_i + t)||^2, with the determinant
// sign correction that forbids reflections.

#include <cmath>
#include <stdexcept>

#include "geoprobe/geometry.hpp"

namespace geoprobe {

struct SimilarityTransform {
    Mat2 rotation;      // orthonormal, det = +1
    Point2 translation;
    double scale = 1.0;  // > 0
};

namespace detail {

struct Svd2 {
    Mat2 u;
    double s1 = 0.0, s2 = 0.0;  // s1 >= s2 >= 0
    Mat2 v;                     // m = u * diag(s1, s2) * v^T
};

// Closed-form SVD of a 2x2 matrix via the rotation/reflection split:
// m = Q*R(a2) + P*R(a1)*diag(1,-1) with Q = hypot(E,H), P = hypot(F,G),
// which yields u = R((a2+a1)/2), v = R((a1-a2)/2), singular values Q+-P.
// A negative second value is absorbed into v's second column.
inline Svd2 svd_2x2(const Mat2& m) {
    const double e = (m.a + m.d) / 2.0;
    const double f = (m.a - m.d) / 2.0;
    const double g = (m.c + m.b) / 2.0;
    const double h = (m.c - m.b) / 2.0;
    const double q = std::hypot(e, h);
    const double p = std::hypot(f, g);
    const double a1 = std::atan2(g, f);
    const double a2 = std::atan2(h, e);
    Svd2 out;
    out.u = Mat2::rotation((a2 + a1) / 2.0);
    out.v = Mat2::rotation((a1 - a2) / 2.0);
    out.s1 = q + p;
    out.s2 = q - p;
    if (out.s2 < 0.0) {
        out.s2 = -out.s2;
        out.v.b = -out.v.b;  // negate second column
        out.v.d = -out.v.d;
    }
    return out;
}

}  // namespace detail

/// Estimate the similarity transform mapping src onto dst. Collinear src is
/// fine (rank-1 cross-covariance takes the determinant-correction branch);
/// all-coincident src has no defined scale and is rejected.
inline SimilarityTransform estimate_similarity(const PointSet2D& src, const PointSet2D& dst) {
    if (src.size() != dst.size())
        throw std::invalid_argument("estimate_similarity: length mismatch");
    if (src.size() < 2)
        throw std::invalid_argument("estimate_similarity: need at least 2 points");
    const double n = static_cast<double>(src.size());

    Point2 mu_src{0, 0}, mu_dst{0, 0};
    for (std::size_t i = 0; i < src.size(); ++i) {
        mu_src.x += src[i].x; mu_src.y += src[i].y;
        mu_dst.x += dst[i].x; mu_dst.y += dst[i].y;
    }
    mu_src.x /= n; mu_src.y /= n;
    mu_dst.x /= n; mu_dst.y /= n;

    double var_src = 0.0;
    Mat2 cov{0, 0, 0, 0};  // (1/n) * sum (dst_i - mu_dst)(src_i - mu_src)^T
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double sx = src[i].x - mu_src.x, sy = src[i].y - mu_src.y;
        const double dx = dst[i].x - mu_dst.x, dy = dst[i].y - mu_dst.y;
        var_src += sx * sx + sy * sy;
        cov.a += dx * sx; cov.b += dx * sy;
        cov.c += dy * sx; cov.d += dy * sy;
    }
    var_src /= n;
    cov.a /= n; cov.b /= n; cov.c /= n; cov.d /= n;
    if (var_src <= 0.0)
        throw std::invalid_argument("estimate_similarity: degenerate src (zero variance)");

    const detail::Svd2 svd = detail::svd_2x2(cov);
    const double d_sign = (svd.u.det() * svd.v.det() < 0.0) ? -1.0 : 1.0;

    Mat2 v_corr = svd.v;  // v * diag(1, d_sign)
    v_corr.b *= d_sign;
    v_corr.d *= d_sign;
    SimilarityTransform t;
    t.rotation = svd.u * v_corr.transposed();
    t.scale = (svd.s1 + d_sign * svd.s2) / var_src;
    if (!(t.scale > 0.0))
        throw std::invalid_argument("estimate_similarity: degenerate configuration (scale <= 0)");
    const Point2 rm = t.rotation.apply(mu_src);
    t.translation = {mu_dst.x - t.scale * rm.x, mu_dst.y - t.scale * rm.y};
    return t;
}

inline Point2 apply_transform(const SimilarityTransform& t, const Point2& p) {
    const Point2 r = t.rotation.apply(p);
    return {t.scale * r.x + t.translation.x, t.scale * r.y + t.translation.y};
}

/// scale * rotation * p + translation for every point.
inline PointSet2D apply_transform(const SimilarityTransform& t, const PointSet2D& pts) {
    PointSet2D out;
    out.reserve(pts.size());
    for (const Point2& p : pts) out.push_back(apply_transform(t, p));
    return out;
}

}  // namespace geoprobe
