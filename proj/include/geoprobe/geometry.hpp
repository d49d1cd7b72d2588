#pragma once

// Small fixed-size 2-D linear algebra used by the MDS and alignment code.

#include <cmath>
#include <vector>

namespace geoprobe {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using PointSet2D = std::vector<Point2>;

inline double euclidean(const Point2& a, const Point2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

struct Mat2 {
    // row-major: [[a, b], [c, d]]
    double a = 1.0, b = 0.0;
    double c = 0.0, d = 1.0;

    static Mat2 identity() { return {}; }
    static Mat2 rotation(double theta) {
        const double ct = std::cos(theta), st = std::sin(theta);
        return {ct, -st, st, ct};
    }

    double det() const { return a * d - b * c; }
    Mat2 transposed() const { return {a, c, b, d}; }

    Point2 apply(const Point2& p) const { return {a * p.x + b * p.y, c * p.x + d * p.y}; }

    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
};

}  // namespace geoprobe
