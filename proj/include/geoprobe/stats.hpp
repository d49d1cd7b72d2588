#pragma once

// Rank and linear correlation plus error aggregation. Spearman uses
// average ranks for ties; neither coefficient is defined for a constant
// series, which is surfaced as an error rather than silently returned as 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geoprobe/corpus.hpp"
#include "geoprobe/geodesy.hpp"

namespace geoprobe {

struct PairedSeries {
    std::vector<double> xs;
    std::vector<double> ys;

    void validate() const {
        if (xs.size() != ys.size()) throw std::invalid_argument("PairedSeries: length mismatch");
        if (xs.size() < 2) throw std::invalid_argument("PairedSeries: need at least 2 points");
        for (double v : xs)
            if (!std::isfinite(v)) throw std::invalid_argument("PairedSeries: non-finite x");
        for (double v : ys)
            if (!std::isfinite(v)) throw std::invalid_argument("PairedSeries: non-finite y");
    }
};

namespace detail {

/// Average (fractional) ranks, 1-based; ties share the mean of their ranks.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

inline bool constant_series(std::span<const double> v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] != v[0]) return false;
    return true;
}

}  // namespace detail

/// Product-moment correlation coefficient.
inline double pearson_r(const PairedSeries& s) {
    s.validate();
    if (detail::constant_series(s.xs) || detail::constant_series(s.ys))
        throw std::invalid_argument("pearson_r: constant series has undefined correlation");
    const double n = static_cast<double>(s.xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        mx += s.xs[i];
        my += s.ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        const double dx = s.xs[i] - mx, dy = s.ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Pearson correlation of average-ranked values.
inline double spearman_rho(const PairedSeries& s) {
    s.validate();
    if (detail::constant_series(s.xs) || detail::constant_series(s.ys))
        throw std::invalid_argument("spearman_rho: constant series has undefined correlation");
    PairedSeries ranked;
    ranked.xs = detail::average_ranks(s.xs);
    ranked.ys = detail::average_ranks(s.ys);
    return pearson_r(ranked);
}

/// Mean haversine error over (actual, predicted) pairs. Callers pass only
/// parsed predictions; failed parses are excluded from the denominator and
/// counted by prediction_rate instead.
inline double mean_error_km(std::span<const std::pair<GeoCoordinate, GeoCoordinate>> pairs) {
    if (pairs.empty()) throw std::invalid_argument("mean_error_km: empty list");
    double sum = 0.0;
    for (const auto& [actual, predicted] : pairs) sum += haversine_km(actual, predicted);
    return sum / static_cast<double>(pairs.size());
}

// --------------------------------------------------------------------------
// Correlation analysis between generation counts from the awareness task
// and corpus statistics (the five rows: distance/generation,
// co-occurrence/generation, prompt-occurrence/generation,
// generated-occurrence/generation, distance/co-occurrence).

/// One parsed awareness record: the prompt city and the city the model
/// generated for it.
struct GenerationPair {
    int prompt_city = -1;
    int generated_city = -1;
};

struct CorrelationRow {
    double distance_and_generation = 0.0;
    double cooccurrence_and_generation = 0.0;
    double prompt_city_and_generation = 0.0;
    double generated_city_and_generation = 0.0;
    double distance_and_cooccurrence = 0.0;
};

/// Spearman of distance vs co-occurrence over every unordered city pair,
/// independent of any relation.
inline double distance_cooccurrence_rho(const std::vector<City>& cities,
                                        const CountTable& counts) {
    PairedSeries s;
    for (std::size_t i = 0; i < cities.size(); ++i)
        for (std::size_t j = i + 1; j < cities.size(); ++j) {
            s.xs.push_back(haversine_km(cities[i].coordinate, cities[j].coordinate));
            s.ys.push_back(static_cast<double>(
                counts.cooccurrence(static_cast<int>(i), static_cast<int>(j))));
        }
    return spearman_rho(s);
}

/// Generation counts are aggregated per (prompt city, generated city) pair
/// before correlating (one observation per distinct pair).
inline CorrelationRow table3_analysis(std::span<const GenerationPair> records,
                                      const CountTable& counts,
                                      const std::vector<City>& cities) {
    std::map<std::pair<int, int>, double> generation;  // ordered (prompt, generated)
    for (const GenerationPair& r : records) ++generation[{r.prompt_city, r.generated_city}];
    if (generation.size() < 2)
        throw std::invalid_argument("table3_analysis: need at least 2 distinct pairs");

    PairedSeries dist_gen, cooc_gen, prompt_gen, generated_gen;
    for (const auto& [pair, count] : generation) {
        const auto& [p, q] = pair;
        const double d = haversine_km(cities.at(p).coordinate, cities.at(q).coordinate);
        dist_gen.xs.push_back(d);
        dist_gen.ys.push_back(count);
        cooc_gen.xs.push_back(static_cast<double>(counts.cooccurrence(p, q)));
        cooc_gen.ys.push_back(count);
        prompt_gen.xs.push_back(static_cast<double>(counts.occurrence(p)));
        prompt_gen.ys.push_back(count);
        generated_gen.xs.push_back(static_cast<double>(counts.occurrence(q)));
        generated_gen.ys.push_back(count);
    }
    CorrelationRow row;
    row.distance_and_generation = spearman_rho(dist_gen);
    row.cooccurrence_and_generation = spearman_rho(cooc_gen);
    row.prompt_city_and_generation = spearman_rho(prompt_gen);
    row.generated_city_and_generation = spearman_rho(generated_gen);
    row.distance_and_cooccurrence = distance_cooccurrence_rho(cities, counts);
    return row;
}

}  // namespace geoprobe
