#pragma once

// Location prediction from a dissimilarity measure, end to end: build a
// dissimilarity matrix over known cities plus one test city, embed with
// SMACOF (init = known coordinates plus their mean), estimate a similarity
// transform from the embedded known points onto the known coordinates, and
// map the embedded test point to a predicted coordinate. Geo-coordinates
// are treated as planar (lat, lon) points for the embedding init and the
// alignment target; reported errors are haversine km.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geoprobe/alignment.hpp"
#include "geoprobe/geodesy.hpp"
#include "geoprobe/mds.hpp"
#include "geoprobe/random.hpp"

namespace geoprobe {

/// count > 0 -> 1/count; count = 0 -> cap (the configured stand-in for
/// "never observed together", by default twice the largest reciprocal).
inline double reciprocal_dissimilarity(std::uint64_t count, double zero_policy_cap) {
    if (!(zero_policy_cap > 0.0))
        throw std::invalid_argument("reciprocal_dissimilarity: cap must be > 0");
    return count > 0 ? 1.0 / static_cast<double>(count) : zero_policy_cap;
}

/// Default zero-count cap: twice the reciprocal of the smallest positive
/// count (never-co-occurring pairs read as twice as dissimilar as the
/// rarest observed pair). 1.0 when no positive counts exist.
inline double default_zero_count_cap(std::span<const std::uint64_t> counts) {
    std::uint64_t min_positive = 0;
    for (std::uint64_t c : counts)
        if (c > 0 && (min_positive == 0 || c < min_positive)) min_positive = c;
    return min_positive == 0 ? 1.0 : 2.0 / static_cast<double>(min_positive);
}

/// Directional counts (a -> b) collapsed onto unordered pairs by summing
/// both directions; missing directions count as zero.
inline std::map<std::pair<int, int>, std::uint64_t> symmetrize_counts(
    const std::map<std::pair<int, int>, std::uint64_t>& directional) {
    std::map<std::pair<int, int>, std::uint64_t> out;
    for (const auto& [key, count] : directional) {
        auto [a, b] = key;
        if (a > b) std::swap(a, b);
        out[{a, b}] += count;
    }
    return out;
}

// --------------------------------------------------------------------------
// Dissimilarity providers. Most are pure pairwise functions of the two
// cities; the random baseline needs the whole instance (its range is the
// maximum actual distance among the known cities).

class DissimilarityProvider {
  public:
    virtual ~DissimilarityProvider() = default;
    virtual std::string name() const = 0;

    /// (n+1) x (n+1) matrix over known cities plus the test city (last).
    virtual DissimilarityMatrix build(std::span<const City> known, const City& test) const = 0;
};

namespace detail {

template <typename PairFn>
DissimilarityMatrix build_from_pairs(std::span<const City> known, const City& test, PairFn&& fn) {
    const std::size_t n = known.size() + 1;
    DissimilarityMatrix m(n);
    auto city_at = [&](std::size_t i) -> const City& {
        return i < known.size() ? known[i] : test;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, fn(city_at(i), city_at(j)));
    return m;
}

// Unordered pair key on qualified city names.
inline std::pair<std::string, std::string> pair_key(const City& a, const City& b) {
    std::string ka = normalize_name(a.qualified_name());
    std::string kb = normalize_name(b.qualified_name());
    if (kb < ka) std::swap(ka, kb);
    return {std::move(ka), std::move(kb)};
}

// FNV-1a over bytes; stable across platforms, used to derive per-instance
// random streams from (seed, test city).
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

class ActualDistanceProvider final : public DissimilarityProvider {
  public:
    std::string name() const override { return "actual"; }
    DissimilarityMatrix build(std::span<const City> known, const City& test) const override {
        return detail::build_from_pairs(known, test, [](const City& a, const City& b) {
            return haversine_km(a.coordinate, b.coordinate);
        });
    }
};

/// Precomputed pairwise table (predicted distances, reciprocal counts, ...)
/// keyed by unordered qualified city names. A missing pair is an error:
/// tables must be completed (with any fallback policy applied) upstream.
class TableProvider final : public DissimilarityProvider {
  public:
    using Table = std::map<std::pair<std::string, std::string>, double>;

    TableProvider(std::string name, Table values)
        : name_(std::move(name)), values_(std::move(values)) {}

    std::string name() const override { return name_; }

    DissimilarityMatrix build(std::span<const City> known, const City& test) const override {
        return detail::build_from_pairs(known, test, [this](const City& a, const City& b) {
            auto it = values_.find(detail::pair_key(a, b));
            if (it == values_.end())
                throw std::invalid_argument("dissimilarity table missing pair: " +
                                            a.qualified_name() + " / " + b.qualified_name());
            return it->second;
        });
    }

  private:
    std::string name_;
    Table values_;
};

/// Uniform draws from [0, d_max], d_max being the largest actual pairwise
/// distance among the known cities. The stream is derived from (seed, test
/// city name, n) so a given instance reproduces bit-identically no matter
/// when it is built.
class RandomDistanceProvider final : public DissimilarityProvider {
  public:
    explicit RandomDistanceProvider(std::uint64_t seed) : seed_(seed) {}

    std::string name() const override { return "random"; }

    DissimilarityMatrix build(std::span<const City> known, const City& test) const override {
        double d_max = 0.0;
        for (std::size_t i = 0; i < known.size(); ++i)
            for (std::size_t j = i + 1; j < known.size(); ++j)
                d_max = std::max(d_max, haversine_km(known[i].coordinate, known[j].coordinate));
        Rng rng(mix_seed(seed_, detail::fnv1a(test.qualified_name()) ^ known.size()));
        const std::size_t n = known.size() + 1;
        DissimilarityMatrix m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, rng.uniform(0.0, d_max));
        return m;
    }

  private:
    std::uint64_t seed_;
};

/// Builds the instance matrix for Algorithm 1: known cities first, test
/// city last, provider-defined entries, invariants enforced on return.
inline DissimilarityMatrix build_dissimilarity(std::span<const City> known, const City& test,
                                               const DissimilarityProvider& provider) {
    if (known.empty()) throw std::invalid_argument("build_dissimilarity: no known cities");
    DissimilarityMatrix m = provider.build(known, test);
    if (m.size() != known.size() + 1)
        throw std::invalid_argument("build_dissimilarity: provider returned wrong size");
    m.validate();
    return m;
}

// --------------------------------------------------------------------------

enum class AlignmentMode {
    StandardUmeyama,   // apply the estimated transform directly
    ExactPseudocode,   // re-center all embedded points by their overall mean first
};

enum class EvaluationScope { Contiguous, Divisions };

struct GeoPrediction {
    GeoCoordinate coordinate;  // clamped to valid ranges
    double raw_lat = 0.0;      // untouched transform output, for diagnostics
    double raw_lon = 0.0;
    bool clamped = false;
};

/// Algorithm core: embed the (n+1)-point matrix from the known-coordinate
/// init and map the embedded test point onto geo-coordinates.
///
/// The two modes differ in how the estimated transform is applied. The
/// pseudocode re-centers all n+1 embedded points by their overall mean
/// before scaling/rotating/translating, although the translation was
/// estimated from the n known points only; StandardUmeyama (default) skips
/// that re-centering and is the self-consistent form. The numerical
/// difference is O(1/n).
inline GeoPrediction predict_geo_coordinates(std::span<const City> known,
                                             const DissimilarityMatrix& d,
                                             AlignmentMode mode = AlignmentMode::StandardUmeyama,
                                             const SmacofConfig& cfg = {}) {
    const std::size_t n = known.size();
    if (n < 3) throw std::invalid_argument("predict_geo_coordinates: need at least 3 known cities");
    if (d.size() != n + 1)
        throw std::invalid_argument("predict_geo_coordinates: matrix must be (n+1)x(n+1)");

    PointSet2D known_pts;
    known_pts.reserve(n);
    Point2 mean{0.0, 0.0};
    for (const City& c : known) {
        known_pts.push_back({c.coordinate.lat_deg, c.coordinate.lon_deg});
        mean.x += c.coordinate.lat_deg;
        mean.y += c.coordinate.lon_deg;
    }
    mean.x /= static_cast<double>(n);
    mean.y /= static_cast<double>(n);

    PointSet2D init = known_pts;
    init.push_back(mean);  // the test city starts at the mean of the known ones

    const SmacofResult fit = smacof_fit(d, init, cfg);

    PointSet2D embedded_known(fit.points.begin(), fit.points.end() - 1);
    const SimilarityTransform t = estimate_similarity(embedded_known, known_pts);

    Point2 test_pt = fit.points.back();
    if (mode == AlignmentMode::ExactPseudocode) {
        Point2 all_mean{0.0, 0.0};
        for (const Point2& p : fit.points) {
            all_mean.x += p.x;
            all_mean.y += p.y;
        }
        all_mean.x /= static_cast<double>(fit.points.size());
        all_mean.y /= static_cast<double>(fit.points.size());
        test_pt = {test_pt.x - all_mean.x, test_pt.y - all_mean.y};
    }
    const Point2 mapped = apply_transform(t, test_pt);

    GeoPrediction out;
    out.raw_lat = mapped.x;
    out.raw_lon = mapped.y;
    out.coordinate.lat_deg = std::clamp(mapped.x, -90.0, 90.0);
    out.coordinate.lon_deg = std::clamp(mapped.y, -180.0, 180.0);
    out.clamped = out.coordinate.lat_deg != mapped.x || out.coordinate.lon_deg != mapped.y;
    return out;
}

struct ReasoningResult {
    struct PerCity {
        int city_index = -1;
        GeoCoordinate predicted;
        double error_km = 0.0;
        bool clamped = false;
        double raw_lat = 0.0;  // transform output before clamping
        double raw_lon = 0.0;
    };
    std::vector<PerCity> per_city;  // sorted by city_index
    double mean_error_km = 0.0;
    EvaluationScope scope = EvaluationScope::Contiguous;
    std::vector<std::string> warnings;
};

/// Leave-one-out over every city. Contiguous keeps all other cities as the
/// known set; Divisions restricts it to the test city's census division
/// (divisions smaller than 4 cities are skipped with a warning).
inline ReasoningResult evaluate_scope(const std::vector<City>& cities,
                                      const std::map<std::string, std::string>& divisions,
                                      const DissimilarityProvider& provider,
                                      EvaluationScope scope,
                                      AlignmentMode mode = AlignmentMode::StandardUmeyama,
                                      const SmacofConfig& cfg = {}) {
    if (cities.size() < 4) throw std::invalid_argument("evaluate_scope: need at least 4 cities");
    ReasoningResult result;
    result.scope = scope;

    std::vector<std::vector<int>> groups;
    if (scope == EvaluationScope::Contiguous) {
        std::vector<int> all(cities.size());
        for (std::size_t i = 0; i < cities.size(); ++i) all[i] = static_cast<int>(i);
        groups.push_back(std::move(all));
    } else {
        std::map<std::string, std::vector<int>> by_division;
        for (std::size_t i = 0; i < cities.size(); ++i) {
            auto it = divisions.find(normalize_name(cities[i].admin1));
            if (it == divisions.end())
                throw std::invalid_argument("evaluate_scope: no division for state '" +
                                            cities[i].admin1 + "'");
            by_division[it->second].push_back(static_cast<int>(i));
        }
        for (auto& [label, members] : by_division) {
            if (members.size() < 4) {
                result.warnings.push_back("division '" + label + "' skipped: only " +
                                          std::to_string(members.size()) + " cities (< 4)");
                continue;
            }
            groups.push_back(std::move(members));
        }
    }

    for (const auto& group : groups) {
        for (int test_index : group) {
            std::vector<City> known;
            known.reserve(group.size() - 1);
            for (int i : group)
                if (i != test_index) known.push_back(cities[static_cast<std::size_t>(i)]);
            const City& test = cities[static_cast<std::size_t>(test_index)];
            const DissimilarityMatrix m = build_dissimilarity(known, test, provider);
            const GeoPrediction pred = predict_geo_coordinates(known, m, mode, cfg);
            ReasoningResult::PerCity pc;
            pc.city_index = test_index;
            pc.predicted = pred.coordinate;
            pc.error_km = haversine_km(test.coordinate, pred.coordinate);
            pc.clamped = pred.clamped;
            pc.raw_lat = pred.raw_lat;
            pc.raw_lon = pred.raw_lon;
            result.per_city.push_back(pc);
        }
    }

    std::sort(result.per_city.begin(), result.per_city.end(),
              [](const auto& a, const auto& b) { return a.city_index < b.city_index; });
    if (result.per_city.empty())
        throw std::invalid_argument("evaluate_scope: nothing evaluated (all divisions skipped?)");
    double sum = 0.0;
    for (const auto& pc : result.per_city) sum += pc.error_km;
    result.mean_error_km = sum / static_cast<double>(result.per_city.size());
    return result;
}

}  // namespace geoprobe
