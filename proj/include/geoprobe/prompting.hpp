#pragma once

// Deterministic construction of every prompt string the three tasks use:
// coordinate templates, the instruction template, preposition prompts,
// distance prompts, and k-shot assembly. Prompts end at the incomplete
// word ("... are", "... is near"); the figures' trailing " ..." denotes
// continuation, not literal characters.

#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geoprobe/geodesy.hpp"
#include "geoprobe/random.hpp"

namespace geoprobe {

enum class CoordTemplate { GeoCoordinates = 1, LatitudeLongitude = 2 };
enum class InstructionWording { GeoCoordinates, LatitudeLongitude };
enum class Relation { Near, CloseTo, FarFrom, And };

inline const char* relation_name(Relation r) {
    switch (r) {
        case Relation::Near: return "near";
        case Relation::CloseTo: return "close-to";
        case Relation::FarFrom: return "far-from";
        case Relation::And: return "and";
    }
    return "?";
}

inline Relation relation_from_name(std::string_view s) {
    if (s == "near") return Relation::Near;
    if (s == "close-to") return Relation::CloseTo;
    if (s == "far-from") return Relation::FarFrom;
    if (s == "and") return Relation::And;
    throw std::invalid_argument("unknown relation: " + std::string(s));
}

/// A completed example for coordinate prompts. The coordinate is stored
/// separately from the city so a record can freeze exactly what was shown.
struct CoordinateShot {
    City city;
    GeoCoordinate coordinate;
};

/// A completed example for preposition prompts: a city paired with the
/// neighbor used to finish the sentence.
struct PrepositionShot {
    City city;
    City neighbor;
};

namespace detail {

inline std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string coord_sentence_prefix(const std::string& name, CoordTemplate t) {
    return t == CoordTemplate::GeoCoordinates
               ? "The geo-coordinates of " + name + " are"
               : "The latitude and longitude of " + name + " are";
}

}  // namespace detail

/// Template 1: "The geo-coordinates of <city> are ..."; template 2 swaps
/// in "latitude and longitude". Shots become complete sentences with
/// two-decimal coordinates; the query line stays incomplete.
inline std::string render_coordinate_prompt(const City& city, CoordTemplate tmpl,
                                            std::span<const CoordinateShot> shots = {}) {
    std::string out;
    for (const CoordinateShot& s : shots) {
        if (s.city.name == city.name && s.city.admin1 == city.admin1)
            throw std::invalid_argument("render_coordinate_prompt: shot equals query city");
        out += detail::coord_sentence_prefix(s.city.name, tmpl);
        out += ' ';
        out += detail::two_decimals(s.coordinate.lat_deg);
        out += " and ";
        out += detail::two_decimals(s.coordinate.lon_deg);
        out += ".\n";
    }
    out += detail::coord_sentence_prefix(city.name, tmpl);
    return out;
}

/// The instruction-following block, ending right after "### Response:".
inline std::string render_instruction_prompt(const City& city, InstructionWording wording) {
    const std::string what = wording == InstructionWording::GeoCoordinates
                                 ? "geo-coordinates"
                                 : "latitude and longitude";
    std::string out;
    out += "Below is an instruction that describes a task, paired with an input that "
           "provides further context. Write a response that appropriately completes "
           "the request.\n\n";
    out += "### Instruction:\nProvide the " + what + " of the city given below.\n\n";
    out += "### Input:\n" + city.name + "\n\n";
    out += "### Response:\n";
    return out;
}

namespace detail {

inline std::string city_label(const City& c, bool include_state) {
    return include_state && !c.admin1.empty() ? c.name + ", " + c.admin1 : c.name;
}

inline std::string relation_phrase(Relation r) {
    switch (r) {
        case Relation::Near: return " is near";
        case Relation::CloseTo: return " is close to";
        case Relation::FarFrom: return " is far from";
        case Relation::And: return " and";
    }
    throw std::invalid_argument("bad relation");
}

}  // namespace detail

/// "Albany, New York is near" / "Albany and" and friends. Shots are
/// completed sentences with the same relation wording.
inline std::string render_preposition_prompt(const City& city, Relation relation,
                                             bool include_state,
                                             std::span<const PrepositionShot> shots = {}) {
    std::string out;
    for (const PrepositionShot& s : shots) {
        if (s.city.name == city.name && s.city.admin1 == city.admin1)
            throw std::invalid_argument("render_preposition_prompt: shot equals query city");
        out += detail::city_label(s.city, include_state);
        out += detail::relation_phrase(relation);
        out += ' ';
        out += detail::city_label(s.neighbor, include_state);
        out += ".\n";
    }
    out += detail::city_label(city, include_state);
    out += detail::relation_phrase(relation);
    return out;
}

/// "The distance in kilometers between <a> and <b> is", both cities
/// state-qualified, order preserved as given.
inline std::string render_distance_prompt(const City& a, const City& b) {
    if (a.name == b.name && a.admin1 == b.admin1)
        throw std::invalid_argument("render_distance_prompt: identical cities");
    return "The distance in kilometers between " + a.qualified_name() + " and " +
           b.qualified_name() + " is";
}

// --------------------------------------------------------------------------
// Shot sampling. Coordinate shots draw distinct cities uniformly from the
// dataset (excluding the query). Preposition shots follow the awareness
// setup: sample a city uniformly, pair it with its haversine-nearest
// neighbor in the dataset (query city excluded from both roles).

inline std::vector<CoordinateShot> sample_coordinate_shots(const std::vector<City>& cities,
                                                           std::size_t query_index, int k,
                                                           Rng& rng) {
    if (k < 0) throw std::invalid_argument("sample_coordinate_shots: negative k");
    if (static_cast<std::size_t>(k) + 1 > cities.size())
        throw std::invalid_argument("sample_coordinate_shots: not enough cities");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < cities.size(); ++i)
        if (i != query_index) pool.push_back(i);
    std::vector<CoordinateShot> shots;
    for (int s = 0; s < k; ++s) {
        const std::size_t pick = rng.uniform_index(pool.size());
        const City& c = cities[pool[pick]];
        shots.push_back({c, c.coordinate});
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return shots;
}

inline std::size_t nearest_neighbor(const std::vector<City>& cities, std::size_t of,
                                    std::size_t exclude) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = of;
    for (std::size_t j = 0; j < cities.size(); ++j) {
        if (j == of || j == exclude) continue;
        const double d = haversine_km(cities[of].coordinate, cities[j].coordinate);
        if (d < best) {
            best = d;
            arg = j;
        }
    }
    if (arg == of) throw std::invalid_argument("nearest_neighbor: no candidate");
    return arg;
}

inline std::vector<PrepositionShot> sample_preposition_shots(const std::vector<City>& cities,
                                                             std::size_t query_index, int k,
                                                             Rng& rng) {
    if (k < 0) throw std::invalid_argument("sample_preposition_shots: negative k");
    if (cities.size() < 3 && k > 0)
        throw std::invalid_argument("sample_preposition_shots: not enough cities");
    std::vector<PrepositionShot> shots;
    for (int s = 0; s < k; ++s) {
        std::size_t pick;
        do {
            pick = rng.uniform_index(cities.size());
        } while (pick == query_index);
        const std::size_t nb = nearest_neighbor(cities, pick, query_index);
        shots.push_back({cities[pick], cities[nb]});
    }
    return shots;
}

}  // namespace geoprobe
