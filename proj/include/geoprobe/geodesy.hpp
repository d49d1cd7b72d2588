#pragma once

// Coordinates, cities, gazetteer lookup and great-circle distance.
// Every error figure the toolkit reports is a haversine distance in km
// on a sphere of radius kEarthRadiusKm.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geoprobe {

inline constexpr double kEarthRadiusKm = 6371.0;  // mean Earth radius
inline constexpr double kMaxGreatCircleKm = 20015.086796020572;  // pi * R

struct GeoCoordinate {
    double lat_deg = 0.0;
    double lon_deg = 0.0;

    bool valid() const {
        return std::isfinite(lat_deg) && std::isfinite(lon_deg) &&
               lat_deg >= -90.0 && lat_deg <= 90.0 &&
               lon_deg >= -180.0 && lon_deg <= 180.0;
    }
};

struct City {
    std::string name;
    std::string admin1;   // state/region, may be empty
    std::string country;
    GeoCoordinate coordinate;
    long long population = 0;

    /// "Name, Admin1" when a region is present, plain name otherwise.
    std::string qualified_name() const {
        return admin1.empty() ? name : name + ", " + admin1;
    }
};

/// Great-circle distance in kilometers. Symmetric, nonnegative, and
/// bounded by pi * R; clamps the haversine argument against rounding.
inline double haversine_km(const GeoCoordinate& a, const GeoCoordinate& b) {
    if (!a.valid() || !b.valid())
        throw std::invalid_argument("haversine_km: invalid coordinate");
    constexpr double deg = M_PI / 180.0;
    const double lat1 = a.lat_deg * deg, lat2 = b.lat_deg * deg;
    const double dlat = (b.lat_deg - a.lat_deg) * deg;
    const double dlon = (b.lon_deg - a.lon_deg) * deg;
    const double sl = std::sin(dlat / 2.0), so = std::sin(dlon / 2.0);
    double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
    h = std::clamp(h, 0.0, 1.0);
    return kEarthRadiusKm * 2.0 * std::asin(std::sqrt(h));
}

// --------------------------------------------------------------------------
// Name normalization. Matching is case-insensitive (ASCII), whitespace is
// collapsed, and comma spacing is canonicalized so "Troy ,New York" and
// "Troy, New York" compare equal. Bytes outside ASCII pass through
// unchanged: accents must match the dataset.

inline std::string normalize_name(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char ch : s) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (c == ',') {
            pending_space = false;  // drop space before comma
            out.push_back(',');
            pending_space = true;   // force one space after it
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

namespace detail {
// A word character for boundary checks: ASCII alphanumerics plus any
// non-ASCII byte (multi-byte UTF-8 sequences stay inside words).
inline bool is_word_byte(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}
}  // namespace detail

enum class LookupStatus { Found, AmbiguousName, NotFound };

struct LookupResult {
    LookupStatus status = LookupStatus::NotFound;
    int index = -1;                // valid when Found
    std::vector<int> candidates;   // populated when AmbiguousName
};

/// A mention of one or more gazetteer cities found inside running text.
/// `candidates` has a single entry for qualified ("name, admin1") matches
/// and for unique bare names; several entries for ambiguous bare names.
struct CityMention {
    std::size_t position = 0;      // offset in the normalized text
    std::size_t length = 0;
    bool qualified = false;
    std::vector<int> candidates;
};

// --------------------------------------------------------------------------
// Gazetteer: the fixed city universe all tasks operate over, with an alias
// index over normalized "name" and "name, admin1" forms. Ambiguous bare
// names (Albany, NY vs Albany, CA) stay flagged instead of being bound to
// an arbitrary city. Immutable after construction.

class Gazetteer {
  public:
    explicit Gazetteer(std::vector<City> cities) : cities_(std::move(cities)) {
        for (std::size_t i = 0; i < cities_.size(); ++i) {
            const City& c = cities_[i];
            if (c.name.empty())
                throw std::invalid_argument("Gazetteer: empty city name");
            if (!c.coordinate.valid())
                throw std::invalid_argument("Gazetteer: invalid coordinate for " + c.name);
            if (c.population < 0)
                throw std::invalid_argument("Gazetteer: negative population for " + c.name);
            add_alias(normalize_name(c.name), static_cast<int>(i));
            if (!c.admin1.empty())
                add_alias(normalize_name(c.name + ", " + c.admin1), static_cast<int>(i));
        }
        build_match_index();
    }

    const std::vector<City>& cities() const { return cities_; }
    const City& city(int i) const { return cities_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return cities_.size(); }

    /// Resolve a name, optionally qualified by admin1. Ambiguity and absence
    /// are data outcomes, not faults.
    LookupResult lookup(std::string_view name,
                        std::optional<std::string_view> admin1 = std::nullopt) const {
        std::string key = admin1 && !admin1->empty()
                              ? normalize_name(std::string(name) + ", " + std::string(*admin1))
                              : normalize_name(name);
        auto it = aliases_.find(key);
        if (it == aliases_.end()) return {LookupStatus::NotFound, -1, {}};
        if (it->second.size() == 1) return {LookupStatus::Found, it->second.front(), {}};
        return {LookupStatus::AmbiguousName, -1, it->second};
    }

    /// All non-overlapping alias matches in `text`, left to right. At a
    /// given start the longest alias wins, so "Troy, New York" is preferred
    /// over bare "Troy". Positions refer to the normalized text.
    std::vector<CityMention> find_mentions(std::string_view text) const {
        std::vector<CityMention> out;
        const std::string norm = normalize_name(text);
        std::size_t pos = 0;
        const std::size_t n = norm.size();
        while (pos < n) {
            unsigned char c = static_cast<unsigned char>(norm[pos]);
            if (!detail::is_word_byte(c) ||
                (pos > 0 && detail::is_word_byte(static_cast<unsigned char>(norm[pos - 1])))) {
                ++pos;
                continue;
            }
            // pos is at the start of a word
            std::size_t wend = pos;
            while (wend < n && detail::is_word_byte(static_cast<unsigned char>(norm[wend]))) ++wend;
            auto it = first_word_index_.find(norm.substr(pos, wend - pos));
            const Alias* best = nullptr;
            if (it != first_word_index_.end()) {
                for (const std::size_t ai : it->second) {  // sorted longest first
                    const Alias& a = match_aliases_[ai];
                    if (pos + a.text.size() > n) continue;
                    if (norm.compare(pos, a.text.size(), a.text) != 0) continue;
                    std::size_t end = pos + a.text.size();
                    if (end < n && detail::is_word_byte(static_cast<unsigned char>(norm[end])))
                        continue;
                    best = &a;
                    break;
                }
            }
            if (best) {
                out.push_back({pos, best->text.size(), best->qualified, best->candidates});
                pos += best->text.size();
            } else {
                pos = wend;
            }
        }
        return out;
    }

  private:
    struct Alias {
        std::string text;
        bool qualified = false;
        std::vector<int> candidates;
    };

    void add_alias(const std::string& key, int index) {
        auto& v = aliases_[key];
        if (std::find(v.begin(), v.end(), index) == v.end()) v.push_back(index);
    }

    void build_match_index() {
        match_aliases_.reserve(aliases_.size());
        for (const auto& [text, candidates] : aliases_) {
            Alias a;
            a.text = text;
            a.qualified = text.find(',') != std::string::npos;
            a.candidates = candidates;
            match_aliases_.push_back(std::move(a));
        }
        for (std::size_t i = 0; i < match_aliases_.size(); ++i) {
            const std::string& text = match_aliases_[i].text;
            std::size_t wend = 0;
            while (wend < text.size() &&
                   detail::is_word_byte(static_cast<unsigned char>(text[wend])))
                ++wend;
            first_word_index_[text.substr(0, wend)].push_back(i);
        }
        for (auto& [w, list] : first_word_index_)
            std::sort(list.begin(), list.end(), [this](std::size_t x, std::size_t y) {
                const std::string& tx = match_aliases_[x].text;
                const std::string& ty = match_aliases_[y].text;
                if (tx.size() != ty.size()) return tx.size() > ty.size();
                return tx < ty;
            });
    }

    std::vector<City> cities_;
    std::map<std::string, std::vector<int>> aliases_;
    std::vector<Alias> match_aliases_;
    std::unordered_map<std::string, std::vector<std::size_t>> first_word_index_;
};

inline LookupResult gazetteer_lookup(const Gazetteer& g, std::string_view name,
                                     std::optional<std::string_view> admin1 = std::nullopt) {
    return g.lookup(name, admin1);
}

// --------------------------------------------------------------------------
// File formats.
//
// Cities file: CSV, header `name,admin1,country,lat,lon,population`,
// UTF-8, decimal-point floats. Census-division file: CSV, header
// `state,division`, mapping admin1 names to one of the nine US census
// division labels.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double_field(const std::string& s, const char* what, std::size_t lineno) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("cities csv line " + std::to_string(lineno) + ": bad " +
                                 std::string(what) + " '" + s + "'");
    }
}

}  // namespace detail

inline std::vector<City> load_cities_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("cities csv: empty file");
    {
        auto header = detail::split_csv_line(line);
        const std::vector<std::string> want = {"name", "admin1", "country",
                                               "lat",  "lon",    "population"};
        if (std::vector<std::string>(header.begin(), header.end()) != want)
            throw std::runtime_error("cities csv: expected header name,admin1,country,lat,lon,population");
    }
    std::vector<City> cities;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 6)
            throw std::runtime_error("cities csv line " + std::to_string(lineno) +
                                     ": expected 6 fields, got " + std::to_string(f.size()));
        City c;
        c.name = f[0];
        c.admin1 = f[1];
        c.country = f[2];
        c.coordinate.lat_deg = detail::parse_double_field(f[3], "lat", lineno);
        c.coordinate.lon_deg = detail::parse_double_field(f[4], "lon", lineno);
        c.population = static_cast<long long>(detail::parse_double_field(f[5], "population", lineno));
        if (c.name.empty())
            throw std::runtime_error("cities csv line " + std::to_string(lineno) + ": empty name");
        if (!c.coordinate.valid())
            throw std::runtime_error("cities csv line " + std::to_string(lineno) +
                                     ": coordinate out of range");
        if (c.population < 0)
            throw std::runtime_error("cities csv line " + std::to_string(lineno) +
                                     ": negative population");
        cities.push_back(std::move(c));
    }
    return cities;
}

inline std::vector<City> load_cities_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open cities file: " + path);
    return load_cities_csv(f);
}

inline const std::vector<std::string>& census_division_labels() {
    static const std::vector<std::string> labels = {
        "New England",        "Middle Atlantic",    "East North Central",
        "West North Central", "South Atlantic",     "East South Central",
        "West South Central", "Mountain",           "Pacific"};
    return labels;
}

/// Map from normalized state name to census division label.
inline std::map<std::string, std::string> load_divisions_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("divisions csv: empty file");
    {
        auto header = detail::split_csv_line(line);
        if (header != std::vector<std::string>{"state", "division"})
            throw std::runtime_error("divisions csv: expected header state,division");
    }
    const auto& labels = census_division_labels();
    std::map<std::string, std::string> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 2)
            throw std::runtime_error("divisions csv line " + std::to_string(lineno) +
                                     ": expected 2 fields");
        if (std::find(labels.begin(), labels.end(), f[1]) == labels.end())
            throw std::runtime_error("divisions csv line " + std::to_string(lineno) +
                                     ": unknown division '" + f[1] + "'");
        out[normalize_name(f[0])] = f[1];
    }
    return out;
}

inline std::map<std::string, std::string> load_divisions_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open divisions file: " + path);
    return load_divisions_csv(f);
}

}  // namespace geoprobe
