#pragma once

// Extract structured values from free-text completions: coordinate pairs,
// place mentions, and distances. Failure is a status, not a fault;
// parsers are total over arbitrary UTF-8.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geoprobe/corpus.hpp"
#include "geoprobe/geodesy.hpp"

namespace geoprobe {

enum class ParseStatus { Parsed, Failed };

/// A parsed place reference; `ambiguous` marks bare-name matches that were
/// resolved by the nearest-candidate rule (kept for audit).
struct PlaceRef {
    int city_index = -1;
    bool ambiguous = false;
};

struct ParseOutcome {
    ParseStatus status = ParseStatus::Failed;
    std::variant<std::monostate, GeoCoordinate, PlaceRef, double> value;
    std::string raw;  // original completion text, always retained

    bool parsed() const { return status == ParseStatus::Parsed; }
    const GeoCoordinate& coordinate() const { return std::get<GeoCoordinate>(value); }
    const PlaceRef& place() const { return std::get<PlaceRef>(value); }
    double km() const { return std::get<double>(value); }

    static ParseOutcome failure(std::string_view raw_text) {
        ParseOutcome o;
        o.raw = std::string(raw_text);
        return o;
    }
};

namespace detail {

inline std::string_view first_sentence(std::string_view text) {
    auto sentences = split_sentences(text);
    return sentences.empty() ? text : sentences.front();
}

struct NumberToken {
    double value = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the number and any degree/direction suffix
};

// Reads a signed decimal at `pos` plus an optional degree sign and an
// optional N/S/E/W suffix (S and W negate). Returns nullopt if `pos` does
// not start a number.
inline std::optional<NumberToken> read_signed_number(std::string_view s, std::size_t pos) {
    std::size_t i = pos;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    std::size_t digits_start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t int_digits = i - digits_start;
    std::size_t frac_digits = 0;
    if (i < s.size() && s[i] == '.') {
        std::size_t j = i + 1;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        frac_digits = j - (i + 1);
        if (frac_digits > 0) i = j;
    }
    if (int_digits == 0 && frac_digits == 0) return std::nullopt;

    NumberToken tok;
    tok.begin = pos;
    {
        std::string slice(s.substr(pos, i - pos));
        tok.value = std::strtod(slice.c_str(), nullptr);
    }
    // optional degree sign (UTF-8 U+00B0), optionally space-separated
    std::size_t j = i;
    while (j < s.size() && s[j] == ' ') ++j;
    if (j + 1 < s.size() && static_cast<unsigned char>(s[j]) == 0xC2 &&
        static_cast<unsigned char>(s[j + 1]) == 0xB0) {
        i = j + 2;
        j = i;
        while (j < s.size() && s[j] == ' ') ++j;
    }
    // optional direction letter with a word boundary after it
    if (j < s.size()) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[j])));
        const bool boundary =
            j + 1 >= s.size() || !geoprobe::detail::is_word_byte(static_cast<unsigned char>(s[j + 1]));
        if (boundary && (c == 'N' || c == 'S' || c == 'E' || c == 'W')) {
            if (c == 'S' || c == 'W') tok.value = -tok.value;
            i = j + 1;
        }
    }
    tok.end = i;
    return tok;
}

inline bool is_number_start(std::string_view s, std::size_t i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isdigit(c)) return true;
    if ((c == '+' || c == '-' || c == '.') && i + 1 < s.size()) {
        const unsigned char n = static_cast<unsigned char>(s[i + 1]);
        if (std::isdigit(n)) return true;
        if ((c == '+' || c == '-') && n == '.' && i + 2 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[i + 2])))
            return true;
    }
    return false;
}

}  // namespace detail

/// First two signed decimal numbers in the first sentence, separated only
/// by "and", a comma, or whitespace. Degree signs and N/S/E/W suffixes are
/// normalized (S/W negate). Parsed iff both are found and in range.
inline ParseOutcome parse_coordinates(std::string_view completion) {
    const std::string_view s = detail::first_sentence(completion);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!detail::is_number_start(s, i)) continue;
        auto first = detail::read_signed_number(s, i);
        if (!first) continue;
        // separator region: whitespace, ',', or the word "and"
        std::size_t j = first->end;
        bool ok = true;
        while (j < s.size() && !detail::is_number_start(s, j)) {
            const unsigned char c = static_cast<unsigned char>(s[j]);
            if (std::isspace(c) || c == ',') {
                ++j;
            } else if ((c == 'a' || c == 'A') && j + 2 < s.size() &&
                       std::tolower(static_cast<unsigned char>(s[j + 1])) == 'n' &&
                       std::tolower(static_cast<unsigned char>(s[j + 2])) == 'd') {
                j += 3;
            } else {
                ok = false;
                break;
            }
        }
        if (!ok || j >= s.size()) break;
        auto second = detail::read_signed_number(s, j);
        if (!second) break;
        GeoCoordinate coord{first->value, second->value};
        if (!coord.valid()) break;
        ParseOutcome o;
        o.status = ParseStatus::Parsed;
        o.value = coord;
        o.raw = std::string(completion);
        return o;
    }
    return ParseOutcome::failure(completion);
}

/// Earliest gazetteer mention in the completion, resolved to a city index.
/// Mentions of the prompt city itself are skipped (including ambiguous bare
/// names that could mean the prompt city count as prompt echoes); other
/// ambiguous bare names resolve to the candidate nearest the prompt city.
inline ParseOutcome parse_place(std::string_view completion, const Gazetteer& g,
                                int prompt_city_index) {
    const City& prompt_city = g.city(prompt_city_index);
    for (const CityMention& m : g.find_mentions(completion)) {
        bool mentions_prompt = false;
        for (int c : m.candidates)
            if (c == prompt_city_index) mentions_prompt = true;
        if (mentions_prompt) continue;
        PlaceRef ref;
        if (m.candidates.size() == 1) {
            ref.city_index = m.candidates.front();
        } else {
            ref.ambiguous = true;
            double best = std::numeric_limits<double>::infinity();
            for (int c : m.candidates) {
                const double d = haversine_km(prompt_city.coordinate, g.city(c).coordinate);
                if (d < best) {
                    best = d;
                    ref.city_index = c;
                }
            }
        }
        ParseOutcome o;
        o.status = ParseStatus::Parsed;
        o.value = ref;
        o.raw = std::string(completion);
        return o;
    }
    return ParseOutcome::failure(completion);
}

/// First nonnegative number in the first sentence, thousands separators
/// stripped. Values beyond any great-circle distance (> 25,000 km) fail.
inline ParseOutcome parse_distance_km(std::string_view completion) {
    const std::string_view s = detail::first_sentence(completion);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) continue;
        if (i > 0) {
            const unsigned char prev = static_cast<unsigned char>(s[i - 1]);
            if (prev == '-' || prev == '.' || std::isdigit(prev)) {
                // inside or right after another token (or negative): skip it
                while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) ||
                                        s[i] == '.' || s[i] == ','))
                    ++i;
                continue;
            }
        }
        std::string digits;
        std::size_t j = i;
        while (j < s.size()) {
            const char c = s[j];
            if (std::isdigit(static_cast<unsigned char>(c))) {
                digits.push_back(c);
                ++j;
            } else if (c == ',' && j + 3 < s.size() &&
                       std::isdigit(static_cast<unsigned char>(s[j + 1])) &&
                       std::isdigit(static_cast<unsigned char>(s[j + 2])) &&
                       std::isdigit(static_cast<unsigned char>(s[j + 3])) &&
                       (j + 4 >= s.size() ||
                        !std::isdigit(static_cast<unsigned char>(s[j + 4])))) {
                // thousands separator: comma followed by exactly a 3-digit group
                digits.append({s[j + 1], s[j + 2], s[j + 3]});
                j += 4;
            } else {
                break;
            }
        }
        if (j < s.size() && s[j] == '.' && j + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
            digits.push_back('.');
            ++j;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
                digits.push_back(s[j]);
                ++j;
            }
        }
        const double km = std::strtod(digits.c_str(), nullptr);
        if (km > 25000.0) return ParseOutcome::failure(completion);
        ParseOutcome o;
        o.status = ParseStatus::Parsed;
        o.value = km;
        o.raw = std::string(completion);
        return o;
    }
    return ParseOutcome::failure(completion);
}

/// Fraction of outcomes that parsed.
inline double prediction_rate(std::span<const ParseOutcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("prediction_rate: empty list");
    std::size_t parsed = 0;
    for (const ParseOutcome& o : outcomes)
        if (o.parsed()) ++parsed;
    return static_cast<double>(parsed) / static_cast<double>(outcomes.size());
}

}  // namespace geoprobe
