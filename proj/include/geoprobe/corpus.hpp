#pragma once

// Streaming occurrence / sentence-level co-occurrence counting of gazetteer
// cities over a line-delimited plain-text corpus. Input may be gzip
// compressed (detected by magic bytes). Memory stays bounded by the
// gazetteer size, not the corpus size.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "geoprobe/geodesy.hpp"

namespace geoprobe {

// --------------------------------------------------------------------------
// Sentence splitting. Sentences end at '.', '!' or '?' followed by
// whitespace or end-of-text, and at newlines. A short abbreviation guard
// list ("St.", "Mt.", "U.S.", ...) suppresses splits after common
// abbreviations; the list is fixed and documented here, not configurable.

namespace detail {

inline const std::unordered_set<std::string>& abbreviation_guards() {
    static const std::unordered_set<std::string> guards = {
        "st", "mt", "mr", "mrs", "ms", "dr", "jr", "sr", "vs", "prof",
        "u.s", "u.k", "d.c", "e.g", "i.e"};
    return guards;
}

inline bool guarded_abbreviation(std::string_view text, std::size_t dot) {
    // token = run of letters and '.' immediately before text[dot]
    std::size_t begin = dot;
    while (begin > 0) {
        unsigned char c = static_cast<unsigned char>(text[begin - 1]);
        if (std::isalpha(c) || c == '.') --begin; else break;
    }
    if (begin == dot) return false;
    std::string token;
    token.reserve(dot - begin);
    for (std::size_t i = begin; i < dot; ++i)
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    while (!token.empty() && token.front() == '.') token.erase(token.begin());
    return abbreviation_guards().count(token) > 0;
}

}  // namespace detail

/// Split text into sentences (terminators included, surrounding whitespace
/// trimmed, empty segments dropped).
inline std::vector<std::string_view> split_sentences(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        std::size_t b = start, e = end;
        while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
        if (e > b) out.push_back(text.substr(b, e - b));
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            flush(i);
            start = i + 1;
            continue;
        }
        if (c == '!' || c == '?' || c == '.') {
            const bool at_end = i + 1 == text.size();
            const bool before_space =
                !at_end && std::isspace(static_cast<unsigned char>(text[i + 1]));
            if (!at_end && !before_space) continue;
            if (c == '.' && detail::guarded_abbreviation(text, i)) continue;
            flush(i + 1);
        }
    }
    flush(text.size());
    return out;
}

// --------------------------------------------------------------------------

struct CountTable {
    std::map<int, std::uint64_t> occurrences;                       // city index -> count
    std::map<std::pair<int, int>, std::uint64_t> cooccurrences;     // unordered (i<j) -> count
    std::uint64_t sentences_processed = 0;

    std::uint64_t occurrence(int city) const {
        auto it = occurrences.find(city);
        return it == occurrences.end() ? 0 : it->second;
    }

    std::uint64_t cooccurrence(int a, int b) const {
        if (a > b) std::swap(a, b);
        auto it = cooccurrences.find({a, b});
        return it == cooccurrences.end() ? 0 : it->second;
    }

    /// Associative, commutative merge; partitioned counts over disjoint
    /// line ranges combine into the single-pass result.
    void merge(const CountTable& other) {
        for (const auto& [k, v] : other.occurrences) occurrences[k] += v;
        for (const auto& [k, v] : other.cooccurrences) cooccurrences[k] += v;
        sentences_processed += other.sentences_processed;
    }
};

/// Raw corpus text has no prompt city to disambiguate against, so a bare
/// "Albany" either credits every candidate city or is skipped entirely.
enum class AmbiguousNamePolicy { CreditAll, Skip };

/// Count one sentence into `table`: every distinct mentioned city once,
/// every unordered pair of distinct mentioned cities once.
inline void count_sentence(std::string_view sentence, const Gazetteer& g, CountTable& table,
                           AmbiguousNamePolicy policy = AmbiguousNamePolicy::CreditAll) {
    std::set<int> mentioned;
    for (const CityMention& m : g.find_mentions(sentence)) {
        if (m.candidates.size() > 1 && policy == AmbiguousNamePolicy::Skip) continue;
        mentioned.insert(m.candidates.begin(), m.candidates.end());
    }
    for (int c : mentioned) ++table.occurrences[c];
    for (auto a = mentioned.begin(); a != mentioned.end(); ++a)
        for (auto b = std::next(a); b != mentioned.end(); ++b)
            ++table.cooccurrences[{*a, *b}];
    ++table.sentences_processed;
}

inline void count_line(std::string_view line, const Gazetteer& g, CountTable& table,
                       AmbiguousNamePolicy policy = AmbiguousNamePolicy::CreditAll) {
    for (std::string_view s : split_sentences(line)) count_sentence(s, g, table, policy);
}

/// Stream a plain-text corpus (one document or paragraph per line;
/// sentences never span lines). Counts occurrences and sentence-level
/// co-occurrences of gazetteer cities.
inline CountTable count_corpus(std::istream& in, const Gazetteer& g,
                               AmbiguousNamePolicy policy = AmbiguousNamePolicy::CreditAll) {
    CountTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (in.bad()) break;
        count_line(line, g, table, policy);
    }
    if (in.bad()) throw std::runtime_error("count_corpus: unreadable input stream");
    return table;
}

// --------------------------------------------------------------------------
// gzip support: file inputs are sniffed for the 1f 8b magic and inflated
// on the fly in fixed-size chunks.

namespace detail {

class GzipLineReader {
  public:
    explicit GzipLineReader(std::istream& in) : in_(in) {
        stream_.zalloc = Z_NULL;
        stream_.zfree = Z_NULL;
        stream_.opaque = Z_NULL;
        if (inflateInit2(&stream_, 15 + 16) != Z_OK)
            throw std::runtime_error("gzip: inflateInit failed");
    }
    ~GzipLineReader() { inflateEnd(&stream_); }
    GzipLineReader(const GzipLineReader&) = delete;
    GzipLineReader& operator=(const GzipLineReader&) = delete;

    bool getline(std::string& line) {
        line.clear();
        while (true) {
            auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                buffer_.erase(0, nl + 1);
                return true;
            }
            if (finished_) {
                if (buffer_.empty()) return false;
                line.swap(buffer_);
                buffer_.clear();
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
            inflate_more();
        }
    }

  private:
    void inflate_more() {
        if (stream_.avail_in == 0) {
            in_.read(in_buf_.data(), static_cast<std::streamsize>(in_buf_.size()));
            const auto got = in_.gcount();
            if (got <= 0) {
                if (in_.bad()) throw std::runtime_error("gzip: unreadable input stream");
                finished_ = true;
                return;
            }
            stream_.next_in = reinterpret_cast<Bytef*>(in_buf_.data());
            stream_.avail_in = static_cast<uInt>(got);
        }
        stream_.next_out = reinterpret_cast<Bytef*>(out_buf_.data());
        stream_.avail_out = static_cast<uInt>(out_buf_.size());
        const int rc = inflate(&stream_, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END)
            throw std::runtime_error("gzip: corrupt stream");
        buffer_.append(out_buf_.data(), out_buf_.size() - stream_.avail_out);
        if (rc == Z_STREAM_END) finished_ = true;
    }

    std::istream& in_;
    z_stream stream_{};
    std::array<char, 1 << 16> in_buf_{};
    std::array<char, 1 << 16> out_buf_{};
    std::string buffer_;
    bool finished_ = false;
};

}  // namespace detail

/// Count a corpus file, transparently inflating gzip input.
inline CountTable count_corpus_file(const std::string& path, const Gazetteer& g,
                                    AmbiguousNamePolicy policy = AmbiguousNamePolicy::CreditAll) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open corpus file: " + path);
    const int c0 = f.get(), c1 = f.get();
    f.clear();
    f.seekg(0);
    if (c0 == 0x1f && c1 == 0x8b) {
        detail::GzipLineReader reader(f);
        CountTable table;
        std::string line;
        while (reader.getline(line)) count_line(line, g, table, policy);
        return table;
    }
    return count_corpus(f, g, policy);
}

}  // namespace geoprobe
