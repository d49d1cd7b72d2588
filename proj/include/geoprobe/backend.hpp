#pragma once

// The generation boundary: a uniform interface over any autoregressive
// text generator. Two implementations ship: a remote HTTP client speaking
// the wire protocol below, and a deterministic mock driven by ordered
// prefix-match rules (the test double for every experiment).
//
// Wire protocol: POST {base_url}/generate with JSON body
//   {"prompt": string, "params": {"strategy": "beam_search"|"top_k",
//    "num_beams"?: int, "top_k"?: int, "temperature"?: float,
//    "max_new_tokens": int, "num_return_sequences": int, "seed"?: int}}
// -> 200 with {"completions": [string, ...]}. Any other status is a
// backend error with the body preserved in the message.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoprobe/parsing.hpp"

namespace geoprobe {

class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class DecodingStrategy { BeamSearch, TopKSampling };

struct DecodingParams {
    DecodingStrategy strategy = DecodingStrategy::BeamSearch;
    std::optional<int> num_beams;     // BeamSearch only
    std::optional<int> top_k;         // TopKSampling only
    std::optional<double> temperature;  // TopKSampling only
    int max_new_tokens = 32;
    int num_return_sequences = 1;
    std::optional<std::int64_t> seed;

    static DecodingParams beam_search(int beams, int max_tokens = 32, int sequences = 1) {
        DecodingParams p;
        p.strategy = DecodingStrategy::BeamSearch;
        p.num_beams = beams;
        p.max_new_tokens = max_tokens;
        p.num_return_sequences = sequences;
        return p;
    }

    static DecodingParams top_k_sampling(int k, double temperature, int max_tokens = 24,
                                         int sequences = 1) {
        DecodingParams p;
        p.strategy = DecodingStrategy::TopKSampling;
        p.top_k = k;
        p.temperature = temperature;
        p.max_new_tokens = max_tokens;
        p.num_return_sequences = sequences;
        return p;
    }

    void validate() const {
        if (max_new_tokens <= 0) throw std::invalid_argument("DecodingParams: max_new_tokens");
        if (num_return_sequences <= 0)
            throw std::invalid_argument("DecodingParams: num_return_sequences");
        if (strategy == DecodingStrategy::BeamSearch) {
            if (!num_beams || *num_beams <= 0)
                throw std::invalid_argument("DecodingParams: beam search needs num_beams > 0");
            if (top_k || temperature)
                throw std::invalid_argument("DecodingParams: top_k fields on beam search");
            if (num_return_sequences > *num_beams)
                throw std::invalid_argument(
                    "DecodingParams: num_return_sequences exceeds num_beams");
        } else {
            if (!top_k || *top_k <= 0)
                throw std::invalid_argument("DecodingParams: top-k sampling needs top_k > 0");
            if (!temperature || !(*temperature > 0.0))
                throw std::invalid_argument("DecodingParams: top-k sampling needs temperature > 0");
            if (num_beams)
                throw std::invalid_argument("DecodingParams: num_beams on top-k sampling");
        }
    }
};

inline void to_json(nlohmann::json& j, const DecodingParams& p) {
    j = nlohmann::json::object();
    j["strategy"] = p.strategy == DecodingStrategy::BeamSearch ? "beam_search" : "top_k";
    if (p.num_beams) j["num_beams"] = *p.num_beams;
    if (p.top_k) j["top_k"] = *p.top_k;
    if (p.temperature) j["temperature"] = *p.temperature;
    j["max_new_tokens"] = p.max_new_tokens;
    j["num_return_sequences"] = p.num_return_sequences;
    if (p.seed) j["seed"] = *p.seed;
}

inline void from_json(const nlohmann::json& j, DecodingParams& p) {
    const std::string strategy = j.at("strategy").get<std::string>();
    if (strategy == "beam_search")
        p.strategy = DecodingStrategy::BeamSearch;
    else if (strategy == "top_k")
        p.strategy = DecodingStrategy::TopKSampling;
    else
        throw std::invalid_argument("DecodingParams: unknown strategy " + strategy);
    p.num_beams = p.top_k = std::nullopt;
    p.temperature = std::nullopt;
    p.seed = std::nullopt;
    if (j.contains("num_beams")) p.num_beams = j.at("num_beams").get<int>();
    if (j.contains("top_k")) p.top_k = j.at("top_k").get<int>();
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    p.max_new_tokens = j.at("max_new_tokens").get<int>();
    p.num_return_sequences = j.at("num_return_sequences").get<int>();
    if (j.contains("seed")) p.seed = j.at("seed").get<std::int64_t>();
}

// --------------------------------------------------------------------------

class GenerationBackend {
  public:
    virtual ~GenerationBackend() = default;

    /// Returns exactly params.num_return_sequences completions.
    virtual std::vector<std::string> generate(const std::string& prompt,
                                              const DecodingParams& params) = 0;

    /// Resume support: observe a previously persisted exchange without
    /// generating, so stateful backends (mock rule cycling) stay aligned
    /// with a fresh full run. Default: nothing to do.
    virtual void note_replayed(const std::string& /*prompt*/, std::size_t /*completions*/) {}

    /// How many non-idempotent retries happened on the last generate call.
    virtual int last_retries() const { return 0; }
};

// --------------------------------------------------------------------------
// Mock backend: ordered prefix-match rules, first match wins. Each rule
// cycles through its completion list across repeated calls, which emulates
// drawing several samples per prompt without any randomness.
//
// Rules file: JSON array of {"prompt_prefix": string, "completions":
// [string, ...]}.

class MockBackend : public GenerationBackend {
  public:
    struct Rule {
        std::string prompt_prefix;
        std::vector<std::string> completions;
    };

    MockBackend(std::initializer_list<Rule> rules)
        : MockBackend(std::vector<Rule>(rules)) {}

    explicit MockBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            if (rules_[i].completions.empty())
                throw std::invalid_argument("MockBackend: rule without completions: " +
                                            rules_[i].prompt_prefix);
            for (std::size_t j = i + 1; j < rules_.size(); ++j)
                if (rules_[i].prompt_prefix == rules_[j].prompt_prefix)
                    throw std::invalid_argument("MockBackend: duplicate prompt_prefix: " +
                                                rules_[i].prompt_prefix);
        }
        next_.assign(rules_.size(), 0);
    }

    std::vector<std::string> generate(const std::string& prompt,
                                      const DecodingParams& params) override {
        params.validate();
        std::lock_guard<std::mutex> lock(mutex_);
        const std::size_t r = match(prompt);
        std::vector<std::string> out;
        out.reserve(static_cast<std::size_t>(params.num_return_sequences));
        for (int k = 0; k < params.num_return_sequences; ++k) out.push_back(take(r));
        return out;
    }

    void note_replayed(const std::string& prompt, std::size_t completions) override {
        std::lock_guard<std::mutex> lock(mutex_);
        const std::size_t r = match(prompt);
        next_[r] = (next_[r] + completions) % rules_[r].completions.size();
    }

    std::size_t rule_count() const { return rules_.size(); }

  private:
    std::size_t match(const std::string& prompt) const {
        for (std::size_t i = 0; i < rules_.size(); ++i)
            if (prompt.rfind(rules_[i].prompt_prefix, 0) == 0) return i;
        throw BackendError("mock backend: no rule matches prompt: " + prompt);
    }

    std::string take(std::size_t rule) {
        const std::string& c = rules_[rule].completions[next_[rule]];
        next_[rule] = (next_[rule] + 1) % rules_[rule].completions.size();
        return c;
    }

    std::vector<Rule> rules_;
    std::vector<std::size_t> next_;
    std::mutex mutex_;  // cycling state updates are serialized
};

inline std::unique_ptr<MockBackend> mock_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw std::runtime_error("mock rules: expected a JSON array");
    std::vector<MockBackend::Rule> rules;
    for (const auto& item : doc) {
        MockBackend::Rule r;
        r.prompt_prefix = item.at("prompt_prefix").get<std::string>();
        r.completions = item.at("completions").get<std::vector<std::string>>();
        rules.push_back(std::move(r));
    }
    return std::make_unique<MockBackend>(std::move(rules));
}

inline std::unique_ptr<MockBackend> mock_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open mock rules file: " + path);
    nlohmann::json doc;
    try {
        f >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("mock rules file " + path + ": " + e.what());
    }
    try {
        return mock_from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("mock rules file " + path + ": " + e.what());
    }
}

// --------------------------------------------------------------------------

struct RemoteBackendOptions {
    std::string base_url;          // e.g. http://localhost:8080 or http://host/v1
    std::string bearer_token;      // optional Authorization: Bearer <token>
    int max_retries = 0;           // transport retries per call; surfaced per record
    int min_interval_ms = 0;       // minimum spacing between requests
    int timeout_seconds = 300;
};

namespace detail {
struct ParsedUrl {
    std::string host_part;  // scheme://host[:port] for the HTTP client
    std::string path_prefix;
};

inline ParsedUrl split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("backend url must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.host_part = url;
    } else {
        out.host_part = url.substr(0, path_start);
        out.path_prefix = url.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
            out.path_prefix.pop_back();
    }
    return out;
}
}  // namespace detail

}  // namespace geoprobe

// The remote client needs cpp-httplib; keep it out of builds that only use
// the mock by gating on availability.
#if __has_include(<httplib.h>)
#include <httplib.h>

namespace geoprobe {

class RemoteBackend : public GenerationBackend {
  public:
    explicit RemoteBackend(RemoteBackendOptions options)
        : options_(std::move(options)), url_(detail::split_base_url(options_.base_url)) {}

    std::vector<std::string> generate(const std::string& prompt,
                                      const DecodingParams& params) override {
        params.validate();
        nlohmann::json body;
        body["prompt"] = prompt;
        body["params"] = params;
        const std::string payload = body.dump();

        std::string last_error;
        last_retries_ = 0;
        for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
            last_retries_ = attempt;
            pace();
            httplib::Client client(url_.host_part);
            client.set_read_timeout(options_.timeout_seconds, 0);
            client.set_connection_timeout(options_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!options_.bearer_token.empty())
                headers.emplace("Authorization", "Bearer " + options_.bearer_token);
            auto res = client.Post(url_.path_prefix + "/generate", headers, payload,
                                   "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200)
                throw BackendError("backend returned status " + std::to_string(res->status) +
                                   ": " + res->body);
            return parse_completions(res->body, params);
        }
        throw BackendError("backend unreachable after " +
                           std::to_string(options_.max_retries + 1) + " attempts: " + last_error);
    }

    int last_retries() const override { return last_retries_; }

  private:
    static std::vector<std::string> parse_completions(const std::string& body,
                                                      const DecodingParams& params) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("malformed backend response: ") + e.what());
        }
        if (!doc.contains("completions") || !doc["completions"].is_array())
            throw BackendError("malformed backend response: missing completions array");
        std::vector<std::string> out;
        for (const auto& c : doc["completions"]) {
            if (!c.is_string()) throw BackendError("malformed backend response: non-string completion");
            out.push_back(c.get<std::string>());
        }
        if (out.size() != static_cast<std::size_t>(params.num_return_sequences))
            throw BackendError("backend returned " + std::to_string(out.size()) +
                               " completions, expected " +
                               std::to_string(params.num_return_sequences));
        return out;
    }

    void pace() {
        if (options_.min_interval_ms <= 0) return;
        std::lock_guard<std::mutex> lock(pace_mutex_);
        const auto now = std::chrono::steady_clock::now();
        const auto earliest =
            last_request_ + std::chrono::milliseconds(options_.min_interval_ms);
        if (now < earliest) std::this_thread::sleep_for(earliest - now);
        last_request_ = std::chrono::steady_clock::now();
    }

    RemoteBackendOptions options_;
    detail::ParsedUrl url_;
    int last_retries_ = 0;
    std::mutex pace_mutex_;
    std::chrono::steady_clock::time_point last_request_{};
};

}  // namespace geoprobe
#endif  // __has_include(<httplib.h>)
