#include <catch2/catch_amalgamated.hpp>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "geoprobe/backend.hpp"

using namespace geoprobe;
using nlohmann::json;

TEST_CASE("decoding params: validation") {
    CHECK_NOTHROW(DecodingParams::beam_search(5).validate());
    CHECK_NOTHROW(DecodingParams::top_k_sampling(100, 0.9).validate());

    DecodingParams p = DecodingParams::beam_search(5, 32, 6);
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);  // sequences > beams

    DecodingParams mixed = DecodingParams::beam_search(5);
    mixed.top_k = 10;
    CHECK_THROWS_AS(mixed.validate(), std::invalid_argument);

    DecodingParams no_temp = DecodingParams::top_k_sampling(100, 0.9);
    no_temp.temperature.reset();
    CHECK_THROWS_AS(no_temp.validate(), std::invalid_argument);

    DecodingParams bad_tokens = DecodingParams::beam_search(5, 0);
    CHECK_THROWS_AS(bad_tokens.validate(), std::invalid_argument);
}

TEST_CASE("decoding params: JSON round-trip is lossless") {
    std::vector<DecodingParams> cases;
    cases.push_back(DecodingParams::beam_search(5, 32, 1));
    cases.push_back(DecodingParams::top_k_sampling(100, 0.9, 24, 1));
    DecodingParams seeded = DecodingParams::beam_search(3, 16, 2);
    seeded.seed = 42;
    cases.push_back(seeded);
    for (const DecodingParams& p : cases) {
        const json j = p;
        const DecodingParams back = j.get<DecodingParams>();
        CHECK(json(back) == j);
        CHECK(back.strategy == p.strategy);
        CHECK(back.num_beams == p.num_beams);
        CHECK(back.top_k == p.top_k);
        CHECK(back.temperature == p.temperature);
        CHECK(back.max_new_tokens == p.max_new_tokens);
        CHECK(back.num_return_sequences == p.num_return_sequences);
        CHECK(back.seed == p.seed);
    }
    // strategy-specific fields appear exactly for their strategy
    const json beam = DecodingParams::beam_search(5);
    CHECK(beam.contains("num_beams"));
    CHECK_FALSE(beam.contains("top_k"));
    const json topk = DecodingParams::top_k_sampling(100, 0.9);
    CHECK(topk.contains("top_k"));
    CHECK(topk.contains("temperature"));
    CHECK_FALSE(topk.contains("num_beams"));
}

TEST_CASE("mock: first matching rule wins, in file order") {
    MockBackend mock({{"Albany, New York is near", {" Troy, New York."}},
                      {"Albany", {" somewhere vague."}}});
    const auto params = DecodingParams::top_k_sampling(100, 0.9);
    CHECK(mock.generate("Albany, New York is near", params).front() == " Troy, New York.");
    CHECK(mock.generate("Albany and", params).front() == " somewhere vague.");
}

TEST_CASE("mock: completions cycle deterministically") {
    MockBackend mock({{"P", {"c1", "c2", "c3"}}});
    const auto params = DecodingParams::top_k_sampling(100, 0.9);
    std::vector<std::string> seen;
    for (int i = 0; i < 5; ++i) seen.push_back(mock.generate("P says", params).front());
    CHECK(seen == std::vector<std::string>{"c1", "c2", "c3", "c1", "c2"});

    // num_return_sequences > 1 draws consecutive completions from the cycle
    MockBackend multi({{"P", {"a", "b", "c"}}});
    const auto two = DecodingParams::top_k_sampling(100, 0.9, 24, 2);
    CHECK(multi.generate("P", two) == std::vector<std::string>{"a", "b"});
    CHECK(multi.generate("P", two) == std::vector<std::string>{"c", "a"});
}

TEST_CASE("mock: empty rules / no matching rule / duplicates") {
    MockBackend empty({});
    const auto params = DecodingParams::beam_search(5);
    CHECK_THROWS_AS(empty.generate("anything", params), BackendError);

    MockBackend mock({{"A", {"x"}}});
    CHECK_THROWS_AS(mock.generate("B something", params), BackendError);
    CHECK_THROWS_WITH(mock.generate("B something", params),
                      Catch::Matchers::ContainsSubstring("B something"));

    CHECK_THROWS_AS(MockBackend({{"A", {"x"}}, {"A", {"y"}}}), std::invalid_argument);
    CHECK_THROWS_AS(MockBackend({{"A", {}}}), std::invalid_argument);
}

TEST_CASE("mock: note_replayed keeps cycling aligned") {
    MockBackend fresh({{"P", {"c1", "c2", "c3"}}});
    const auto params = DecodingParams::top_k_sampling(100, 0.9);
    fresh.generate("P", params);  // consumes c1
    MockBackend resumed({{"P", {"c1", "c2", "c3"}}});
    resumed.note_replayed("P", 1);
    CHECK(resumed.generate("P", params).front() == fresh.generate("P", params).front());
}

TEST_CASE("mock: rules file parsing") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "geoprobe_backend_test";
    fs::create_directories(dir);
    const fs::path rules = dir / "rules.json";
    {
        std::ofstream f(rules);
        f << R"([{"prompt_prefix": "The geo-coordinates of Kathmandu",
                  "completions": [" 27.72 and 85.32."]}])";
    }
    auto mock = mock_from_file(rules.string());
    CHECK(mock->rule_count() == 1);
    CHECK(mock->generate("The geo-coordinates of Kathmandu are",
                         DecodingParams::beam_search(5))
              .front() == " 27.72 and 85.32.");

    const fs::path empty = dir / "empty.json";
    {
        std::ofstream f(empty);
        f << "[]";
    }
    auto no_rules = mock_from_file(empty.string());  // valid backend...
    CHECK_THROWS_AS(no_rules->generate("anything", DecodingParams::beam_search(5)),
                    BackendError);  // ...that errors on any prompt

    const fs::path bad = dir / "bad.json";
    {
        std::ofstream f(bad);
        f << "{not json";
    }
    CHECK_THROWS(mock_from_file(bad.string()));
    CHECK_THROWS(mock_from_file((dir / "missing.json").string()));
    fs::remove_all(dir);
}

TEST_CASE("remote: wire format, completions, and error statuses") {
    httplib::Server server;
    json last_body;
    std::atomic<int> mode{0};  // 0 ok, 1 http error, 2 malformed, 3 wrong count
    server.Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
        last_body = json::parse(req.body);
        switch (mode.load()) {
            case 0: {
                json out;
                out["completions"] = {" 27.72 and 85.32."};
                res.set_content(out.dump(), "application/json");
                break;
            }
            case 1:
                res.status = 503;
                res.set_content("overloaded", "text/plain");
                break;
            case 2:
                res.set_content("{\"nope\": 1}", "application/json");
                break;
            default: {
                json out;
                out["completions"] = {"a", "b"};
                res.set_content(out.dump(), "application/json");
            }
        }
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteBackendOptions options;
    options.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    RemoteBackend backend(options);

    DecodingParams params = DecodingParams::beam_search(5, 32, 1);
    const auto completions = backend.generate("The geo-coordinates of Kathmandu are", params);
    REQUIRE(completions.size() == 1);
    CHECK(completions.front() == " 27.72 and 85.32.");
    CHECK(last_body.at("prompt") == "The geo-coordinates of Kathmandu are");
    CHECK(last_body.at("params").at("strategy") == "beam_search");
    CHECK(last_body.at("params").at("num_beams") == 5);
    CHECK(last_body.at("params").at("max_new_tokens") == 32);
    CHECK(last_body.at("params").at("num_return_sequences") == 1);
    CHECK_FALSE(last_body.at("params").contains("top_k"));

    mode = 1;
    CHECK_THROWS_WITH(backend.generate("x", params),
                      Catch::Matchers::ContainsSubstring("503") &&
                          Catch::Matchers::ContainsSubstring("overloaded"));
    mode = 2;
    CHECK_THROWS_AS(backend.generate("x", params), BackendError);
    mode = 3;
    CHECK_THROWS_WITH(backend.generate("x", params),
                      Catch::Matchers::ContainsSubstring("expected 1"));

    server.stop();
    serving.join();
}

TEST_CASE("remote: transport failure surfaces as BackendError") {
    RemoteBackendOptions options;
    options.base_url = "http://127.0.0.1:1";  // nothing listens there
    RemoteBackend backend(options);
    CHECK_THROWS_AS(backend.generate("x", DecodingParams::beam_search(5)), BackendError);

    CHECK_THROWS_AS(detail::split_base_url("no-scheme"), std::invalid_argument);
}
