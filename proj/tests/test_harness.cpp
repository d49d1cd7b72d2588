#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoprobe/harness.hpp"

using namespace geoprobe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("geoprobe_harness_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<City> corridor15() {
    return load_cities_csv(std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv");
}

std::string two_dec(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void write_cities_csv(const std::string& path, const std::vector<City>& cities) {
    std::ofstream f(path);
    f << "name,admin1,country,lat,lon,population\n";
    for (const City& c : cities)
        f << c.name << "," << c.admin1 << "," << c.country << "," << c.coordinate.lat_deg
          << "," << c.coordinate.lon_deg << "," << c.population << "\n";
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

/// Mock that answers every coordinate prompt with the city's true location.
std::unique_ptr<MockBackend> oracle_mock(const std::vector<City>& cities) {
    std::vector<MockBackend::Rule> rules;
    for (const City& c : cities)
        rules.push_back({"The geo-coordinates of " + c.name + " are",
                         {" " + two_dec(c.coordinate.lat_deg) + " and " +
                          two_dec(c.coordinate.lon_deg) + "."}});
    return std::make_unique<MockBackend>(std::move(rules));
}

}  // namespace

TEST_CASE("generation record JSON round-trip") {
    GenerationRecord r;
    r.index = 7;
    r.task = "awareness";
    r.prompt = "Albany, New York is near";
    r.params = DecodingParams::top_k_sampling(100, 0.9, 24, 1);
    r.completions = {" Troy, New York."};
    r.parse.status = ParseStatus::Parsed;
    r.parse.value = PlaceRef{3, true};
    r.parse.raw = r.completions.front();
    r.city_index = 1;
    r.relation = "near";
    r.prompt_index = 2;
    r.sample_index = 4;
    r.shot_seed = 123456789;
    r.distance_km = 12.5;
    r.generated_city = "Troy, New York";
    const json j = record_to_json(r);
    const GenerationRecord back = record_from_json(j);
    CHECK(record_to_json(back) == j);
    CHECK(back.parse.place().city_index == 3);
    CHECK(back.parse.place().ambiguous);
    CHECK(back.distance_km == 12.5);
}

TEST_CASE("knowledge task: oracle mock gives zero error and full rate") {
    TempDir dir;
    const auto cities = corridor15();
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv";
    cfg.prompt_template = "1";
    cfg.shots = 0;
    cfg.out_path = dir.file("knowledge");
    auto mock = oracle_mock(cities);
    const ExperimentResult result = run_knowledge_task(cfg, *mock);
    CHECK(result.summary["metrics"]["prediction_rate"] == 1.0);
    CHECK(result.summary["metrics"]["mean_error_km"] == 0.0);
    CHECK(result.records.size() == cities.size());
    CHECK(fs::exists(dir.file("knowledge.jsonl")));
    CHECK(fs::exists(dir.file("knowledge.json")));
}

TEST_CASE("knowledge task: scripted failures match hand arithmetic") {
    TempDir dir;
    const auto all = corridor15();
    const std::vector<City> ten(all.begin(), all.begin() + 10);
    const std::string cities_csv = dir.file("ten.csv");
    write_cities_csv(cities_csv, ten);

    std::vector<MockBackend::Rule> rules;
    for (std::size_t i = 0; i < ten.size(); ++i) {
        const City& c = ten[i];
        std::string completion;
        if (i == 3 || i == 7) {
            completion = " a city. " + c.name + " is located in the United States.";
        } else {
            // cities 0 and 1 swap coordinates; the rest answer exactly
            const City& src = i == 0 ? ten[1] : (i == 1 ? ten[0] : c);
            completion = " " + two_dec(src.coordinate.lat_deg) + " and " +
                         two_dec(src.coordinate.lon_deg) + ".";
        }
        rules.push_back({"The geo-coordinates of " + c.name + " are", {completion}});
    }
    MockBackend mock(rules);

    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = cities_csv;
    cfg.out_path = dir.file("knowledge10");
    const ExperimentResult result = run_knowledge_task(cfg, mock);

    CHECK(result.summary["metrics"]["prediction_rate"].get<double>() == 0.8);
    // mean = 2 * d(Boston, Worcester) / 8; frozen pre-build value
    CHECK_THAT(result.summary["metrics"]["mean_error_km"].get<double>(),
               Catch::Matchers::WithinAbs(15.464431007093259, 1e-9));
    CHECK(result.summary["metrics"]["parsed"] == 8);
    CHECK(result.summary["metrics"]["failed"] == 2);
}

TEST_CASE("knowledge task: 3-shot prompts carry exactly three completed examples") {
    TempDir dir;
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv";
    cfg.shots = 3;
    cfg.seed = 9;
    MockBackend mock({{"", {" 1.00 and 2.00."}}});  // empty prefix matches everything
    const ExperimentResult result = run_knowledge_task(cfg, mock);
    for (const auto& [idx, rec] : result.records) {
        REQUIRE(std::count(rec.prompt.begin(), rec.prompt.end(), '\n') == 3);
        std::istringstream lines(rec.prompt);
        std::string line;
        for (int k = 0; k < 3; ++k) {
            std::getline(lines, line);
            CHECK(line.back() == '.');
            CHECK(parse_coordinates(line.substr(line.rfind("are") + 3)).parsed());
        }
        std::getline(lines, line);
        CHECK(line.rfind(" are") == line.size() - 4);
    }
}

TEST_CASE("knowledge task: aggregates are recomputable from the records") {
    const auto cities = corridor15();
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv";
    MockBackend mock({{"The geo-coordinates of Boston are", {"No idea."}},
                      {"", {" 41.00 and -73.00."}}});
    const ExperimentResult result = run_knowledge_task(cfg, mock);

    std::vector<ParseOutcome> outcomes;
    std::vector<std::pair<GeoCoordinate, GeoCoordinate>> pairs;
    for (const auto& [idx, rec] : result.records) {
        outcomes.push_back(rec.parse);
        if (rec.parse.parsed())
            pairs.emplace_back(cities[rec.city_index].coordinate, rec.parse.coordinate());
    }
    CHECK(result.summary["metrics"]["prediction_rate"].get<double>() ==
          prediction_rate(outcomes));
    CHECK(result.summary["metrics"]["mean_error_km"].get<double>() == mean_error_km(pairs));
}

TEST_CASE("resume: partial JSONL is completed to a byte-identical result") {
    TempDir dir;
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    const auto all = corridor15();
    const std::vector<City> five(all.begin(), all.begin() + 5);
    const std::string cities_csv = dir.file("five.csv");
    write_cities_csv(cities_csv, five);
    cfg.cities_path = cities_csv;
    cfg.out_path = dir.file("resume");

    // one cycling rule so resume alignment actually matters
    const std::vector<MockBackend::Rule> rules{
        {"", {" 10.00 and 20.00.", " 11.00 and 21.00.", "no coordinates here"}}};

    {
        MockBackend mock(rules);
        run_knowledge_task(cfg, mock);
    }
    const std::string full_jsonl = slurp(dir.file("resume.jsonl"));
    const std::string full_summary = slurp(dir.file("resume.json"));
    REQUIRE_FALSE(full_jsonl.empty());

    // truncate to the first two records and re-run with a fresh mock
    {
        std::istringstream in(full_jsonl);
        std::ofstream out(dir.file("resume.jsonl"), std::ios::trunc);
        std::string line;
        for (int i = 0; i < 2 && std::getline(in, line); ++i) out << line << "\n";
        fs::remove(dir.file("resume.json"));
    }
    {
        MockBackend mock(rules);
        run_knowledge_task(cfg, mock);
    }
    CHECK(slurp(dir.file("resume.jsonl")) == full_jsonl);
    CHECK(slurp(dir.file("resume.json")) == full_summary);
}

TEST_CASE("resume: mismatching prompt is rejected") {
    TempDir dir;
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv";
    cfg.out_path = dir.file("bad_resume");
    MockBackend mock({{"", {" 1.00 and 2.00."}}});
    run_knowledge_task(cfg, mock);

    cfg.prompt_template = "2";  // different prompts, same file
    MockBackend mock2({{"", {" 1.00 and 2.00."}}});
    CHECK_THROWS_AS(run_knowledge_task(cfg, mock2), ConfigError);
}

namespace {

struct AwarenessFixture {
    std::vector<City> cities;
    std::string cities_csv;
    std::unique_ptr<MockBackend> mock;

    explicit AwarenessFixture(const TempDir& dir) {
        const auto all = corridor15();
        cities.assign(all.begin(), all.begin() + 6);
        cities_csv = dir.file("aware.csv");
        write_cities_csv(cities_csv, cities);

        // "near" names each city's nearest neighbor, "and" names the farthest
        std::vector<MockBackend::Rule> rules;
        for (std::size_t i = 0; i < cities.size(); ++i) {
            double best = 1e18, worst = -1.0;
            std::size_t nearest = i, farthest = i;
            for (std::size_t j = 0; j < cities.size(); ++j) {
                if (j == i) continue;
                const double d =
                    haversine_km(cities[i].coordinate, cities[j].coordinate);
                if (d < best) { best = d; nearest = j; }
                if (d > worst) { worst = d; farthest = j; }
            }
            rules.push_back({cities[i].qualified_name() + " is near",
                             {" " + cities[nearest].qualified_name() + "."}});
            rules.push_back({cities[i].qualified_name() + " and",
                             {" " + cities[farthest].qualified_name() + "."}});
        }
        mock = std::make_unique<MockBackend>(std::move(rules));
    }
};

}  // namespace

TEST_CASE("awareness task: record count and near-vs-and separation") {
    TempDir dir;
    AwarenessFixture fx(dir);
    ExperimentConfig cfg;
    cfg.task = "awareness";
    cfg.cities_path = fx.cities_csv;
    cfg.relations = {"near", "and"};
    cfg.samples_per_prompt = 5;
    cfg.prompts_per_city = 2;
    cfg.out_path = dir.file("aware");
    const ExperimentResult result = run_awareness_task(cfg, *fx.mock);

    // exactly samples * prompts records per (city, relation)
    std::map<std::pair<int, std::string>, int> counts;
    for (const auto& [idx, rec] : result.records) ++counts[{rec.city_index, rec.relation}];
    REQUIRE(counts.size() == fx.cities.size() * 2);
    for (const auto& [key, n] : counts) CHECK(n == 10);

    const auto& near = result.summary["metrics"]["relations"]["near"];
    const auto& conj = result.summary["metrics"]["relations"]["and"];
    CHECK(near["prediction_rate"] == 1.0);
    CHECK(near["distance_median_km"].get<double>() < conj["distance_median_km"].get<double>());
    CHECK(near["parsed"].get<int>() == 60);
}

TEST_CASE("resume: awareness sampling stays cycle-aligned") {
    TempDir dir;
    AwarenessFixture fx(dir);
    // give one prompt a multi-completion cycle so alignment is observable
    std::vector<MockBackend::Rule> rules{
        {fx.cities[0].qualified_name() + " is near",
         {" " + fx.cities[1].qualified_name() + ".", " nowhere known.",
          " " + fx.cities[2].qualified_name() + "."}},
        {"", {" " + fx.cities[3].qualified_name() + "."}}};

    ExperimentConfig cfg;
    cfg.task = "awareness";
    cfg.cities_path = fx.cities_csv;
    cfg.relations = {"near"};
    cfg.samples_per_prompt = 4;
    cfg.prompts_per_city = 2;
    cfg.out_path = dir.file("aware_resume");

    {
        MockBackend mock(rules);
        run_awareness_task(cfg, mock);
    }
    const std::string full_jsonl = slurp(dir.file("aware_resume.jsonl"));
    const std::string full_summary = slurp(dir.file("aware_resume.json"));

    // keep only the first 3 records (mid-cycle for city 0's prompt)
    {
        std::istringstream in(full_jsonl);
        std::ofstream out(dir.file("aware_resume.jsonl"), std::ios::trunc);
        std::string line;
        for (int i = 0; i < 3 && std::getline(in, line); ++i) out << line << "\n";
        fs::remove(dir.file("aware_resume.json"));
    }
    {
        MockBackend mock(rules);
        run_awareness_task(cfg, mock);
    }
    CHECK(slurp(dir.file("aware_resume.jsonl")) == full_jsonl);
    CHECK(slurp(dir.file("aware_resume.json")) == full_summary);
}

TEST_CASE("awareness task: ambiguity resolutions are logged") {
    TempDir dir;
    std::vector<City> cities{
        {"Hartford", "Connecticut", "United States", {41.77, -72.67}, 121054},
        {"Albany", "New York", "United States", {42.65, -73.75}, 99224},
        {"Albany", "California", "United States", {37.89, -122.30}, 20000},
        {"Troy", "New York", "United States", {42.73, -73.69}, 51401},
    };
    const std::string cities_csv = dir.file("amb.csv");
    write_cities_csv(cities_csv, cities);
    MockBackend mock({{"", {" Albany."}}});  // always a bare ambiguous name

    ExperimentConfig cfg;
    cfg.task = "awareness";
    cfg.cities_path = cities_csv;
    cfg.relations = {"near"};
    cfg.samples_per_prompt = 1;
    cfg.prompts_per_city = 1;
    cfg.include_state = false;
    const ExperimentResult result = run_awareness_task(cfg, mock);
    CHECK(result.summary["metrics"]["ambiguous_resolutions"].get<int>() >= 1);
}

TEST_CASE("awareness task: generated pairs feed the correlation analysis") {
    TempDir dir;
    AwarenessFixture fx(dir);
    ExperimentConfig cfg;
    cfg.task = "awareness";
    cfg.cities_path = fx.cities_csv;
    cfg.relations = {"near"};
    cfg.samples_per_prompt = 3;
    cfg.prompts_per_city = 1;
    const ExperimentResult result = run_awareness_task(cfg, *fx.mock);
    const auto pairs = result.summary["metrics"]["relations"]["near"]["generation_counts"];
    CHECK(pairs.size() == fx.cities.size());  // one deterministic pair per city
    for (const auto& entry : pairs) CHECK(entry.at(2).get<int>() == 3);
}

TEST_CASE("reasoning task: generation-count measures run end to end") {
    TempDir dir;
    AwarenessFixture fx(dir);
    ExperimentConfig aware_cfg;
    aware_cfg.task = "awareness";
    aware_cfg.cities_path = fx.cities_csv;
    aware_cfg.relations = {"near"};
    aware_cfg.samples_per_prompt = 4;
    aware_cfg.prompts_per_city = 1;
    aware_cfg.out_path = dir.file("aware");
    run_awareness_task(aware_cfg, *fx.mock);

    ExperimentConfig cfg;
    cfg.task = "reasoning";
    cfg.cities_path = fx.cities_csv;
    cfg.measure = "reciprocal-generation";
    cfg.relations = {"near"};
    cfg.generations_path = dir.file("aware.jsonl");
    cfg.out_path = dir.file("reason_gen");
    const ExperimentResult result = run_reasoning_task(cfg, nullptr);
    const auto& res = result.summary["metrics"]["result"];
    CHECK(res["per_city"].size() == fx.cities.size());
    CHECK(res["mean_error_km"].get<double>() > 0.0);

    cfg.measure = "far-generation";
    cfg.relations = {"near"};  // treat near counts as a direct dissimilarity
    cfg.out_path = dir.file("reason_far");
    const ExperimentResult far = run_reasoning_task(cfg, nullptr);
    CHECK(far.summary["metrics"]["result"]["mean_error_km"].get<double>() > 0.0);
}

TEST_CASE("reasoning task: unparseable distance pairs fall back and are logged") {
    TempDir dir;
    const auto all = corridor15();
    const std::vector<City> six(all.begin(), all.begin() + 6);
    const std::string cities_csv = dir.file("pd.csv");
    write_cities_csv(cities_csv, six);

    std::vector<MockBackend::Rule> rules;
    for (std::size_t i = 0; i < six.size(); ++i)
        for (std::size_t j = i + 1; j < six.size(); ++j) {
            std::string completion;
            if (i == 0 && j == 1) {
                completion = " hard to say, they are quite close.";
            } else {
                char buf[64];
                std::snprintf(buf, sizeof buf, " %.3f km.",
                              haversine_km(six[i].coordinate, six[j].coordinate));
                completion = buf;
            }
            rules.push_back({render_distance_prompt(six[i], six[j]), {completion}});
        }
    MockBackend mock(rules);

    ExperimentConfig cfg;
    cfg.task = "reasoning";
    cfg.cities_path = cities_csv;
    cfg.measure = "predicted-distance";
    cfg.out_path = dir.file("pd");
    const ExperimentResult result = run_reasoning_task(cfg, &mock);
    REQUIRE(result.summary["metrics"].contains("fallback_pairs"));
    const auto fallbacks = result.summary["metrics"]["fallback_pairs"];
    REQUIRE(fallbacks.size() == 1);
    CHECK(fallbacks[0].get<std::string>().find(six[0].name) != std::string::npos);
    // the run still completes with a finite mean error
    CHECK(result.summary["metrics"]["result"]["mean_error_km"].get<double>() > 0.0);
}

TEST_CASE("reasoning task: reciprocal co-occurrence from a counted corpus") {
    TempDir dir;
    const auto all = corridor15();
    const std::vector<City> six(all.begin(), all.begin() + 6);
    const std::string cities_csv = dir.file("cooc.csv");
    write_cities_csv(cities_csv, six);
    const Gazetteer g(six);

    // a corpus in which nearby cities co-occur more often
    CountTable table;
    for (std::size_t i = 0; i < six.size(); ++i)
        for (std::size_t j = i + 1; j < six.size(); ++j) {
            const double d = haversine_km(six[i].coordinate, six[j].coordinate);
            const auto count = static_cast<std::uint64_t>(20000.0 / (d + 50.0));
            const std::string sentence =
                six[i].qualified_name() + " met " + six[j].qualified_name() + ".";
            for (std::uint64_t k = 0; k < count; ++k) count_line(sentence, g, table);
        }
    {
        std::ofstream f(dir.file("counts.json"));
        f << count_table_to_json(table, g).dump();
    }

    ExperimentConfig cfg;
    cfg.task = "reasoning";
    cfg.cities_path = cities_csv;
    cfg.measure = "reciprocal-cooccurrence";
    cfg.counts_path = dir.file("counts.json");
    const ExperimentResult result = run_reasoning_task(cfg, nullptr);
    const double mean = result.summary["metrics"]["result"]["mean_error_km"].get<double>();
    CHECK(mean > 0.0);
    CHECK(mean < 1000.0);  // counts carry real signal on this fixture
}

TEST_CASE("count table JSON round-trip") {
    const auto all = corridor15();
    const std::vector<City> four(all.begin(), all.begin() + 4);
    const Gazetteer g(four);
    CountTable t;
    t.occurrences[0] = 5;
    t.occurrences[2] = 7;
    t.cooccurrences[{0, 2}] = 3;
    t.sentences_processed = 11;
    const json j = count_table_to_json(t, g);
    const CountTable back = count_table_from_json(j, g);
    CHECK(back.occurrences == t.occurrences);
    CHECK(back.cooccurrences == t.cooccurrences);
    CHECK(back.sentences_processed == t.sentences_processed);
}

TEST_CASE("config echo is sufficient to rerun the experiment") {
    TempDir dir;
    const auto cities = corridor15();
    ExperimentConfig cfg;
    cfg.task = "knowledge";
    cfg.cities_path = std::string(GEOPROBE_DATA_DIR) + "/us_cities_15.csv";
    cfg.shots = 2;
    cfg.seed = 4;
    cfg.out_path = dir.file("echo");
    MockBackend mock({{"", {" 42.00 and -71.00."}}});
    const ExperimentResult first = run_knowledge_task(cfg, mock);
    const std::string first_summary = slurp(dir.file("echo.json"));

    const ExperimentConfig replay = first.summary["config"].get<ExperimentConfig>();
    fs::remove(dir.file("echo.jsonl"));
    fs::remove(dir.file("echo.json"));
    MockBackend mock2({{"", {" 42.00 and -71.00."}}});
    run_knowledge_task(replay, mock2);
    CHECK(slurp(dir.file("echo.json")) == first_summary);
}

TEST_CASE("emit_heatmap: aggregation, filtering, empty input") {
    const auto all = corridor15();
    const std::vector<City> cities(all.begin(), all.begin() + 6);
    const Gazetteer g(cities);
    const int hartford = g.lookup("Hartford").index;
    const int troy_like = g.lookup("New Haven").index;

    auto make_record = [&](std::size_t idx, const std::string& relation, int generated) {
        GenerationRecord r;
        r.index = idx;
        r.task = "awareness";
        r.city_index = hartford;
        r.relation = relation;
        r.parse.status = ParseStatus::Parsed;
        r.parse.value = PlaceRef{generated, false};
        return r;
    };
    std::vector<GenerationRecord> records{make_record(0, "near", troy_like),
                                          make_record(1, "near", troy_like),
                                          make_record(2, "near", troy_like),
                                          make_record(3, "and", 0)};
    records.push_back([&] {
        GenerationRecord r;
        r.index = 4;
        r.task = "awareness";
        r.city_index = hartford;
        r.relation = "near";
        r.parse = ParseOutcome::failure("no city here");
        return r;
    }());

    const json all_relations = emit_heatmap(records, g);
    CHECK(all_relations["type"] == "FeatureCollection");
    CHECK(all_relations["features"].size() == 2);

    const json near_only = emit_heatmap(records, g, "near");
    REQUIRE(near_only["features"].size() == 1);
    const auto& feature = near_only["features"][0];
    CHECK(feature["properties"]["count"] == 3);
    CHECK(feature["properties"]["relation"] == "near");
    CHECK(feature["properties"]["prompt_city"] == "Hartford, Connecticut");
    CHECK(feature["properties"]["name"] == "New Haven, Connecticut");
    // GeoJSON position order is [lon, lat]
    CHECK(feature["geometry"]["coordinates"][0].get<double>() ==
          g.city(troy_like).coordinate.lon_deg);

    const json empty = emit_heatmap({}, g);
    CHECK(empty["features"].empty());
}

TEST_CASE("emit_markers: three roles, coincident points allowed, round-trip") {
    const GeoCoordinate actual{42.65, -73.75}, a{42.0, -73.0}, p{43.0, -74.0};
    const json doc = emit_markers(actual, a, p);
    REQUIRE(doc["features"].size() == 3);
    CHECK(doc["features"][0]["properties"]["role"] == "actual");
    CHECK(doc["features"][1]["properties"]["role"] == "pred_actual");
    CHECK(doc["features"][2]["properties"]["role"] == "pred_predicted");

    const json same = emit_markers(actual, actual, actual);
    CHECK(same["features"].size() == 3);  // coincident features stay separate

    const json reparsed = json::parse(doc.dump());
    CHECK(reparsed == doc);

    CHECK_THROWS_AS(emit_markers({99.0, 0.0}, a, p), std::invalid_argument);
}
