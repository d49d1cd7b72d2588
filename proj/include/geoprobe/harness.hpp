#pragma once

// Experiment orchestration: dataset loading, record persistence, the three
// task runners, and GeoJSON map emission.
//
// Persistence is JSON Lines (one GenerationRecord per line, tagged with its
// input index) plus a final JSON summary. Runs are resumable: re-running
// with the same config and an existing partial JSONL skips completed
// records and, with the mock backend, produces a byte-identical result.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoprobe/backend.hpp"
#include "geoprobe/corpus.hpp"
#include "geoprobe/geodesy.hpp"
#include "geoprobe/parsing.hpp"
#include "geoprobe/prompting.hpp"
#include "geoprobe/random.hpp"
#include "geoprobe/reasoning.hpp"
#include "geoprobe/stats.hpp"

namespace geoprobe {

inline constexpr const char* kToolVersion = "0.1.0";

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// Records

struct GenerationRecord {
    std::size_t index = 0;
    std::string task;  // "knowledge" | "awareness" | "reasoning-distance"
    std::string prompt;
    DecodingParams params;
    std::vector<std::string> completions;
    ParseOutcome parse;

    // task metadata
    int city_index = -1;       // prompt city (knowledge/awareness) or first of the pair
    int pair_b = -1;           // second city of a distance pair
    std::string relation;      // awareness relation name
    int prompt_index = -1;     // which of the prompts-per-city
    int sample_index = -1;     // which sample of that prompt
    std::uint64_t shot_seed = 0;
    int retries = 0;
    double error_km = -1.0;     // knowledge: prediction error when parsed
    double distance_km = -1.0;  // awareness: prompt-to-generated distance when parsed
    std::string generated_city;  // awareness: qualified name of the parsed city
};

inline nlohmann::json parse_outcome_to_json(const ParseOutcome& p) {
    nlohmann::json j;
    j["status"] = p.parsed() ? "parsed" : "failed";
    j["raw"] = p.raw;
    if (std::holds_alternative<GeoCoordinate>(p.value)) {
        j["kind"] = "coordinates";
        j["lat"] = p.coordinate().lat_deg;
        j["lon"] = p.coordinate().lon_deg;
    } else if (std::holds_alternative<PlaceRef>(p.value)) {
        j["kind"] = "place";
        j["city_index"] = p.place().city_index;
        j["ambiguous"] = p.place().ambiguous;
    } else if (std::holds_alternative<double>(p.value)) {
        j["kind"] = "distance_km";
        j["km"] = p.km();
    } else {
        j["kind"] = "none";
    }
    return j;
}

inline ParseOutcome parse_outcome_from_json(const nlohmann::json& j) {
    ParseOutcome p;
    p.status = j.at("status").get<std::string>() == "parsed" ? ParseStatus::Parsed
                                                             : ParseStatus::Failed;
    p.raw = j.at("raw").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "coordinates")
        p.value = GeoCoordinate{j.at("lat").get<double>(), j.at("lon").get<double>()};
    else if (kind == "place")
        p.value = PlaceRef{j.at("city_index").get<int>(), j.at("ambiguous").get<bool>()};
    else if (kind == "distance_km")
        p.value = j.at("km").get<double>();
    return p;
}

inline nlohmann::json record_to_json(const GenerationRecord& r) {
    nlohmann::json j;
    j["index"] = r.index;
    j["task"] = r.task;
    j["prompt"] = r.prompt;
    j["params"] = r.params;
    j["completions"] = r.completions;
    j["parse"] = parse_outcome_to_json(r.parse);
    j["city_index"] = r.city_index;
    if (r.pair_b >= 0) j["pair_b"] = r.pair_b;
    if (!r.relation.empty()) j["relation"] = r.relation;
    if (r.prompt_index >= 0) j["prompt_index"] = r.prompt_index;
    if (r.sample_index >= 0) j["sample_index"] = r.sample_index;
    j["shot_seed"] = r.shot_seed;
    if (r.retries > 0) j["retries"] = r.retries;
    if (r.error_km >= 0.0) j["error_km"] = r.error_km;
    if (r.distance_km >= 0.0) j["distance_km"] = r.distance_km;
    if (!r.generated_city.empty()) j["generated_city"] = r.generated_city;
    return j;
}

inline GenerationRecord record_from_json(const nlohmann::json& j) {
    GenerationRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.task = j.at("task").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.params = j.at("params").get<DecodingParams>();
    r.completions = j.at("completions").get<std::vector<std::string>>();
    r.parse = parse_outcome_from_json(j.at("parse"));
    r.city_index = j.at("city_index").get<int>();
    if (j.contains("pair_b")) r.pair_b = j.at("pair_b").get<int>();
    if (j.contains("relation")) r.relation = j.at("relation").get<std::string>();
    if (j.contains("prompt_index")) r.prompt_index = j.at("prompt_index").get<int>();
    if (j.contains("sample_index")) r.sample_index = j.at("sample_index").get<int>();
    r.shot_seed = j.at("shot_seed").get<std::uint64_t>();
    if (j.contains("retries")) r.retries = j.at("retries").get<int>();
    if (j.contains("error_km")) r.error_km = j.at("error_km").get<double>();
    if (j.contains("distance_km")) r.distance_km = j.at("distance_km").get<double>();
    if (j.contains("generated_city")) r.generated_city = j.at("generated_city").get<std::string>();
    return r;
}

/// JSONL-backed record store. Loads any existing file on construction (the
/// resume path), appends each new record as soon as it completes (partial
/// results survive aborts), and rewrites the file in index order at the
/// end. An empty path keeps everything in memory.
class RecordStore {
  public:
    explicit RecordStore(std::string path = {}) : path_(std::move(path)) {
        if (path_.empty()) return;
        std::ifstream f(path_);
        if (!f) return;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                GenerationRecord r = record_from_json(nlohmann::json::parse(line));
                records_[r.index] = std::move(r);
            } catch (const std::exception& e) {
                throw ConfigError("bad record in " + path_ + " line " + std::to_string(lineno) +
                                  ": " + e.what());
            }
        }
    }

    const GenerationRecord* find(std::size_t index) const {
        auto it = records_.find(index);
        return it == records_.end() ? nullptr : &it->second;
    }

    void add(GenerationRecord rec) {
        const std::size_t index = rec.index;
        if (!path_.empty()) {
            std::ofstream f(path_, std::ios::app);
            if (!f) throw ConfigError("cannot write records file: " + path_);
            f << record_to_json(rec).dump() << "\n";
        }
        records_[index] = std::move(rec);
    }

    std::size_t size() const { return records_.size(); }
    const std::map<std::size_t, GenerationRecord>& records() const { return records_; }

    /// Rewrite the JSONL sorted by index (atomic via rename).
    void finalize() const {
        if (path_.empty()) return;
        const std::string tmp = path_ + ".tmp";
        {
            std::ofstream f(tmp, std::ios::trunc);
            if (!f) throw ConfigError("cannot write records file: " + tmp);
            for (const auto& [idx, rec] : records_) f << record_to_json(rec).dump() << "\n";
        }
        std::filesystem::rename(tmp, path_);
    }

  private:
    std::string path_;
    std::map<std::size_t, GenerationRecord> records_;
};

// --------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
    std::string task;  // knowledge | awareness | reasoning
    std::string cities_path;
    std::string divisions_path;

    // knowledge
    std::string prompt_template = "1";  // 1 | 2 | instruction-geo | instruction-latlon
    int shots = 0;

    // awareness
    std::vector<std::string> relations = {"near", "close-to", "far-from", "and"};
    bool include_state = true;
    int samples_per_prompt = 50;
    int prompts_per_city = 10;

    // reasoning
    std::string measure = "actual";   // actual | random | predicted-distance |
                                      // reciprocal-cooccurrence | reciprocal-generation |
                                      // far-generation
    std::string scope = "contiguous";  // contiguous | divisions
    std::string mode = "standard";     // standard | exact-pseudocode
    std::string counts_path;           // CountTable JSON (reciprocal-cooccurrence)
    std::string generations_path;      // awareness JSONL (generation measures)
    int random_seeds = 10;
    double zero_cap = 0.0;  // 0 = automatic (twice the largest observed reciprocal)

    // backend
    std::string backend_url;
    std::string mock_path;

    // decoding
    int num_beams = 5;
    int top_k = 100;
    double temperature = 0.9;
    int max_new_tokens = 0;  // 0 = task default: 32 coordinate/distance, 24 preposition

    std::uint64_t seed = 0;
    std::string out_path;  // prefix: writes <out>.jsonl and <out>.json
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"task", c.task},
                       {"cities", c.cities_path},
                       {"divisions", c.divisions_path},
                       {"template", c.prompt_template},
                       {"shots", c.shots},
                       {"relations", c.relations},
                       {"include_state", c.include_state},
                       {"samples", c.samples_per_prompt},
                       {"prompts_per_city", c.prompts_per_city},
                       {"measure", c.measure},
                       {"scope", c.scope},
                       {"mode", c.mode},
                       {"counts", c.counts_path},
                       {"generations", c.generations_path},
                       {"random_seeds", c.random_seeds},
                       {"zero_cap", c.zero_cap},
                       {"backend_url", c.backend_url},
                       {"mock", c.mock_path},
                       {"num_beams", c.num_beams},
                       {"top_k", c.top_k},
                       {"temperature", c.temperature},
                       {"max_new_tokens", c.max_new_tokens},
                       {"seed", c.seed},
                       {"out", c.out_path}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    j.at("task").get_to(c.task);
    j.at("cities").get_to(c.cities_path);
    j.at("divisions").get_to(c.divisions_path);
    j.at("template").get_to(c.prompt_template);
    j.at("shots").get_to(c.shots);
    j.at("relations").get_to(c.relations);
    j.at("include_state").get_to(c.include_state);
    j.at("samples").get_to(c.samples_per_prompt);
    j.at("prompts_per_city").get_to(c.prompts_per_city);
    j.at("measure").get_to(c.measure);
    j.at("scope").get_to(c.scope);
    j.at("mode").get_to(c.mode);
    j.at("counts").get_to(c.counts_path);
    j.at("generations").get_to(c.generations_path);
    j.at("random_seeds").get_to(c.random_seeds);
    j.at("zero_cap").get_to(c.zero_cap);
    j.at("backend_url").get_to(c.backend_url);
    j.at("mock").get_to(c.mock_path);
    j.at("num_beams").get_to(c.num_beams);
    j.at("top_k").get_to(c.top_k);
    j.at("temperature").get_to(c.temperature);
    j.at("max_new_tokens").get_to(c.max_new_tokens);
    j.at("seed").get_to(c.seed);
    j.at("out").get_to(c.out_path);
}

struct ExperimentResult {
    std::string task;
    std::map<std::size_t, GenerationRecord> records;
    nlohmann::json summary;
};

// --------------------------------------------------------------------------

namespace detail {

inline GenerationRecord run_record(RecordStore& store, GenerationBackend& backend,
                                   GenerationRecord skeleton) {
    if (const GenerationRecord* existing = store.find(skeleton.index)) {
        if (existing->prompt != skeleton.prompt)
            throw ConfigError("resume mismatch at record " + std::to_string(skeleton.index) +
                              ": existing file was produced by a different config");
        backend.note_replayed(existing->prompt, existing->completions.size());
        return *existing;
    }
    skeleton.completions = backend.generate(skeleton.prompt, skeleton.params);
    skeleton.retries = backend.last_retries();
    return skeleton;  // caller parses, fills metrics, then store.add()s
}

inline AlignmentMode mode_from_name(const std::string& s) {
    if (s == "standard") return AlignmentMode::StandardUmeyama;
    if (s == "exact-pseudocode") return AlignmentMode::ExactPseudocode;
    throw ConfigError("unknown mode: " + s);
}

inline EvaluationScope scope_from_name(const std::string& s) {
    if (s == "contiguous") return EvaluationScope::Contiguous;
    if (s == "divisions") return EvaluationScope::Divisions;
    throw ConfigError("unknown scope: " + s);
}

inline std::string records_path(const ExperimentConfig& cfg) {
    return cfg.out_path.empty() ? std::string{} : cfg.out_path + ".jsonl";
}

inline nlohmann::json base_summary(const ExperimentConfig& cfg, const RecordStore& store) {
    nlohmann::json j;
    j["task"] = cfg.task;
    j["version"] = kToolVersion;
    j["config"] = cfg;
    j["records"] = store.size();
    return j;
}

inline void write_summary(const ExperimentConfig& cfg, const nlohmann::json& summary) {
    if (cfg.out_path.empty()) return;
    std::ofstream f(cfg.out_path + ".json", std::ios::trunc);
    if (!f) throw ConfigError("cannot write summary: " + cfg.out_path + ".json");
    f << summary.dump(2) << "\n";
}

}  // namespace detail

// --------------------------------------------------------------------------
// Knowledge task: probe the model for every city's coordinates, parse the
// completions, and aggregate mean error (over parsed predictions) plus
// prediction rate.

inline ExperimentResult run_knowledge_task(const ExperimentConfig& cfg,
                                           GenerationBackend& backend) {
    const std::vector<City> cities = load_cities_csv(cfg.cities_path);
    if (cities.empty()) throw ConfigError("no cities in " + cfg.cities_path);
    const bool instruction = cfg.prompt_template.rfind("instruction", 0) == 0;
    if (instruction && cfg.shots != 0)
        throw ConfigError("instruction template is zero-shot; --shots must be 0");

    const int max_tokens = cfg.max_new_tokens > 0 ? cfg.max_new_tokens : 32;
    const DecodingParams params = DecodingParams::beam_search(cfg.num_beams, max_tokens, 1);

    RecordStore store(detail::records_path(cfg));
    std::vector<ParseOutcome> outcomes;
    std::vector<std::pair<GeoCoordinate, GeoCoordinate>> parsed_pairs;

    for (std::size_t i = 0; i < cities.size(); ++i) {
        GenerationRecord rec;
        rec.index = i;
        rec.task = "knowledge";
        rec.city_index = static_cast<int>(i);
        rec.params = params;
        rec.shot_seed = mix_seed(cfg.seed, i);
        Rng rng(rec.shot_seed);
        if (instruction) {
            const InstructionWording wording = cfg.prompt_template == "instruction-latlon"
                                                   ? InstructionWording::LatitudeLongitude
                                                   : InstructionWording::GeoCoordinates;
            rec.prompt = render_instruction_prompt(cities[i], wording);
        } else if (cfg.prompt_template == "1" || cfg.prompt_template == "2") {
            const CoordTemplate tmpl = cfg.prompt_template == "1"
                                           ? CoordTemplate::GeoCoordinates
                                           : CoordTemplate::LatitudeLongitude;
            const auto shots = sample_coordinate_shots(cities, i, cfg.shots, rng);
            rec.prompt = render_coordinate_prompt(cities[i], tmpl, shots);
        } else {
            throw ConfigError("unknown template: " + cfg.prompt_template);
        }

        const bool fresh = store.find(i) == nullptr;
        rec = detail::run_record(store, backend, std::move(rec));
        if (fresh) {
            rec.parse = parse_coordinates(rec.completions.front());
            if (rec.parse.parsed())
                rec.error_km = haversine_km(cities[i].coordinate, rec.parse.coordinate());
            store.add(rec);
        }
        outcomes.push_back(rec.parse);
        if (rec.parse.parsed())
            parsed_pairs.emplace_back(cities[i].coordinate, rec.parse.coordinate());
    }
    store.finalize();

    nlohmann::json summary = detail::base_summary(cfg, store);
    nlohmann::json metrics;
    metrics["prediction_rate"] = prediction_rate(outcomes);
    metrics["parsed"] = parsed_pairs.size();
    metrics["failed"] = outcomes.size() - parsed_pairs.size();
    if (!parsed_pairs.empty())
        metrics["mean_error_km"] = mean_error_km(parsed_pairs);
    else
        metrics["mean_error_km"] = nullptr;
    summary["metrics"] = metrics;
    detail::write_summary(cfg, summary);
    return {cfg.task, store.records(), summary};
}

// --------------------------------------------------------------------------
// Awareness task: for every city x relation, build prompts-per-city
// prompts (shots re-sampled per prompt), draw samples-per-prompt
// completions sequentially (keeps mock cycling deterministic), and resolve
// each completion to a gazetteer city.

inline ExperimentResult run_awareness_task(const ExperimentConfig& cfg,
                                           GenerationBackend& backend) {
    const std::vector<City> cities = load_cities_csv(cfg.cities_path);
    if (cities.size() < 2) throw ConfigError("awareness task needs at least 2 cities");
    if (cfg.include_state)
        for (const City& c : cities)
            if (c.admin1.empty())
                throw ConfigError("--include-state set but city has no admin1: " + c.name);
    if (cfg.samples_per_prompt <= 0 || cfg.prompts_per_city <= 0)
        throw ConfigError("samples and prompts-per-city must be positive");

    const Gazetteer gazetteer(cities);
    const int max_tokens = cfg.max_new_tokens > 0 ? cfg.max_new_tokens : 24;
    DecodingParams params =
        DecodingParams::top_k_sampling(cfg.top_k, cfg.temperature, max_tokens, 1);
    params.seed = static_cast<std::int64_t>(cfg.seed);  // forwarded; remote may ignore

    std::vector<Relation> relations;
    for (const std::string& r : cfg.relations) relations.push_back(relation_from_name(r));

    RecordStore store(detail::records_path(cfg));
    // relation -> (distances of parsed generations, outcomes, generation pairs)
    std::map<std::string, std::vector<double>> distances;
    std::map<std::string, std::vector<ParseOutcome>> outcomes;
    std::map<std::string, std::map<std::pair<int, int>, std::uint64_t>> generation_counts;
    std::size_t ambiguous_resolutions = 0;

    std::size_t index = 0;
    for (std::size_t ci = 0; ci < cities.size(); ++ci) {
        for (std::size_t ri = 0; ri < relations.size(); ++ri) {
            const Relation rel = relations[ri];
            for (int p = 0; p < cfg.prompts_per_city; ++p) {
                const std::uint64_t shot_seed = mix_seed(
                    mix_seed(cfg.seed, ci * relations.size() + ri), static_cast<std::uint64_t>(p));
                Rng rng(shot_seed);
                const auto shots =
                    sample_preposition_shots(cities, ci, cfg.shots, rng);
                const std::string prompt =
                    render_preposition_prompt(cities[ci], rel, cfg.include_state, shots);
                for (int s = 0; s < cfg.samples_per_prompt; ++s, ++index) {
                    GenerationRecord rec;
                    rec.index = index;
                    rec.task = "awareness";
                    rec.city_index = static_cast<int>(ci);
                    rec.relation = relation_name(rel);
                    rec.prompt_index = p;
                    rec.sample_index = s;
                    rec.shot_seed = shot_seed;
                    rec.prompt = prompt;
                    rec.params = params;

                    const bool fresh = store.find(index) == nullptr;
                    rec = detail::run_record(store, backend, std::move(rec));
                    if (fresh) {
                        rec.parse = parse_place(rec.completions.front(), gazetteer,
                                                static_cast<int>(ci));
                        if (rec.parse.parsed()) {
                            const City& gen = gazetteer.city(rec.parse.place().city_index);
                            rec.distance_km =
                                haversine_km(cities[ci].coordinate, gen.coordinate);
                            rec.generated_city = gen.qualified_name();
                        }
                        store.add(rec);
                    }
                    outcomes[rec.relation].push_back(rec.parse);
                    if (rec.parse.parsed()) {
                        distances[rec.relation].push_back(rec.distance_km);
                        ++generation_counts[rec.relation][{static_cast<int>(ci),
                                                           rec.parse.place().city_index}];
                        if (rec.parse.place().ambiguous) ++ambiguous_resolutions;
                    }
                }
            }
        }
    }
    store.finalize();

    nlohmann::json summary = detail::base_summary(cfg, store);
    nlohmann::json rel_metrics = nlohmann::json::object();
    for (const Relation rel : relations) {
        const std::string name = relation_name(rel);
        nlohmann::json m;
        const auto& outc = outcomes[name];
        m["count"] = outc.size();
        m["prediction_rate"] = outc.empty() ? 0.0 : prediction_rate(outc);
        auto& dist = distances[name];
        m["parsed"] = dist.size();
        if (!dist.empty()) {
            double sum = 0.0;
            for (double d : dist) sum += d;
            m["distance_mean_km"] = sum / static_cast<double>(dist.size());
            std::vector<double> sorted = dist;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t n = sorted.size();
            m["distance_median_km"] =
                n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
        }
        m["distances_km"] = dist;
        nlohmann::json pairs = nlohmann::json::array();
        for (const auto& [key, count] : generation_counts[name])
            pairs.push_back({cities[static_cast<std::size_t>(key.first)].qualified_name(),
                             cities[static_cast<std::size_t>(key.second)].qualified_name(),
                             count});
        m["generation_counts"] = pairs;
        rel_metrics[name] = m;
    }
    nlohmann::json metrics;
    metrics["relations"] = rel_metrics;
    metrics["ambiguous_resolutions"] = ambiguous_resolutions;
    summary["metrics"] = metrics;
    detail::write_summary(cfg, summary);
    return {cfg.task, store.records(), summary};
}

// --------------------------------------------------------------------------
// Reasoning task: build the selected dissimilarity provider, run the
// leave-one-out evaluation for the configured scope, persist the result
// (per-city predictions double as the Figure-5 marker data).

/// CountTable JSON: {"occurrences": {name: int}, "cooccurrences":
/// [[nameA, nameB, int], ...], "sentences": int}. Names are qualified
/// ("Name, Admin1") so same-named cities stay distinct.
inline nlohmann::json count_table_to_json(const CountTable& t, const Gazetteer& g) {
    nlohmann::json occ = nlohmann::json::object();
    for (const auto& [idx, count] : t.occurrences) occ[g.city(idx).qualified_name()] = count;
    nlohmann::json cooc = nlohmann::json::array();
    for (const auto& [key, count] : t.cooccurrences)
        cooc.push_back({g.city(key.first).qualified_name(),
                        g.city(key.second).qualified_name(), count});
    return nlohmann::json{{"occurrences", occ}, {"cooccurrences", cooc},
                          {"sentences", t.sentences_processed}};
}

inline CountTable count_table_from_json(const nlohmann::json& j, const Gazetteer& g) {
    auto resolve = [&](const std::string& name) -> int {
        const LookupResult r = g.lookup(name);
        if (r.status != LookupStatus::Found)
            throw ConfigError("count table city not in gazetteer or ambiguous: " + name);
        return r.index;
    };
    CountTable t;
    for (const auto& [name, count] : j.at("occurrences").items())
        t.occurrences[resolve(name)] = count.get<std::uint64_t>();
    for (const auto& entry : j.at("cooccurrences")) {
        int a = resolve(entry.at(0).get<std::string>());
        int b = resolve(entry.at(1).get<std::string>());
        if (a > b) std::swap(a, b);
        t.cooccurrences[{a, b}] = entry.at(2).get<std::uint64_t>();
    }
    t.sentences_processed = j.at("sentences").get<std::uint64_t>();
    return t;
}

namespace detail {

/// Query the backend for every unordered pair's distance; failed parses
/// fall back to twice the largest parsed distance (logged in the summary).
inline TableProvider::Table predicted_distance_table(const ExperimentConfig& cfg,
                                                     const std::vector<City>& cities,
                                                     GenerationBackend& backend,
                                                     RecordStore& store,
                                                     std::vector<std::string>& fallback_pairs) {
    const int max_tokens = cfg.max_new_tokens > 0 ? cfg.max_new_tokens : 32;
    const DecodingParams params = DecodingParams::beam_search(cfg.num_beams, max_tokens, 1);
    TableProvider::Table table;
    std::vector<std::pair<std::pair<std::string, std::string>, std::string>> missing;
    double max_parsed = 0.0;
    std::size_t index = 0;
    for (std::size_t i = 0; i < cities.size(); ++i) {
        for (std::size_t j = i + 1; j < cities.size(); ++j, ++index) {
            GenerationRecord rec;
            rec.index = index;
            rec.task = "reasoning-distance";
            rec.city_index = static_cast<int>(i);
            rec.pair_b = static_cast<int>(j);
            rec.prompt = render_distance_prompt(cities[i], cities[j]);
            rec.params = params;

            const bool fresh = store.find(index) == nullptr;
            rec = run_record(store, backend, std::move(rec));
            if (fresh) {
                rec.parse = parse_distance_km(rec.completions.front());
                store.add(rec);
            }
            const auto key = geoprobe::detail::pair_key(cities[i], cities[j]);
            if (rec.parse.parsed()) {
                table[key] = rec.parse.km();
                max_parsed = std::max(max_parsed, rec.parse.km());
            } else {
                missing.push_back({key, cities[i].qualified_name() + " / " +
                                            cities[j].qualified_name()});
            }
        }
    }
    const double fallback = max_parsed > 0.0 ? 2.0 * max_parsed : 1.0;
    for (const auto& [key, label] : missing) {
        table[key] = fallback;
        fallback_pairs.push_back(label);
    }
    return table;
}

/// Aggregate directional generation counts from an awareness JSONL,
/// filtered to one relation, keyed by this run's city indices.
inline std::map<std::pair<int, int>, std::uint64_t> load_generation_counts(
    const std::string& path, const std::string& relation, const Gazetteer& g,
    const std::vector<City>& cities) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open generations file: " + path);
    std::map<std::pair<int, int>, std::uint64_t> directional;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.value("task", "") != "awareness") continue;
        if (j.value("relation", "") != relation) continue;
        if (!j.contains("generated_city")) continue;
        const int prompt_city = j.at("city_index").get<int>();
        if (prompt_city < 0 || static_cast<std::size_t>(prompt_city) >= cities.size())
            throw ConfigError(path + " line " + std::to_string(lineno) +
                              ": city_index out of range for this cities file");
        const LookupResult r = g.lookup(j.at("generated_city").get<std::string>());
        if (r.status != LookupStatus::Found) continue;  // generated city not in this universe
        ++directional[{prompt_city, r.index}];
    }
    return directional;
}

inline TableProvider::Table reciprocal_table_from_counts(
    const std::map<std::pair<int, int>, std::uint64_t>& pair_counts,
    const std::vector<City>& cities, double zero_cap, bool reciprocal) {
    std::vector<std::uint64_t> all;
    const std::size_t n = cities.size();
    std::vector<std::vector<std::uint64_t>> counts(n, std::vector<std::uint64_t>(n, 0));
    for (const auto& [key, c] : pair_counts) {
        if (key.first < 0 || key.second < 0) continue;
        if (static_cast<std::size_t>(key.first) >= n || static_cast<std::size_t>(key.second) >= n)
            continue;
        counts[static_cast<std::size_t>(key.first)][static_cast<std::size_t>(key.second)] = c;
        counts[static_cast<std::size_t>(key.second)][static_cast<std::size_t>(key.first)] = c;
        all.push_back(c);
    }
    const double cap = zero_cap > 0.0 ? zero_cap : default_zero_count_cap(all);
    TableProvider::Table table;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto key = geoprobe::detail::pair_key(cities[i], cities[j]);
            table[key] = reciprocal ? reciprocal_dissimilarity(counts[i][j], cap)
                                    : static_cast<double>(counts[i][j]);
        }
    return table;
}

inline nlohmann::json reasoning_result_to_json(const ReasoningResult& r,
                                               const std::vector<City>& cities) {
    nlohmann::json per_city = nlohmann::json::array();
    for (const auto& pc : r.per_city) {
        const City& c = cities[static_cast<std::size_t>(pc.city_index)];
        nlohmann::json entry{{"city_index", pc.city_index},
                             {"city", c.qualified_name()},
                             {"actual_lat", c.coordinate.lat_deg},
                             {"actual_lon", c.coordinate.lon_deg},
                             {"predicted_lat", pc.predicted.lat_deg},
                             {"predicted_lon", pc.predicted.lon_deg},
                             {"error_km", pc.error_km},
                             {"clamped", pc.clamped}};
        if (pc.clamped) {  // keep the out-of-range raw output for diagnostics
            entry["raw_lat"] = pc.raw_lat;
            entry["raw_lon"] = pc.raw_lon;
        }
        per_city.push_back(entry);
    }
    return nlohmann::json{
        {"scope", r.scope == EvaluationScope::Contiguous ? "contiguous" : "divisions"},
        {"mean_error_km", r.mean_error_km},
        {"per_city", per_city},
        {"warnings", r.warnings}};
}

}  // namespace detail

inline ExperimentResult run_reasoning_task(const ExperimentConfig& cfg,
                                           GenerationBackend* backend) {
    const std::vector<City> cities = load_cities_csv(cfg.cities_path);
    if (cities.size() < 4) throw ConfigError("reasoning task needs at least 4 cities");
    const EvaluationScope scope = detail::scope_from_name(cfg.scope);
    const AlignmentMode mode = detail::mode_from_name(cfg.mode);
    std::map<std::string, std::string> divisions;
    if (scope == EvaluationScope::Divisions) {
        if (cfg.divisions_path.empty())
            throw ConfigError("divisions scope needs --divisions");
        divisions = load_divisions_csv(cfg.divisions_path);
    }
    const Gazetteer gazetteer(cities);

    RecordStore store(detail::records_path(cfg));
    nlohmann::json metrics;
    metrics["measure"] = cfg.measure;

    if (cfg.measure == "random") {
        // ten different random predictions, averaged (seeds seed..seed+k-1)
        if (cfg.random_seeds <= 0) throw ConfigError("--random-seeds must be positive");
        std::vector<double> seed_means;
        std::map<int, std::vector<ReasoningResult::PerCity>> per_city_runs;
        ReasoningResult last;
        for (int s = 0; s < cfg.random_seeds; ++s) {
            RandomDistanceProvider provider(cfg.seed + static_cast<std::uint64_t>(s));
            last = evaluate_scope(cities, divisions, provider, scope, mode);
            seed_means.push_back(last.mean_error_km);
            for (const auto& pc : last.per_city) per_city_runs[pc.city_index].push_back(pc);
        }
        double total = 0.0;
        for (double m : seed_means) total += m;
        ReasoningResult averaged;
        averaged.scope = scope;
        averaged.warnings = last.warnings;
        averaged.mean_error_km = total / static_cast<double>(seed_means.size());
        for (const auto& [city_index, runs] : per_city_runs) {
            ReasoningResult::PerCity pc = runs.front();
            double err = 0.0;
            for (const auto& r : runs) err += r.error_km;
            pc.error_km = err / static_cast<double>(runs.size());
            averaged.per_city.push_back(pc);  // predicted coords: first seed's run
        }
        metrics["seed_means_km"] = seed_means;
        metrics["result"] = detail::reasoning_result_to_json(averaged, cities);
    } else {
        std::unique_ptr<DissimilarityProvider> provider;
        std::vector<std::string> fallback_pairs;
        if (cfg.measure == "actual") {
            provider = std::make_unique<ActualDistanceProvider>();
        } else if (cfg.measure == "predicted-distance") {
            if (!backend) throw ConfigError("predicted-distance needs a backend");
            provider = std::make_unique<TableProvider>(
                "predicted-distance",
                detail::predicted_distance_table(cfg, cities, *backend, store, fallback_pairs));
        } else if (cfg.measure == "reciprocal-cooccurrence") {
            if (cfg.counts_path.empty())
                throw ConfigError("reciprocal-cooccurrence needs --counts");
            std::ifstream f(cfg.counts_path);
            if (!f) throw ConfigError("cannot open counts file: " + cfg.counts_path);
            nlohmann::json doc;
            try {
                f >> doc;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("counts file " + cfg.counts_path + ": " + e.what());
            }
            const CountTable table = count_table_from_json(doc, gazetteer);
            provider = std::make_unique<TableProvider>(
                "reciprocal-cooccurrence",
                detail::reciprocal_table_from_counts(table.cooccurrences, cities, cfg.zero_cap,
                                                     /*reciprocal=*/true));
        } else if (cfg.measure == "reciprocal-generation" || cfg.measure == "far-generation") {
            if (cfg.generations_path.empty())
                throw ConfigError(cfg.measure + " needs --generations");
            if (cfg.relations.size() != 1)
                throw ConfigError(cfg.measure + " needs exactly one --relation");
            const auto directional = detail::load_generation_counts(
                cfg.generations_path, cfg.relations.front(), gazetteer, cities);
            const auto pair_counts = symmetrize_counts(directional);
            provider = std::make_unique<TableProvider>(
                cfg.measure,
                detail::reciprocal_table_from_counts(
                    pair_counts, cities, cfg.zero_cap,
                    /*reciprocal=*/cfg.measure == "reciprocal-generation"));
        } else {
            throw ConfigError("unknown measure: " + cfg.measure);
        }

        const ReasoningResult result = evaluate_scope(cities, divisions, *provider, scope, mode);
        metrics["result"] = detail::reasoning_result_to_json(result, cities);
        if (!fallback_pairs.empty()) metrics["fallback_pairs"] = fallback_pairs;
    }

    store.finalize();
    nlohmann::json summary = detail::base_summary(cfg, store);
    summary["metrics"] = metrics;
    detail::write_summary(cfg, summary);
    return {cfg.task, store.records(), summary};
}

// --------------------------------------------------------------------------
// GeoJSON emission (RFC 7946; coordinates are [lon, lat]).

/// Heatmap of generated places: one Point feature per (prompt city,
/// relation, generated city), counts aggregated, optionally filtered to a
/// single relation.
inline nlohmann::json emit_heatmap(std::span<const GenerationRecord> records,
                                   const Gazetteer& gazetteer,
                                   const std::string& relation_filter = {}) {
    struct Key {
        std::string prompt_city;
        std::string relation;
        int generated = -1;
        bool operator<(const Key& o) const {
            return std::tie(prompt_city, relation, generated) <
                   std::tie(o.prompt_city, o.relation, o.generated);
        }
    };
    std::map<Key, std::uint64_t> counts;
    for (const GenerationRecord& r : records) {
        if (r.task != "awareness" || !r.parse.parsed()) continue;
        if (!std::holds_alternative<PlaceRef>(r.parse.value)) continue;
        if (!relation_filter.empty() && r.relation != relation_filter) continue;
        const City& prompt_city = gazetteer.city(r.city_index);
        counts[{prompt_city.qualified_name(), r.relation, r.parse.place().city_index}] += 1;
    }
    nlohmann::json features = nlohmann::json::array();
    for (const auto& [key, count] : counts) {
        const City& gen = gazetteer.city(key.generated);
        features.push_back(
            {{"type", "Feature"},
             {"geometry",
              {{"type", "Point"},
               {"coordinates", {gen.coordinate.lon_deg, gen.coordinate.lat_deg}}}},
             {"properties",
              {{"name", gen.qualified_name()},
               {"count", count},
               {"relation", key.relation},
               {"prompt_city", key.prompt_city}}}});
    }
    return nlohmann::json{{"type", "FeatureCollection"}, {"features", features}};
}

/// Figure-5 style marker triple for one city: actual location, prediction
/// from actual distances, prediction from predicted distances.
inline nlohmann::json emit_markers(const GeoCoordinate& actual,
                                   const GeoCoordinate& pred_from_actual,
                                   const GeoCoordinate& pred_from_predicted) {
    for (const GeoCoordinate* c : {&actual, &pred_from_actual, &pred_from_predicted})
        if (!c->valid()) throw std::invalid_argument("emit_markers: invalid coordinate");
    auto feature = [](const GeoCoordinate& c, const char* role) {
        return nlohmann::json{
            {"type", "Feature"},
            {"geometry", {{"type", "Point"}, {"coordinates", {c.lon_deg, c.lat_deg}}}},
            {"properties", {{"role", role}}}};
    };
    return nlohmann::json{{"type", "FeatureCollection"},
                          {"features",
                           {feature(actual, "actual"), feature(pred_from_actual, "pred_actual"),
                            feature(pred_from_predicted, "pred_predicted")}}};
}

}  // namespace geoprobe
