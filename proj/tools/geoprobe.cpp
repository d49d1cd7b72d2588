// geoprobe: command-line front end for the three geospatial probes
// (knowledge / awareness / reasoning), corpus co-occurrence counting,
// correlation analysis, and GeoJSON rendering.
//
// Exit codes: 0 success, 1 configuration error, 2 backend failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "geoprobe/backend.hpp"
#include "geoprobe/harness.hpp"

namespace {

using namespace geoprobe;

std::unique_ptr<GenerationBackend> make_backend(const ExperimentConfig& cfg, bool required) {
    if (!cfg.mock_path.empty()) return mock_from_file(cfg.mock_path);
    std::string url = cfg.backend_url;
    if (url.empty()) {
        if (const char* env = std::getenv("GEOPROBE_BACKEND_URL")) url = env;
    }
    if (url.empty()) {
        if (required)
            throw ConfigError("no backend: pass --mock or --backend-url "
                              "(or set GEOPROBE_BACKEND_URL)");
        return nullptr;
    }
    RemoteBackendOptions options;
    options.base_url = url;
    if (const char* token = std::getenv("GEOPROBE_BACKEND_TOKEN")) options.bearer_token = token;
    return std::make_unique<RemoteBackend>(options);
}

void add_backend_flags(CLI::App* cmd, ExperimentConfig& cfg) {
    cmd->add_option("--backend-url", cfg.backend_url,
                    "Base URL of a /generate endpoint (default: $GEOPROBE_BACKEND_URL)");
    cmd->add_option("--mock", cfg.mock_path, "Mock rules JSON file (deterministic backend)");
    cmd->add_option("--seed", cfg.seed, "Random seed (shot sampling, random baseline)");
    cmd->add_option("--out", cfg.out_path,
                    "Output path prefix: writes <out>.jsonl and <out>.json");
    cmd->add_option("--max-new-tokens", cfg.max_new_tokens,
                    "Override generation length (0 = task default)");
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + path);
    f << doc.dump(2) << "\n";
}

std::vector<GenerationRecord> load_records_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open records file: " + path);
    std::vector<GenerationRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

int run(int argc, char** argv) {
    CLI::App app{"geoprobe: geospatial probes of text-generation models"};
    app.require_subcommand(1);

    ExperimentConfig cfg;

    auto* knowledge = app.add_subcommand("knowledge", "Coordinate-knowledge probing");
    knowledge->add_option("--cities", cfg.cities_path, "Cities CSV")->required();
    knowledge->add_option("--template", cfg.prompt_template,
                          "1 | 2 | instruction-geo | instruction-latlon");
    knowledge->add_option("--shots", cfg.shots, "Completed examples per prompt");
    knowledge->add_option("--num-beams", cfg.num_beams, "Beam count (default 5)");
    add_backend_flags(knowledge, cfg);

    auto* awareness = app.add_subcommand("awareness", "Preposition-based awareness probing");
    awareness->add_option("--cities", cfg.cities_path, "Cities CSV")->required();
    std::string relation_arg = "all";
    awareness->add_option("--relation", relation_arg, "near | close-to | far-from | and | all");
    awareness->add_flag("--include-state,!--no-include-state", cfg.include_state,
                        "Qualify city names with their state (default on)");
    awareness->add_option("--samples", cfg.samples_per_prompt, "Samples per prompt (default 50)");
    awareness->add_option("--prompts-per-city", cfg.prompts_per_city,
                          "Prompt variants per city (default 10)");
    awareness->add_option("--shots", cfg.shots, "Completed examples per prompt");
    awareness->add_option("--top-k", cfg.top_k, "Top-k cutoff (default 100)");
    awareness->add_option("--temperature", cfg.temperature, "Sampling temperature (default 0.9)");
    add_backend_flags(awareness, cfg);

    auto* reasoning = app.add_subcommand("reasoning", "MDS location prediction");
    reasoning->add_option("--cities", cfg.cities_path, "Cities CSV")->required();
    reasoning->add_option("--divisions", cfg.divisions_path, "state,division CSV");
    reasoning->add_option("--measure", cfg.measure,
                          "actual | random | predicted-distance | reciprocal-cooccurrence | "
                          "reciprocal-generation | far-generation");
    reasoning->add_option("--scope", cfg.scope, "contiguous | divisions");
    reasoning->add_option("--mode", cfg.mode, "standard | exact-pseudocode");
    reasoning->add_option("--counts", cfg.counts_path, "CountTable JSON (co-occurrence measure)");
    reasoning->add_option("--generations", cfg.generations_path,
                          "Awareness records JSONL (generation measures)");
    std::string reasoning_relation = "near";
    reasoning->add_option("--relation", reasoning_relation,
                          "Relation for generation measures (default near)");
    reasoning->add_option("--random-seeds", cfg.random_seeds,
                          "Random-baseline repetitions (default 10)");
    reasoning->add_option("--zero-cap", cfg.zero_cap,
                          "Dissimilarity for never-observed pairs (0 = auto)");
    reasoning->add_option("--num-beams", cfg.num_beams, "Beam count (default 5)");
    add_backend_flags(reasoning, cfg);

    auto* cooccur = app.add_subcommand("cooccur", "Corpus occurrence/co-occurrence counting");
    std::string corpus_cities, corpus_out, ambiguous_policy = "credit-all";
    std::vector<std::string> corpus_files;
    cooccur->add_option("--cities", corpus_cities, "Cities CSV (the gazetteer)")->required();
    cooccur->add_option("--corpus", corpus_files, "Plain-text or gzip corpus file(s)")
        ->required();
    cooccur->add_option("--ambiguous", ambiguous_policy,
                        "Bare ambiguous names: credit-all | skip (default credit-all)");
    cooccur->add_option("--out", corpus_out, "Output CountTable JSON")->required();

    auto* stats_cmd = app.add_subcommand("stats", "Correlation table from awareness records");
    std::string stats_cities, stats_records, stats_counts, stats_out;
    stats_cmd->add_option("--cities", stats_cities, "Cities CSV")->required();
    stats_cmd->add_option("--records", stats_records, "Awareness records JSONL")->required();
    stats_cmd->add_option("--counts", stats_counts, "CountTable JSON")->required();
    stats_cmd->add_option("--out", stats_out, "Output JSON")->required();

    auto* render = app.add_subcommand("render", "GeoJSON rendering");
    render->require_subcommand(1);
    auto* heatmap = render->add_subcommand("heatmap", "Generated-place heatmap points");
    std::string hm_cities, hm_records, hm_relation, hm_out;
    heatmap->add_option("--cities", hm_cities, "Cities CSV")->required();
    heatmap->add_option("--records", hm_records, "Awareness records JSONL")->required();
    heatmap->add_option("--relation", hm_relation, "Filter to one relation (optional)");
    heatmap->add_option("--out", hm_out, "Output GeoJSON")->required();
    auto* markers = render->add_subcommand("markers", "Actual vs predicted markers for a city");
    std::string mk_city, mk_actual_summary, mk_predicted_summary, mk_out;
    markers->add_option("--city", mk_city, "Qualified city name (e.g. 'Albany, New York')")
        ->required();
    markers->add_option("--from-actual", mk_actual_summary,
                        "reasoning summary JSON (measure actual)")->required();
    markers->add_option("--from-predicted", mk_predicted_summary,
                        "reasoning summary JSON (measure predicted-distance)")->required();
    markers->add_option("--out", mk_out, "Output GeoJSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message / help text
        return code == 0 ? 0 : 1;
    }

    if (knowledge->parsed()) {
        cfg.task = "knowledge";
        auto backend = make_backend(cfg, true);
        const ExperimentResult result = run_knowledge_task(cfg, *backend);
        std::cout << result.summary["metrics"].dump(2) << "\n";
        return 0;
    }

    if (awareness->parsed()) {
        cfg.task = "awareness";
        if (relation_arg != "all") {
            relation_from_name(relation_arg);  // validate
            cfg.relations = {relation_arg};
        }
        auto backend = make_backend(cfg, true);
        const ExperimentResult result = run_awareness_task(cfg, *backend);
        nlohmann::json brief = nlohmann::json::object();
        for (const auto& [rel, m] : result.summary["metrics"]["relations"].items())
            brief[rel] = {{"prediction_rate", m["prediction_rate"]},
                          {"distance_median_km",
                           m.contains("distance_median_km") ? m["distance_median_km"] : nullptr}};
        std::cout << brief.dump(2) << "\n";
        return 0;
    }

    if (reasoning->parsed()) {
        cfg.task = "reasoning";
        cfg.relations = {reasoning_relation};
        auto backend = make_backend(cfg, cfg.measure == "predicted-distance");
        const ExperimentResult result = run_reasoning_task(cfg, backend.get());
        nlohmann::json brief{{"measure", cfg.measure},
                             {"scope", cfg.scope},
                             {"mean_error_km", result.summary["metrics"]["result"]["mean_error_km"]}};
        std::cout << brief.dump(2) << "\n";
        return 0;
    }

    if (cooccur->parsed()) {
        AmbiguousNamePolicy policy;
        if (ambiguous_policy == "credit-all")
            policy = AmbiguousNamePolicy::CreditAll;
        else if (ambiguous_policy == "skip")
            policy = AmbiguousNamePolicy::Skip;
        else
            throw ConfigError("unknown --ambiguous policy: " + ambiguous_policy);
        const Gazetteer gazetteer(load_cities_csv(corpus_cities));
        CountTable table;
        for (const std::string& path : corpus_files)
            table.merge(count_corpus_file(path, gazetteer, policy));
        write_json_file(corpus_out, count_table_to_json(table, gazetteer));
        std::cout << "{\"sentences\": " << table.sentences_processed << ", \"cities_seen\": "
                  << table.occurrences.size() << "}\n";
        return 0;
    }

    if (stats_cmd->parsed()) {
        const std::vector<City> cities = load_cities_csv(stats_cities);
        const Gazetteer gazetteer(cities);
        nlohmann::json counts_doc;
        {
            std::ifstream f(stats_counts);
            if (!f) throw ConfigError("cannot open counts file: " + stats_counts);
            f >> counts_doc;
        }
        const CountTable counts = count_table_from_json(counts_doc, gazetteer);
        const auto records = load_records_jsonl(stats_records);
        std::map<std::string, std::vector<GenerationPair>> by_relation;
        for (const GenerationRecord& r : records) {
            if (r.task != "awareness" || !r.parse.parsed()) continue;
            if (!std::holds_alternative<PlaceRef>(r.parse.value)) continue;
            by_relation[r.relation].push_back({r.city_index, r.parse.place().city_index});
        }
        nlohmann::json rows = nlohmann::json::object();
        for (const auto& [relation, pairs] : by_relation) {
            try {
                const CorrelationRow row = table3_analysis(pairs, counts, cities);
                rows[relation] = {
                    {"distance_and_generation", row.distance_and_generation},
                    {"cooccurrence_and_generation", row.cooccurrence_and_generation},
                    {"prompt_city_and_generation", row.prompt_city_and_generation},
                    {"generated_city_and_generation", row.generated_city_and_generation},
                    {"distance_and_cooccurrence", row.distance_and_cooccurrence}};
            } catch (const std::invalid_argument& e) {
                // degenerate input (constant series) is reported, not hidden
                rows[relation] = {{"error", e.what()}};
            }
        }
        write_json_file(stats_out, nlohmann::json{{"rows", rows}});
        std::cout << rows.dump(2) << "\n";
        return 0;
    }

    if (heatmap->parsed()) {
        const Gazetteer gazetteer(load_cities_csv(hm_cities));
        const auto records = load_records_jsonl(hm_records);
        write_json_file(hm_out, emit_heatmap(records, gazetteer, hm_relation));
        return 0;
    }

    if (markers->parsed()) {
        auto load_prediction = [&](const std::string& path,
                                   GeoCoordinate& actual) -> GeoCoordinate {
            std::ifstream f(path);
            if (!f) throw ConfigError("cannot open summary: " + path);
            nlohmann::json doc;
            f >> doc;
            for (const auto& pc : doc.at("metrics").at("result").at("per_city")) {
                if (pc.at("city").get<std::string>() == mk_city) {
                    actual = {pc.at("actual_lat").get<double>(), pc.at("actual_lon").get<double>()};
                    return {pc.at("predicted_lat").get<double>(),
                            pc.at("predicted_lon").get<double>()};
                }
            }
            throw ConfigError("city '" + mk_city + "' not found in " + path);
        };
        GeoCoordinate actual;
        const GeoCoordinate from_actual = load_prediction(mk_actual_summary, actual);
        const GeoCoordinate from_predicted = load_prediction(mk_predicted_summary, actual);
        write_json_file(mk_out, emit_markers(actual, from_actual, from_predicted));
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const geoprobe::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
