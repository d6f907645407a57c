#include "confcal/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "confcal/digest.hpp"
#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

namespace confcal {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::map<std::string, Stage> kStageByName = {
    {"sample", Stage::sample},
    {"cluster", Stage::cluster},
    {"forge", Stage::forge},
    {"eval", Stage::eval},
};

void render_canonical(const json& value, std::string& out) {
    switch (value.type()) {
        case json::value_t::object: {
            out += '{';
            // nlohmann::json objects iterate in key order already; keep the
            // sort explicit so ordered_json inputs canonicalize too.
            std::vector<std::string> keys;
            keys.reserve(value.size());
            for (auto it = value.begin(); it != value.end(); ++it) {
                keys.push_back(it.key());
            }
            std::sort(keys.begin(), keys.end());
            bool first = true;
            for (const auto& key : keys) {
                if (!first) {
                    out += ',';
                }
                first = false;
                out += json(key).dump();
                out += ':';
                render_canonical(value.at(key), out);
            }
            out += '}';
            break;
        }
        case json::value_t::array: {
            out += '[';
            bool first = true;
            for (const auto& item : value) {
                if (!first) {
                    out += ',';
                }
                first = false;
                render_canonical(item, out);
            }
            out += ']';
            break;
        }
        case json::value_t::number_float: {
            const double d = value.get<double>();
            if (!std::isfinite(d)) {
                throw DomainError("canonical_json: non-finite number");
            }
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", d);
            out += buf;
            break;
        }
        default:
            out += value.dump();
            break;
    }
}

ProviderConfig provider_from_json(const json& doc, ProviderConfig base) {
    base.base_url = doc.value("base_url", base.base_url);
    base.api_key_env = doc.value("api_key_env", base.api_key_env);
    base.timeout_ms = doc.value("timeout_ms", base.timeout_ms);
    base.max_retries = doc.value("max_retries", base.max_retries);
    base.max_in_flight = doc.value("max_in_flight", base.max_in_flight);
    base.chat_path = doc.value("chat_path", base.chat_path);
    base.embeddings_path = doc.value("embeddings_path", base.embeddings_path);
    base.model_id = doc.value("model_id", base.model_id);
    base.embed_model = doc.value("embed_model", base.embed_model);
    base.embed_instruction = doc.value("embed_instruction", base.embed_instruction);
    base.backoff_base_ms = doc.value("backoff_base_ms", base.backoff_base_ms);
    return base;
}

json provider_to_json(const ProviderConfig& cfg) {
    return json{
        {"base_url", cfg.base_url},
        {"api_key_env", cfg.api_key_env},
        {"timeout_ms", cfg.timeout_ms},
        {"max_retries", cfg.max_retries},
        {"max_in_flight", cfg.max_in_flight},
        {"chat_path", cfg.chat_path},
        {"embeddings_path", cfg.embeddings_path},
        {"model_id", cfg.model_id},
        {"embed_model", cfg.embed_model},
        {"embed_instruction", cfg.embed_instruction},
        {"backoff_base_ms", cfg.backoff_base_ms},
    };
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path);
    }
}

std::string samples_to_jsonl(const std::vector<Question>& corpus,
                             const std::vector<std::vector<ResponseSample>>& samples) {
    std::string bytes;
    for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
        for (const auto& s : samples[qi]) {
            nlohmann::ordered_json line;
            line["question_id"] = corpus[qi].id;
            line["index"] = s.index;
            line["raw_text"] = s.raw_text;
            line["correct"] = s.correct;
            bytes += line.dump();
            bytes += '\n';
        }
    }
    return bytes;
}

std::string clusters_to_jsonl(const std::vector<Question>& corpus,
                              const std::vector<ClusterSet>& clusters) {
    std::string bytes;
    for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
        nlohmann::ordered_json line;
        line["question_id"] = corpus[qi].id;
        line["threshold"] = clusters[qi].threshold;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& c : clusters[qi].clusters) {
            nlohmann::ordered_json jc;
            jc["seed"] = c.seed_index;
            jc["members"] = c.member_indices;
            jc["representative"] = c.representative_index;
            arr.push_back(jc);
        }
        line["clusters"] = arr;
        bytes += line.dump();
        bytes += '\n';
    }
    return bytes;
}

std::vector<std::vector<ResponseSample>> read_samples_jsonl(const std::string& path,
                                                            const std::vector<Question>& corpus) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read samples: " + path);
    }
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        index_of[corpus[i].id] = i;
    }
    std::vector<std::vector<ResponseSample>> samples(corpus.size());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto doc = json::parse(line);
        const auto it = index_of.find(doc.at("question_id").get<std::string>());
        if (it == index_of.end()) {
            throw CorpusError("samples file references unknown question id");
        }
        ResponseSample s;
        s.index = doc.at("index").get<std::size_t>();
        s.raw_text = doc.at("raw_text").get<std::string>();
        s.correct = doc.at("correct").get<bool>();
        auto [chain, answer] = split_reasoning_and_answer(s.raw_text);
        s.reasoning_chain = std::move(chain);
        s.extracted_answer = std::move(answer);
        samples[it->second].push_back(std::move(s));
    }
    for (auto& qs : samples) {
        std::sort(qs.begin(), qs.end(),
                  [](const ResponseSample& a, const ResponseSample& b) { return a.index < b.index; });
    }
    return samples;
}

std::vector<ClusterSet> read_clusters_jsonl(const std::string& path,
                                            const std::vector<Question>& corpus,
                                            const std::vector<std::vector<ResponseSample>>& samples) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read clusters: " + path);
    }
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        index_of[corpus[i].id] = i;
    }
    std::vector<ClusterSet> clusters(corpus.size());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto doc = json::parse(line);
        const auto it = index_of.find(doc.at("question_id").get<std::string>());
        if (it == index_of.end()) {
            throw CorpusError("clusters file references unknown question id");
        }
        ClusterSet set;
        set.threshold = doc.at("threshold").get<double>();
        set.n_total = samples[it->second].size();
        for (const auto& jc : doc.at("clusters")) {
            Cluster c;
            c.seed_index = jc.at("seed").get<std::size_t>();
            c.member_indices = jc.at("members").get<std::vector<std::size_t>>();
            c.representative_index = jc.at("representative").get<std::size_t>();
            set.clusters.push_back(std::move(c));
        }
        try {
            validate_cluster_set(set);
        } catch (const DomainError& e) {
            throw CorpusError("clusters file inconsistent with samples for question '" +
                              corpus[it->second].id + "': " + e.what());
        }
        clusters[it->second] = std::move(set);
    }
    return clusters;
}

} // namespace

unsigned stage_mask(const std::vector<std::string>& names) {
    unsigned mask = 0;
    for (const auto& name : names) {
        const auto it = kStageByName.find(name);
        if (it == kStageByName.end()) {
            throw ConfigError("unknown stage: " + name);
        }
        mask |= static_cast<unsigned>(it->second);
    }
    return mask;
}

std::vector<std::string> stage_names(unsigned mask) {
    std::vector<std::string> names;
    for (const auto& [name, stage] : std::map<std::string, Stage>{{"sample", Stage::sample},
                                                                  {"cluster", Stage::cluster},
                                                                  {"forge", Stage::forge},
                                                                  {"eval", Stage::eval}}) {
        if (mask & static_cast<unsigned>(stage)) {
            names.push_back(name);
        }
    }
    return names;
}

PipelineConfig pipeline_config_from_json(const json& doc) {
    PipelineConfig cfg;
    cfg.corpus_path = doc.value("corpus", cfg.corpus_path);
    cfg.output_dir = doc.value("out", cfg.output_dir);
    cfg.n_samples = doc.value("n_samples", cfg.n_samples);
    cfg.temperature = doc.value("temperature", cfg.temperature);
    cfg.threshold = doc.value("threshold", cfg.threshold);
    if (doc.contains("seeds")) {
        const auto& seeds = doc.at("seeds");
        cfg.seed_sampling = seeds.value("sampling", cfg.seed_sampling);
        cfg.seed_representative = seeds.value("representative", cfg.seed_representative);
        cfg.seed_rl = seeds.value("rl", cfg.seed_rl);
    }
    if (doc.contains("providers")) {
        const auto& p = doc.at("providers");
        if (p.contains("subject_model")) {
            cfg.subject_model = provider_from_json(p.at("subject_model"), cfg.subject_model);
        }
        if (p.contains("summarizer")) {
            cfg.summarizer = provider_from_json(p.at("summarizer"), cfg.summarizer);
        }
        if (p.contains("judge")) {
            cfg.judge_model = provider_from_json(p.at("judge"), cfg.judge_model);
        }
        if (p.contains("embedder")) {
            cfg.embedder = provider_from_json(p.at("embedder"), cfg.embedder);
        }
    }
    cfg.mock_script_path = doc.value("mock_script", cfg.mock_script_path);
    if (doc.contains("stages")) {
        cfg.stages = stage_mask(doc.at("stages").get<std::vector<std::string>>());
    }
    if (doc.contains("sampling_prompt")) {
        const auto& sp = doc.at("sampling_prompt");
        cfg.sampling_prompt.system_prompt =
            sp.value("system", cfg.sampling_prompt.system_prompt);
        cfg.sampling_prompt.user_template =
            sp.value("user_template", cfg.sampling_prompt.user_template);
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file: " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return pipeline_config_from_json(doc);
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
    return json{
        {"corpus", cfg.corpus_path},
        {"out", cfg.output_dir},
        {"n_samples", cfg.n_samples},
        {"temperature", cfg.temperature},
        {"threshold", cfg.threshold},
        {"seeds",
         {{"sampling", cfg.seed_sampling},
          {"representative", cfg.seed_representative},
          {"rl", cfg.seed_rl}}},
        {"providers",
         {{"subject_model", provider_to_json(cfg.subject_model)},
          {"summarizer", provider_to_json(cfg.summarizer)},
          {"judge", provider_to_json(cfg.judge_model)},
          {"embedder", provider_to_json(cfg.embedder)}}},
        {"mock_script", cfg.mock_script_path},
        {"stages", stage_names(cfg.stages)},
        {"sampling_prompt",
         {{"system", cfg.sampling_prompt.system_prompt},
          {"user_template", cfg.sampling_prompt.user_template}}},
    };
}

std::string canonical_json(const json& value) {
    std::string out;
    render_canonical(value, out);
    return out;
}

void emit_report(const json& report, const std::string& path) {
    write_file(path, canonical_json(report) + "\n");
}

json to_json(const MetricsReport& report) {
    json doc;
    doc["ece"] = report.ece;
    doc["auroc"] = report.auroc ? json(*report.auroc) : json(nullptr);
    doc["accuracy"] = report.accuracy;
    doc["n"] = report.n;
    return doc;
}

json to_json(const GapReport& report) {
    return json{
        {"avg_answerable", report.avg_answerable},
        {"avg_unanswerable", report.avg_unanswerable},
        {"delta", report.delta},
    };
}

json to_json(const FaithfulnessReport& report) {
    return json{
        {"mean_score", report.mean_score},
        {"n_cases", report.n_cases},
        {"n_parse_failures", report.n_parse_failures},
        {"n_zero_scores", report.n_zero_scores},
        {"judge_model", report.judge_model_id},
    };
}

json to_json(const TrainReport& report) {
    return json{
        {"per_state_modal_level", report.per_state_modal_level},
        {"expected_reward_trace", report.expected_reward_trace},
        {"final_expected_reward", report.final_expected_reward},
    };
}

json to_json(const DatasetManifest& manifest) {
    return json{
        {"n_questions_in", manifest.n_questions_in},
        {"n_records_out", manifest.n_records_out},
        {"n_dropped_no_correct", manifest.n_dropped_no_correct},
        {"n_dropped_na_rationale", manifest.n_dropped_na_rationale},
        {"n_na_rationales", manifest.n_na_rationales},
        {"params",
         {{"n", manifest.n_samples},
          {"temperature", manifest.temperature},
          {"threshold", manifest.threshold},
          {"seeds",
           {{"sampling", manifest.seed_sampling},
            {"representative", manifest.seed_representative}}}}},
        {"content_digest", manifest.content_digest},
    };
}

json to_json(const RunManifest& manifest) {
    return json{
        {"run_id", manifest.run_id},
        {"started", manifest.started},
        {"finished", manifest.finished},
        {"config", manifest.config_snapshot},
        {"input_digest", manifest.input_digest},
        {"stage_output_digests", manifest.stage_output_digests},
        {"tool_version", manifest.tool_version},
    };
}

std::string current_timestamp() {
    std::time_t t = 0;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::vector<OutcomeRecord> load_outcomes(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read outcomes: " + path);
    }
    std::vector<OutcomeRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto doc = json::parse(line);
            records.push_back(OutcomeRecord{doc.at("correct").get<bool>(),
                                            doc.at("confidence").get<double>()});
        } catch (const json::exception& e) {
            throw CorpusError("outcomes line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_outcomes(const std::vector<OutcomeRecord>& records, const std::string& path) {
    std::string bytes;
    for (const auto& r : records) {
        nlohmann::ordered_json line;
        line["correct"] = r.correct;
        line["confidence"] = r.confidence;
        bytes += line.dump();
        bytes += '\n';
    }
    write_file(path, bytes);
}

std::vector<std::string> verify_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot read manifest: " + manifest_path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("manifest parse error: " + std::string(e.what()));
    }
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<std::string> mismatches;
    for (const auto& [artifact, digest] : doc.at("stage_output_digests").items()) {
        const auto path = (dir / artifact).string();
        std::string actual;
        try {
            actual = sha256_file(path);
        } catch (const IoError&) {
            mismatches.push_back(artifact + " (missing)");
            continue;
        }
        if (actual != digest.get<std::string>()) {
            mismatches.push_back(artifact);
        }
    }
    return mismatches;
}

RunManifest run_pipeline(const PipelineConfig& cfg, Gateway& gateway) {
    if (cfg.corpus_path.empty() || !fs::exists(cfg.corpus_path)) {
        throw ConfigError("corpus path missing or unreadable: " + cfg.corpus_path);
    }
    if (cfg.output_dir.empty()) {
        throw ConfigError("output dir not set");
    }
    if (!gateway.is_mock() && cfg.subject_model.base_url.empty()) {
        throw ConfigError("no provider configured: set providers.subject_model.base_url "
                          "or pass a mock script");
    }
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) {
        throw ConfigError("cannot create output dir: " + cfg.output_dir);
    }

    RunManifest manifest;
    manifest.started = current_timestamp();
    manifest.config_snapshot = pipeline_config_to_json(cfg);
    manifest.input_digest = sha256_file(cfg.corpus_path);
    manifest.run_id =
        sha256_hex(canonical_json(manifest.config_snapshot) + manifest.input_digest).substr(0, 12);

    const auto corpus = [&] {
        try {
            return load_corpus(cfg.corpus_path);
        } catch (const CorpusError& e) {
            throw ConfigError(e.what());
        }
    }();

    const fs::path out_dir(cfg.output_dir);
    const auto artifact = [&](const char* name) { return (out_dir / name).string(); };
    const auto record_artifact = [&](const char* name) {
        manifest.stage_output_digests[name] = sha256_file(artifact(name));
    };
    const auto selected = [&](Stage s) { return (cfg.stages & static_cast<unsigned>(s)) != 0; };

    PipelineParams params;
    params.n_samples = cfg.n_samples;
    params.temperature = cfg.temperature;
    params.threshold = cfg.threshold;
    params.seed_sampling = cfg.seed_sampling;
    params.seed_representative = cfg.seed_representative;
    params.sampling_prompt = cfg.sampling_prompt;

    // --- sample ---
    std::vector<std::vector<ResponseSample>> samples;
    if (selected(Stage::sample)) {
        try {
            samples.reserve(corpus.size());
            for (const auto& question : corpus) {
                samples.push_back(sample_responses(gateway, cfg.subject_model, question,
                                                   cfg.n_samples, cfg.temperature,
                                                   cfg.sampling_prompt));
            }
            write_file(artifact("samples.jsonl"), samples_to_jsonl(corpus, samples));
        } catch (const Error& e) {
            throw StageError("sample", e.what());
        }
        record_artifact("samples.jsonl");
    } else {
        samples = read_samples_jsonl(artifact("samples.jsonl"), corpus);
    }

    // --- cluster ---
    std::vector<ClusterSet> clusters;
    if (selected(Stage::cluster)) {
        try {
            std::unordered_map<std::string, EmbeddingVector> cache;
            for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
                std::vector<std::string> missing;
                std::vector<std::string> keys;
                keys.reserve(samples[qi].size());
                for (const auto& s : samples[qi]) {
                    const std::string text = s.raw_text.empty() ? "(no response)" : s.raw_text;
                    const std::string key = sha256_hex(text);
                    keys.push_back(key);
                    if (cache.find(key) == cache.end()) {
                        cache.emplace(key, EmbeddingVector{});
                        missing.push_back(text);
                    }
                }
                if (!missing.empty()) {
                    const auto vectors = gateway.embed(cfg.embedder, missing);
                    for (std::size_t i = 0; i < missing.size(); ++i) {
                        cache[sha256_hex(missing[i])] = vectors[i];
                    }
                }
                std::vector<EmbeddingVector> embeddings;
                embeddings.reserve(samples[qi].size());
                for (const auto& key : keys) {
                    embeddings.push_back(cache.at(key));
                }
                auto set = greedy_cluster(embeddings, cfg.threshold);
                std::mt19937_64 rep_rng(mix_seed(cfg.seed_representative, qi));
                assign_representatives(set, rep_rng);
                clusters.push_back(std::move(set));
            }
            write_file(artifact("clusters.jsonl"), clusters_to_jsonl(corpus, clusters));
        } catch (const Error& e) {
            throw StageError("cluster", e.what());
        }
        record_artifact("clusters.jsonl");
    } else if (selected(Stage::forge) || selected(Stage::eval)) {
        clusters = read_clusters_jsonl(artifact("clusters.jsonl"), corpus, samples);
    }

    // --- forge ---
    if (selected(Stage::forge)) {
        try {
            const auto result =
                build_records(corpus, samples, clusters, gateway, cfg.summarizer, params);
            std::string bytes;
            for (const auto& record : result.records) {
                bytes += sft_record_to_jsonl(record);
                bytes += '\n';
            }
            write_file(artifact("dataset.jsonl"), bytes);
            emit_report(to_json(result.manifest), artifact("dataset_manifest.json"));
        } catch (const Error& e) {
            throw StageError("forge", e.what());
        }
        record_artifact("dataset.jsonl");
        record_artifact("dataset_manifest.json");
    }

    // --- eval ---
    if (selected(Stage::eval)) {
        try {
            std::vector<OutcomeRecord> outcomes;
            std::vector<OutcomeRecord> per_question_answerable;
            std::vector<OutcomeRecord> per_question_unanswerable;
            for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
                const auto& set = clusters[qi];
                std::vector<double> conf_of_sample(samples[qi].size(), 0.0);
                double top_proportion = 0.0;
                for (const auto& cluster : set.clusters) {
                    const double prop = proportion(cluster, set.n_total);
                    top_proportion = std::max(top_proportion, prop);
                    for (const auto member : cluster.member_indices) {
                        conf_of_sample[member] = prop;
                    }
                }
                if (corpus[qi].answerable) {
                    for (const auto& s : samples[qi]) {
                        outcomes.push_back(OutcomeRecord{s.correct, conf_of_sample[s.index]});
                    }
                    per_question_answerable.push_back(OutcomeRecord{true, top_proportion});
                } else {
                    per_question_unanswerable.push_back(OutcomeRecord{false, top_proportion});
                }
            }
            write_outcomes(outcomes, artifact("outcomes.jsonl"));
            if (!outcomes.empty()) {
                emit_report(to_json(metrics_report(outcomes)), artifact("metrics.json"));
            }
            if (!per_question_answerable.empty() && !per_question_unanswerable.empty()) {
                emit_report(
                    to_json(confidence_gap(per_question_answerable, per_question_unanswerable)),
                    artifact("gap.json"));
            }
        } catch (const Error& e) {
            throw StageError("eval", e.what());
        }
        record_artifact("outcomes.jsonl");
        if (fs::exists(artifact("metrics.json"))) {
            record_artifact("metrics.json");
        }
        if (fs::exists(artifact("gap.json"))) {
            record_artifact("gap.json");
        }
    }

    manifest.finished = current_timestamp();
    emit_report(to_json(manifest), artifact("run_manifest.json"));
    return manifest;
}

} // namespace confcal
