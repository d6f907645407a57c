#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "confcal/calib_rl.hpp"
#include "confcal/forge.hpp"
#include "confcal/gateway.hpp"
#include "confcal/judge.hpp"
#include "confcal/metrics.hpp"

namespace confcal {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Stage : unsigned {
    sample = 1u << 0,
    cluster = 1u << 1,
    forge = 1u << 2,
    eval = 1u << 3,
};

unsigned stage_mask(const std::vector<std::string>& names); // throws ConfigError
std::vector<std::string> stage_names(unsigned mask);

struct PipelineConfig {
    std::string corpus_path;
    std::string output_dir;
    std::size_t n_samples = 100;
    double temperature = 1.2;
    double threshold = 0.9;
    std::uint64_t seed_sampling = 1;
    std::uint64_t seed_representative = 2;
    std::uint64_t seed_rl = 3;
    ProviderConfig subject_model;
    ProviderConfig summarizer;
    ProviderConfig judge_model;
    ProviderConfig embedder;
    std::string mock_script_path; // when set, the run is offline
    unsigned stages = static_cast<unsigned>(Stage::sample) | static_cast<unsigned>(Stage::cluster) |
                      static_cast<unsigned>(Stage::forge) | static_cast<unsigned>(Stage::eval);
    SamplingPrompt sampling_prompt;
};

/// Layered config: JSON file values override defaults; CLI flags override
/// both (the CLI applies its own flags after loading).
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

struct RunManifest {
    std::string run_id;
    std::string started;
    std::string finished;
    nlohmann::json config_snapshot;
    std::string input_digest;
    std::map<std::string, std::string> stage_output_digests; // artifact file -> sha256
    std::string tool_version = kToolVersion;
};

/// Executes the selected stages in order sample -> cluster -> forge -> eval,
/// writes artifacts plus run_manifest.json under cfg.output_dir, and returns
/// the manifest. Deselected stages read their inputs back from a prior run's
/// artifacts.
RunManifest run_pipeline(const PipelineConfig& cfg, Gateway& gateway);

/// Canonical JSON: object keys sorted, floating-point numbers rendered with
/// exactly six decimals, no insignificant whitespace.
std::string canonical_json(const nlohmann::json& value);

/// Writes canonical JSON plus a trailing newline. Throws IoError.
void emit_report(const nlohmann::json& report, const std::string& path);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const GapReport& report);
nlohmann::json to_json(const FaithfulnessReport& report);
nlohmann::json to_json(const TrainReport& report);
nlohmann::json to_json(const DatasetManifest& manifest);
nlohmann::json to_json(const RunManifest& manifest);

/// Re-derives every artifact digest recorded in the manifest; returns the
/// artifacts whose bytes no longer match.
std::vector<std::string> verify_manifest(const std::string& manifest_path);

/// ISO-8601 UTC timestamp; honors SOURCE_DATE_EPOCH for reproducible runs.
std::string current_timestamp();

/// Outcome records from JSONL lines {"correct": bool, "confidence": number}.
std::vector<OutcomeRecord> load_outcomes(const std::string& path);
void write_outcomes(const std::vector<OutcomeRecord>& records, const std::string& path);

} // namespace confcal
