#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confcal/cluster.hpp"
#include "confcal/gateway.hpp"
#include "confcal/sampler.hpp"

namespace confcal {

/// Verbalized confidence level, integer in [1, 10].
struct ConfidenceLevel {
    int value = 1;
};

struct SftProvenance {
    std::size_t n_total = 0;
    std::vector<std::size_t> cluster_sizes; // in cluster order
    std::size_t correct_cluster_size = 0;
    bool rationale_na = false;
};

struct SftRecord {
    std::string question_id;
    std::string question;
    std::string response;            // the chosen correct representative, verbatim
    std::string rationale;           // "N/A" when the summarizer found no inconsistency
    ConfidenceLevel confidence;
    std::string rendered_confidence; // render_confidence(confidence)
    SftProvenance provenance;
};

struct RationalePrompt {
    std::string text;
    std::string question_id;
};

/// A cluster representative paired with its cluster's share of the samples.
struct WeightedSample {
    ResponseSample sample;
    double proportion = 0.0;
};

struct DatasetManifest {
    std::size_t n_questions_in = 0;
    std::size_t n_records_out = 0;
    std::size_t n_dropped_no_correct = 0;
    std::size_t n_dropped_na_rationale = 0; // no usable rationale after one retry
    std::size_t n_na_rationales = 0;        // emitted records whose rationale is N/A
    std::size_t n_samples = 0;
    double temperature = 0.0;
    double threshold = 0.0;
    std::uint64_t seed_sampling = 0;
    std::uint64_t seed_representative = 0;
    std::string content_digest; // sha256 of the emitted JSONL bytes
};

struct PipelineParams {
    std::size_t n_samples = 100;
    double temperature = 1.2;
    double threshold = 0.9;
    std::uint64_t seed_sampling = 1;
    std::uint64_t seed_representative = 2;
    SamplingPrompt sampling_prompt;
};

/// The raw summarization prompt template with its three {} slots.
std::string rationale_prompt_template();

/// Nearest integer to 10 * s_c / n (half away from zero), clamped into [1, 10].
ConfidenceLevel compute_confidence(std::size_t s_c, std::size_t n);

/// Exactly "My confidence is {c}."
std::string render_confidence(ConfidenceLevel c);

/// Instantiates the rationale-summarization prompt with the question, the
/// correct representative, and the numbered incorrect representatives, each
/// response prefixed with its rounded percentage share.
RationalePrompt build_rationale_prompt(const Question& question,
                                       const WeightedSample& correct_rep,
                                       std::span<const WeightedSample> incorrect_reps);

/// Trims the summarizer output. Returns std::nullopt for an N/A verdict
/// (case-insensitive). Throws StyleViolation when the summary uses forbidden
/// phrasings ("my responses", "the responses") or verbalizes correctness
/// ("incorrect responses", "correct answer").
std::optional<std::string> validate_rationale(const std::string& summary_text);

/// Index into clusters of the largest cluster whose representative sample is
/// correct; ties go to the earliest cluster. Empty when none qualifies.
std::optional<std::size_t> select_correct_cluster(const ClusterSet& clusters,
                                                  std::span<const ResponseSample> samples);

/// Assembles the SFT record for one question from its clustered samples and
/// an already-validated rationale. Throws NoCorrectCluster when every
/// representative is wrong.
SftRecord assemble_record(const Question& question, const ClusterSet& clusters,
                          std::span<const ResponseSample> samples,
                          const std::optional<std::string>& rationale);

/// One dataset line, fixed field order:
/// {"question_id","question","response","rationale","confidence",
///  "rendered_confidence","provenance":{"n","cluster_sizes",
///  "correct_cluster_size","rationale_na"}}
std::string sft_record_to_jsonl(const SftRecord& record);

struct ForgeProviders {
    ProviderConfig subject;
    ProviderConfig embedder;
    ProviderConfig summarizer;
};

struct DatasetResult {
    std::vector<SftRecord> records;
    DatasetManifest manifest;
};

/// Builds records from already-sampled, already-clustered questions:
/// pick the correct cluster, summarize the inconsistency through the
/// gateway (retrying a style-violating summary once), validate, assemble.
/// Per-question failures are tallied in the manifest, never thrown.
DatasetResult build_records(std::span<const Question> corpus,
                            std::span<const std::vector<ResponseSample>> samples_per_question,
                            std::span<const ClusterSet> clusters_per_question,
                            Gateway& gateway, const ProviderConfig& summarizer,
                            const PipelineParams& params);

/// End-to-end dataset construction: sample, embed, cluster, pick
/// representatives, summarize, assemble.
DatasetResult build_dataset(std::span<const Question> corpus, Gateway& gateway,
                            const ForgeProviders& providers, const PipelineParams& params);

/// The request build_records issues to the summarizer. attempt 0 is the
/// first ask, attempt 1 the single retry after a style violation.
ChatRequest make_summarizer_request(const ProviderConfig& summarizer,
                                    const RationalePrompt& prompt, int attempt);

} // namespace confcal
