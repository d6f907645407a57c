#include "confcal/forge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "confcal/digest.hpp"
#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

namespace confcal {

namespace {

// Rationale-summarization prompt. The three {} slots take the question, the
// correct response block, and the numbered incorrect response blocks.
constexpr std::string_view kRationaleTemplate =
    R"(Your task is to analyze a question provided to you along with a set of correct and incorrect responses generated by my model. Your objective is to identify and summarize the inconsistency in the models' responses that can explain why my model is uncertain about the correct answer.

Please note that:
1. You should give the reasons from a first-person perspective, as if you are my model that gives the provided responses and confidence scores.
2. Limit your explanation to the knowledge and facts the model possesses about the question.
3. Keep your summary brief, aiming for 1-3 sentences.
4. Each response is paired with a confidence score at the beginning. Include the confidence score that accompanies each response in your summary.
5. Please directly provide the summarized reason without any greetings or other unnecessary information. If you find the incorrect responses are consistent with the correct response regarding the question, please directly return N/A.
6. Importantly, my model doesn't have access to the ground truth. Therefore, the summarized reason should not have any statement about correctness or incorrectness of the responses. You should only focus on discussing the uncertainty in the knowledge and facts based on the inconsistency in the responses.
7. Importantly!! My model only has access to the correct response. Thus, the summary should not include any statement like "My different responses have...", "my responses about ...", "the multiple responses...", etc. You should not say "my responses" or "the responses" anywhere in the summary.

Here is an example:
Question: Sky High starred the actress who is married to which actor?

Correct Response:
(6

Incorrect Responses:
1. (33
2. (17

The output can be: I am uncertain about the correct actress in "Sky High". There is a high probability that the actress is Kristen Bell, instead of Kelly Preston.  I am confused about her voice acting roles with on-screen appearances. There is also some probability that the actress is Kelly Clarkson.

Now consier the following case:
Question: {}

Correct Response:
{}

Incorrect Responses:
{})";

std::string fill_template(std::string_view tmpl, std::span<const std::string> values) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t pos = 0;
    std::size_t vi = 0;
    for (;;) {
        const auto slot = tmpl.find("{}", pos);
        if (slot == std::string_view::npos) {
            break;
        }
        if (vi >= values.size()) {
            throw TemplateError("template has more slots than values");
        }
        out.append(tmpl.substr(pos, slot - pos));
        out.append(values[vi++]);
        pos = slot + 2;
    }
    out.append(tmpl.substr(pos));
    if (vi != values.size()) {
        throw TemplateError("placeholder left unfilled");
    }
    return out;
}

std::string to_lower_ascii(const std::string& s) {
    std::string out = s;
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c + 32);
        }
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return s.substr(b, e - b);
}

int percent_of(double proportion) {
    return static_cast<int>(std::llround(100.0 * proportion));
}

std::string weighted_block(const WeightedSample& rep) {
    return "(" + std::to_string(percent_of(rep.proportion)) + "%) " + rep.sample.raw_text;
}

} // namespace

std::string rationale_prompt_template() {
    return std::string(kRationaleTemplate);
}

ConfidenceLevel compute_confidence(std::size_t s_c, std::size_t n) {
    if (n == 0 || s_c == 0 || s_c > n) {
        throw DomainError("compute_confidence: need 1 <= s_c <= n");
    }
    const double scaled = 10.0 * static_cast<double>(s_c) / static_cast<double>(n);
    const long rounded = std::lround(scaled); // half away from zero
    const int clamped = static_cast<int>(std::clamp(rounded, 1L, 10L));
    return ConfidenceLevel{clamped};
}

std::string render_confidence(ConfidenceLevel c) {
    if (c.value < 1 || c.value > 10) {
        throw DomainError("render_confidence: level outside [1,10]");
    }
    return "My confidence is " + std::to_string(c.value) + ".";
}

RationalePrompt build_rationale_prompt(const Question& question,
                                       const WeightedSample& correct_rep,
                                       std::span<const WeightedSample> incorrect_reps) {
    if (!correct_rep.sample.correct) {
        throw DomainError("build_rationale_prompt: correct_rep is not correct");
    }
    for (const auto& rep : incorrect_reps) {
        if (rep.sample.correct) {
            throw DomainError("build_rationale_prompt: incorrect_reps contains a correct sample");
        }
    }
    std::string incorrect_list;
    for (std::size_t i = 0; i < incorrect_reps.size(); ++i) {
        if (i > 0) {
            incorrect_list += '\n';
        }
        incorrect_list += std::to_string(i + 1) + ". " + weighted_block(incorrect_reps[i]);
    }
    const std::string values[] = {question.text, weighted_block(correct_rep), incorrect_list};
    return RationalePrompt{fill_template(kRationaleTemplate, values), question.id};
}

std::optional<std::string> validate_rationale(const std::string& summary_text) {
    const std::string trimmed = trim(summary_text);
    const std::string lowered = to_lower_ascii(trimmed);
    if (lowered == "n/a") {
        return std::nullopt;
    }
    static const char* kForbidden[] = {
        "my responses",
        "the responses",
        "incorrect responses",
        "correct answer",
    };
    for (const char* phrase : kForbidden) {
        if (lowered.find(phrase) != std::string::npos) {
            throw StyleViolation(std::string("rationale contains forbidden phrase: \"") +
                                 phrase + "\"");
        }
    }
    return trimmed;
}

std::optional<std::size_t> select_correct_cluster(const ClusterSet& clusters,
                                                  std::span<const ResponseSample> samples) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < clusters.clusters.size(); ++i) {
        const auto& cluster = clusters.clusters[i];
        if (cluster.representative_index >= samples.size() ||
            !samples[cluster.representative_index].correct) {
            continue;
        }
        if (!best || cluster.size() > clusters.clusters[*best].size()) {
            best = i;
        }
    }
    return best;
}

SftRecord assemble_record(const Question& question, const ClusterSet& clusters,
                          std::span<const ResponseSample> samples,
                          const std::optional<std::string>& rationale) {
    const auto chosen = select_correct_cluster(clusters, samples);
    if (!chosen) {
        throw NoCorrectCluster("no cluster representative is correct for question " +
                               question.id);
    }
    const auto& cluster = clusters.clusters[*chosen];
    const auto& rep = samples[cluster.representative_index];

    SftRecord record;
    record.question_id = question.id;
    record.question = question.text;
    record.response = rep.raw_text;
    record.provenance.rationale_na = !rationale.has_value();
    record.rationale = rationale.value_or("N/A");
    record.confidence = compute_confidence(cluster.size(), clusters.n_total);
    record.rendered_confidence = render_confidence(record.confidence);
    record.provenance.n_total = clusters.n_total;
    for (const auto& c : clusters.clusters) {
        record.provenance.cluster_sizes.push_back(c.size());
    }
    record.provenance.correct_cluster_size = cluster.size();

    // Emission invariant: the chosen response must contain a gold answer.
    if (!check_correct(record.response, question.gold_answers)) {
        throw Error("assemble_record: chosen response fails the correctness check for "
                    "question " + question.id);
    }
    return record;
}

std::string sft_record_to_jsonl(const SftRecord& record) {
    nlohmann::ordered_json provenance;
    provenance["n"] = record.provenance.n_total;
    provenance["cluster_sizes"] = record.provenance.cluster_sizes;
    provenance["correct_cluster_size"] = record.provenance.correct_cluster_size;
    provenance["rationale_na"] = record.provenance.rationale_na;

    nlohmann::ordered_json line;
    line["question_id"] = record.question_id;
    line["question"] = record.question;
    line["response"] = record.response;
    line["rationale"] = record.rationale;
    line["confidence"] = record.confidence.value;
    line["rendered_confidence"] = record.rendered_confidence;
    line["provenance"] = provenance;
    return line.dump();
}

ChatRequest make_summarizer_request(const ProviderConfig& summarizer,
                                    const RationalePrompt& prompt, int attempt) {
    ChatRequest req;
    req.user_prompt = prompt.text;
    req.temperature = 0.0;
    req.max_tokens = 1024;
    req.model_id = summarizer.model_id;
    req.sample_index = attempt;
    return req;
}

DatasetResult build_records(std::span<const Question> corpus,
                            std::span<const std::vector<ResponseSample>> samples_per_question,
                            std::span<const ClusterSet> clusters_per_question,
                            Gateway& gateway, const ProviderConfig& summarizer,
                            const PipelineParams& params) {
    if (corpus.empty()) {
        throw EmptyInput("build_records: empty corpus");
    }
    if (samples_per_question.size() != corpus.size() ||
        clusters_per_question.size() != corpus.size()) {
        throw DimensionMismatch("build_records: corpus/samples/clusters sizes differ");
    }

    DatasetResult result;
    auto& manifest = result.manifest;
    manifest.n_questions_in = corpus.size();
    manifest.n_samples = params.n_samples;
    manifest.temperature = params.temperature;
    manifest.threshold = params.threshold;
    manifest.seed_sampling = params.seed_sampling;
    manifest.seed_representative = params.seed_representative;

    std::string jsonl_bytes;
    for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
        const auto& question = corpus[qi];
        const auto& samples = samples_per_question[qi];
        const auto& clusters = clusters_per_question[qi];
        if (clusters.n_total != samples.size()) {
            throw DimensionMismatch("build_records: cluster set does not cover the samples "
                                    "of question " + question.id);
        }
        validate_cluster_set(clusters);

        const auto chosen = select_correct_cluster(clusters, samples);
        if (!chosen) {
            manifest.n_dropped_no_correct += 1;
            continue;
        }
        const auto& chosen_cluster = clusters.clusters[*chosen];

        WeightedSample correct_rep{samples[chosen_cluster.representative_index],
                                   proportion(chosen_cluster, clusters.n_total)};
        std::vector<WeightedSample> incorrect_reps;
        for (const auto& cluster : clusters.clusters) {
            const auto& rep = samples[cluster.representative_index];
            if (!rep.correct) {
                incorrect_reps.push_back(
                    WeightedSample{rep, proportion(cluster, clusters.n_total)});
            }
        }

        const auto prompt = build_rationale_prompt(question, correct_rep, incorrect_reps);
        std::optional<std::string> rationale;
        bool usable = false;
        for (int attempt = 0; attempt < 2 && !usable; ++attempt) {
            try {
                const auto reply =
                    gateway.chat(summarizer, make_summarizer_request(summarizer, prompt, attempt));
                rationale = validate_rationale(reply.text);
                usable = true;
            } catch (const StyleViolation&) {
                // retry once with a fresh draw
            } catch (const GatewayError&) {
                break;
            }
        }
        if (!usable) {
            manifest.n_dropped_na_rationale += 1;
            continue;
        }
        if (!rationale) {
            manifest.n_na_rationales += 1;
        }

        auto record = assemble_record(question, clusters, samples, rationale);
        jsonl_bytes += sft_record_to_jsonl(record);
        jsonl_bytes += '\n';
        result.records.push_back(std::move(record));
        manifest.n_records_out += 1;
    }
    manifest.content_digest = sha256_hex(jsonl_bytes);
    return result;
}

DatasetResult build_dataset(std::span<const Question> corpus, Gateway& gateway,
                            const ForgeProviders& providers, const PipelineParams& params) {
    if (corpus.empty()) {
        throw EmptyInput("build_dataset: empty corpus");
    }
    std::vector<std::vector<ResponseSample>> samples_per_question;
    std::vector<ClusterSet> clusters_per_question;
    samples_per_question.reserve(corpus.size());
    clusters_per_question.reserve(corpus.size());

    // Embeddings are computed once per distinct response text. Failed draws
    // have no text; they share one placeholder so they cluster together.
    std::unordered_map<std::string, EmbeddingVector> embedding_cache;
    const auto embed_text = [](const ResponseSample& s) -> std::string {
        return s.raw_text.empty() ? "(no response)" : s.raw_text;
    };

    for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
        const auto& question = corpus[qi];
        auto samples = sample_responses(gateway, providers.subject, question, params.n_samples,
                                        params.temperature, params.sampling_prompt);

        std::vector<std::string> missing;
        std::unordered_map<std::string, std::size_t> pending;
        for (const auto& sample : samples) {
            const std::string text = embed_text(sample);
            const std::string key = sha256_hex(text);
            if (embedding_cache.find(key) == embedding_cache.end() &&
                pending.emplace(key, missing.size()).second) {
                missing.push_back(text);
            }
        }
        if (!missing.empty()) {
            const auto vectors = gateway.embed(providers.embedder, missing);
            for (const auto& [key, slot] : pending) {
                embedding_cache[key] = vectors[slot];
            }
        }
        std::vector<EmbeddingVector> embeddings;
        embeddings.reserve(samples.size());
        for (const auto& sample : samples) {
            embeddings.push_back(embedding_cache.at(sha256_hex(embed_text(sample))));
        }

        auto clusters = greedy_cluster(embeddings, params.threshold);
        std::mt19937_64 rep_rng(mix_seed(params.seed_representative, qi));
        assign_representatives(clusters, rep_rng);

        samples_per_question.push_back(std::move(samples));
        clusters_per_question.push_back(std::move(clusters));
    }

    return build_records(corpus, samples_per_question, clusters_per_question, gateway,
                         providers.summarizer, params);
}

} // namespace confcal
