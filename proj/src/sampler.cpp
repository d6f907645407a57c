#include "confcal/sampler.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "confcal/errors.hpp"

namespace confcal {

namespace {

using json = nlohmann::json;

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Appends the case-folded form of the UTF-8 code point starting at s[i];
// advances i past it. Folds ASCII and the Latin-1 supplement; everything
// else passes through unchanged.
void append_folded(std::string& out, const std::string& s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        out.push_back(static_cast<char>(b0 >= 'A' && b0 <= 'Z' ? b0 + 32 : b0));
        ++i;
        return;
    }
    if ((b0 == 0xc3) && i + 1 < s.size()) {
        auto b1 = static_cast<unsigned char>(s[i + 1]);
        // U+00C0..U+00DE fold to U+00E0..U+00FE, except U+00D7 (multiplication sign).
        if (b1 >= 0x80 && b1 <= 0x9e && b1 != 0x97) {
            out.push_back(static_cast<char>(0xc3));
            out.push_back(static_cast<char>(b1 + 0x20));
            i += 2;
            return;
        }
    }
    out.push_back(s[i]);
    ++i;
}

std::string build_user_prompt(const SamplingPrompt& prompt, const Question& question) {
    std::string out = prompt.user_template;
    const std::string placeholder = "{question}";
    const auto pos = out.find(placeholder);
    if (pos == std::string::npos) {
        throw TemplateError("sampling prompt template lacks {question}");
    }
    out.replace(pos, placeholder.size(), question.text);
    return out;
}

} // namespace

std::string normalize_for_match(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    bool pending_space = false;
    while (i < text.size()) {
        if (is_ascii_space(static_cast<unsigned char>(text[i]))) {
            pending_space = !out.empty();
            ++i;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        append_folded(out, text, i);
    }
    return out;
}

bool check_correct(const std::string& response_text,
                   std::span<const std::string> gold_answers) {
    if (gold_answers.empty()) {
        throw DomainError("check_correct: gold_answers must be non-empty");
    }
    const std::string haystack = normalize_for_match(response_text);
    for (const auto& gold : gold_answers) {
        const std::string needle = normalize_for_match(gold);
        if (!needle.empty() && haystack.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

std::pair<std::string, std::string> split_reasoning_and_answer(const std::string& raw_text) {
    std::string t = raw_text;
    while (!t.empty() && is_ascii_space(static_cast<unsigned char>(t.back()))) {
        t.pop_back();
    }
    if (t.empty()) {
        return {"", ""};
    }
    // Last newline or sentence break strictly before the final character.
    std::size_t split = std::string::npos;
    for (std::size_t i = t.size() - 1; i-- > 0;) {
        const char c = t[i];
        if (c == '\n' || c == '.' || c == '!' || c == '?') {
            split = i;
            break;
        }
    }
    if (split == std::string::npos) {
        return {"", t};
    }
    std::string chain = t.substr(0, split + 1);
    std::string answer = t.substr(split + 1);
    while (!chain.empty() && is_ascii_space(static_cast<unsigned char>(chain.back()))) {
        chain.pop_back();
    }
    std::size_t start = 0;
    while (start < answer.size() && is_ascii_space(static_cast<unsigned char>(answer[start]))) {
        ++start;
    }
    return {chain, answer.substr(start)};
}

ChatRequest make_sampling_request(const ProviderConfig& cfg, const Question& question,
                                  std::size_t index, double temperature,
                                  const SamplingPrompt& prompt) {
    ChatRequest req;
    req.system_prompt = prompt.system_prompt;
    req.user_prompt = build_user_prompt(prompt, question);
    req.temperature = temperature;
    req.model_id = cfg.model_id;
    req.sample_index = static_cast<int>(index);
    return req;
}

std::vector<ResponseSample> sample_responses(Gateway& gateway, const ProviderConfig& cfg,
                                             const Question& question, std::size_t n,
                                             double temperature,
                                             const SamplingPrompt& prompt) {
    if (n == 0) {
        throw DomainError("sample_responses: n must be >= 1");
    }
    if (question.text.empty()) {
        throw CorpusError("sample_responses: question text empty (id " + question.id + ")");
    }
    if (question.answerable && question.gold_answers.empty()) {
        throw CorpusError("sample_responses: answerable question without gold answers (id " +
                          question.id + ")");
    }

    std::vector<ResponseSample> samples(n);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    std::string first_error;
    std::mutex error_mutex;

    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            ResponseSample sample;
            sample.index = i;
            try {
                const auto req = make_sampling_request(cfg, question, i, temperature, prompt);
                const auto res = gateway.chat(cfg, req);
                sample.raw_text = res.text;
                sample.finish_reason = res.finish_reason;
            } catch (const GatewayError& e) {
                sample.finish_reason = FinishReason::error;
                failures.fetch_add(1);
                std::lock_guard lock(error_mutex);
                if (first_error.empty()) {
                    first_error = e.what();
                }
            }
            if (sample.finish_reason != FinishReason::error) {
                auto [chain, answer] = split_reasoning_and_answer(sample.raw_text);
                sample.reasoning_chain = std::move(chain);
                sample.extracted_answer = std::move(answer);
                if (question.answerable) {
                    sample.correct = check_correct(sample.raw_text, question.gold_answers);
                }
            }
            samples[i] = std::move(sample);
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>({n, static_cast<std::size_t>(std::max(1, cfg.max_in_flight)),
                               std::max(1u, std::thread::hardware_concurrency())});
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) {
            threads.emplace_back(worker);
        }
        for (auto& t : threads) {
            t.join();
        }
    }

    if (failures.load() == n) {
        throw TransportError("sample_responses: all " + std::to_string(n) +
                             " calls failed; first error: " + first_error);
    }
    return samples;
}

double sample_accuracy(std::span<const OutcomeRecord> records) {
    return accuracy(records);
}

std::vector<Question> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CorpusError("cannot read corpus: " + path);
    }
    std::vector<Question> corpus;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        Question q;
        try {
            q.id = doc.at("id").get<std::string>();
            q.text = doc.at("question").get<std::string>();
            q.gold_answers = doc.value("answers", std::vector<std::string>{});
            q.answerable = doc.value("answerable", true);
        } catch (const json::exception& e) {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (q.id.empty() || q.text.empty()) {
            throw CorpusError("corpus line " + std::to_string(line_no) +
                              ": id and question must be non-empty");
        }
        if (q.answerable && q.gold_answers.empty()) {
            throw CorpusError("corpus line " + std::to_string(line_no) +
                              ": answerable question without answers");
        }
        if (!seen_ids.insert(q.id).second) {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": duplicate id '" +
                              q.id + "'");
        }
        corpus.push_back(std::move(q));
    }
    if (corpus.empty()) {
        throw CorpusError("corpus is empty: " + path);
    }
    return corpus;
}

} // namespace confcal
