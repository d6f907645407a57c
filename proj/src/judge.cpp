#include "confcal/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <regex>
#include <thread>

#include <json.hpp>

#include "confcal/errors.hpp"

namespace confcal {

namespace {

using json = nlohmann::json;

// Faithfulness-evaluation prompt. The three {} slots take the question, the
// numbered sampled responses, and the rationale under review.
constexpr std::string_view kJudgeTemplate =
    R"(Your task is to analyze whether a summarized explanation correctly explains the inconsistency in multiple sampled responses to a question.
Note that each response is paired with a proportion at the beginning, indicating the frequency of the response in the sampled responses. You should output a score from 0 to 10, indicating the quality of the explanation.
You should first provide your reasoning for the correctness of the explanation, and then assign a score based on the quality of the explanation. The output should be in the following format: reason: [REASON] score: [SCORE].

Here is an example:
Question: Sky High starred the actress who is married to which actor?

Sampled Responses:
1. (6
2. (33
3. (17

Reason: I am uncertain about the correct actress in "Sky High". There is a high probability that the actress is Kristen Bell, instead of Kelly Preston.  I am confused about her voice acting roles with on-screen appearances. There is also some probability that the actress is Kelly Clarkson.

Then your output can be:
reason: The provided reason is clear and well-structured. The explanation is logical and provides a clear rationale for the uncertainty expressed in the sampled responses. score: 9


Now consier the following case:
Question: {}

Sampled Responses:
{}

Reason: {})";

std::string fill_three(std::string_view tmpl, const std::string& a, const std::string& b,
                       const std::string& c) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    const std::string* values[] = {&a, &b, &c};
    std::size_t pos = 0;
    std::size_t vi = 0;
    for (;;) {
        const auto slot = tmpl.find("{}", pos);
        if (slot == std::string_view::npos) {
            break;
        }
        if (vi >= 3) {
            throw TemplateError("judge template has more slots than values");
        }
        out.append(tmpl.substr(pos, slot - pos));
        out.append(*values[vi++]);
        pos = slot + 2;
    }
    out.append(tmpl.substr(pos));
    if (vi != 3) {
        throw TemplateError("judge template placeholder left unfilled");
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

} // namespace

std::string judge_prompt_template() {
    return std::string(kJudgeTemplate);
}

std::string build_judge_prompt(const JudgeCase& judge_case) {
    if (judge_case.sampled_responses.empty()) {
        throw DomainError("build_judge_prompt: no sampled responses");
    }
    double total = 0.0;
    for (const auto& r : judge_case.sampled_responses) {
        if (r.proportion < 0.0 || !std::isfinite(r.proportion)) {
            throw DomainError("build_judge_prompt: bad proportion");
        }
        total += r.proportion;
    }
    if (total > 1.0 + 1e-9) {
        throw DomainError("build_judge_prompt: proportions sum to more than 1");
    }
    std::string responses;
    for (std::size_t i = 0; i < judge_case.sampled_responses.size(); ++i) {
        const auto& r = judge_case.sampled_responses[i];
        if (i > 0) {
            responses += '\n';
        }
        responses += std::to_string(i + 1) + ". (" +
                     std::to_string(static_cast<int>(std::llround(100.0 * r.proportion))) +
                     "%) " + r.text;
    }
    return fill_three(kJudgeTemplate, judge_case.question, responses, judge_case.rationale);
}

JudgeVerdict parse_verdict(const std::string& text) {
    static const std::regex score_re(R"(score\s*:\s*(-?[0-9]+))", std::regex::icase);
    static const std::regex reason_re(R"(reason\s*:)", std::regex::icase);

    // Last score marker wins: the reason body may legitimately mention one.
    std::smatch score_match;
    std::smatch m;
    auto begin = text.cbegin();
    while (std::regex_search(begin, text.cend(), m, score_re)) {
        score_match = m;
        begin = m[0].second;
    }
    if (score_match.empty()) {
        throw ParseError("verdict: missing 'score:' marker");
    }
    long score = 0;
    try {
        score = std::stol(score_match[1].str());
    } catch (const std::exception&) {
        throw ParseError("verdict: score is not an integer");
    }
    if (score < 0 || score > 10) {
        throw ParseError("verdict: score " + std::to_string(score) + " outside [0,10]");
    }

    std::smatch reason_match;
    if (!std::regex_search(text, reason_match, reason_re)) {
        throw ParseError("verdict: missing 'reason:' marker");
    }
    const auto reason_end = static_cast<std::size_t>(reason_match[0].second - text.cbegin());
    const auto score_begin =
        static_cast<std::size_t>(score_match[0].first - text.cbegin());
    if (reason_end > score_begin) {
        throw ParseError("verdict: 'reason:' must precede 'score:'");
    }
    JudgeVerdict verdict;
    verdict.reason = trim(text.substr(reason_end, score_begin - reason_end));
    verdict.score = static_cast<int>(score);
    return verdict;
}

std::string render_verdict(const JudgeVerdict& verdict) {
    if (verdict.score < 0 || verdict.score > 10) {
        throw DomainError("render_verdict: score outside [0,10]");
    }
    return "reason: " + verdict.reason + " score: " + std::to_string(verdict.score);
}

FaithfulnessReport faithfulness(Gateway& gateway, const ProviderConfig& judge,
                                std::span<const JudgeCase> cases) {
    if (cases.empty()) {
        throw EmptyInput("faithfulness: no cases");
    }
    FaithfulnessReport report;
    report.n_cases = cases.size();
    report.judge_model_id = judge.model_id;

    // Fan the judge calls out concurrently; the gateway's admission gate
    // bounds them. Scores land in per-case slots and are reduced in case
    // order, so the report does not depend on completion order.
    std::vector<std::optional<int>> scores(cases.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cases.size()) {
                return;
            }
            const std::string prompt = build_judge_prompt(cases[i]);
            for (int attempt = 0; attempt < 2; ++attempt) {
                ChatRequest req;
                req.user_prompt = prompt;
                req.temperature = 0.0;
                req.max_tokens = 512;
                req.model_id = judge.model_id;
                req.sample_index = attempt;
                try {
                    const auto reply = gateway.chat(judge, req);
                    scores[i] = parse_verdict(reply.text).score;
                    break;
                } catch (const ParseError&) {
                    // retry once with a fresh draw
                } catch (const GatewayError&) {
                    break;
                }
            }
        }
    };
    const std::size_t n_workers = std::min<std::size_t>(
        {cases.size(), static_cast<std::size_t>(std::max(1, judge.max_in_flight)),
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

    double score_sum = 0.0;
    std::size_t n_parsed = 0;
    for (const auto& score : scores) {
        if (!score) {
            report.n_parse_failures += 1;
            continue;
        }
        score_sum += *score;
        n_parsed += 1;
        if (*score == 0) {
            report.n_zero_scores += 1;
        }
    }
    if (n_parsed == 0) {
        throw AllParseFailures("faithfulness: no verdict parsed across " +
                               std::to_string(cases.size()) + " cases");
    }
    report.mean_score = score_sum / static_cast<double>(n_parsed);
    return report;
}

std::vector<JudgeCase> select_cases(std::vector<JudgeCase> cases, std::size_t budget) {
    std::stable_sort(cases.begin(), cases.end(), [](const JudgeCase& a, const JudgeCase& b) {
        return a.sampled_responses.size() > b.sampled_responses.size();
    });
    if (cases.size() > budget) {
        cases.resize(budget);
    }
    return cases;
}

std::vector<JudgeCase> load_judge_cases(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read judge cases: " + path);
    }
    std::vector<JudgeCase> cases;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto doc = json::parse(line);
            JudgeCase judge_case;
            judge_case.question = doc.at("question").get<std::string>();
            for (const auto& r : doc.at("responses")) {
                judge_case.sampled_responses.push_back(RatedResponse{
                    r.at("text").get<std::string>(), r.at("proportion").get<double>()});
            }
            judge_case.rationale = doc.at("rationale").get<std::string>();
            cases.push_back(std::move(judge_case));
        } catch (const json::exception& e) {
            throw CorpusError("judge cases line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (cases.empty()) {
        throw CorpusError("judge cases file is empty: " + path);
    }
    return cases;
}

} // namespace confcal
