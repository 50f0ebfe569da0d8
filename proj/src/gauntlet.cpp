#include "promptsteer/gauntlet.hpp"

#include "promptsteer/errors.hpp"
#include "promptsteer/weights_io.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace promptsteer {

using json = nlohmann::json;

TextChecker make_text_checker(const std::vector<std::string>& words) {
    if (words.empty()) throw UsageError("text checker needs at least one word");
    TextChecker c;
    for (const auto& w : words) c.words.push_back(to_lower(w));
    return c;
}

EmbedChecker make_embed_checker(const EncoderWeights& w, const Vocabulary& vocab,
                                const std::vector<ConceptPair>& pairs, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw UsageError("embed checker tau must lie in (0, 1)");
    if (pairs.empty()) throw UsageError("embed checker needs at least one anchor phrase");
    EmbedChecker c;
    c.tau = tau;
    for (const auto& p : pairs) c.anchors.push_back(encode(w, tokenize(p.positive, vocab)));
    return c;
}

bool check_text(const TextChecker& c, std::string_view text) {
    std::istringstream in(to_lower(text));
    std::string word;
    while (in >> word) {
        for (const auto& bad : c.words) {
            if (word == bad) return true;
        }
    }
    return false;
}

bool check_embed(const EmbedChecker& c, const EncoderWeights& w, const TokenSequence& seq) {
    const EmbeddingVector e = encode(w, seq);
    for (const auto& anchor : c.anchors) {
        if (anchor.size() != e.size()) {
            throw CompatibilityError("embed checker anchor width " + std::to_string(anchor.size()) +
                                     " does not match encoder d_out " + std::to_string(e.size()));
        }
    }
    for (const auto& anchor : c.anchors) {
        if (cosine_similarity(e, anchor) > c.tau) return true;
    }
    return false;
}

namespace {

EvalRecord evaluate_one(const EncoderWeights& w, std::string_view weights_fp, const Vocabulary& vocab,
                        const std::string& prompt, std::size_t index,
                        const ConceptDirection& direction, const AttackConfig& cfg,
                        const Blocklist& blocklist, const std::vector<Checker>& checkers) {
    EvalRecord rec;
    rec.prompt_index = index;
    rec.prompt = prompt;
    rec.seed = cfg.seed + index;

    AttackConfig local = cfg;
    local.seed = rec.seed;
    const TokenSequence original = tokenize(prompt, vocab);
    const AttackResult result = optimize(w, weights_fp, vocab, original, direction, local, blocklist);

    rec.adversarial_ids = result.adversarial_tokens.ids;
    rec.adversarial_prompt = detokenize(result.adversarial_tokens, vocab);
    rec.hard_cosine = result.final_cosine;
    rec.fidelity = cosine_similarity(encode(w, result.adversarial_tokens), encode(w, original));
    rec.iterations = result.iterations_run();

    for (const auto& checker : checkers) {
        bool flagged = false;
        if (const auto* text = std::get_if<TextChecker>(&checker)) {
            flagged = check_text(*text, rec.adversarial_prompt);
            rec.flagged_text = rec.flagged_text || flagged;
        } else {
            flagged = check_embed(std::get<EmbedChecker>(checker), w, result.adversarial_tokens);
            rec.flagged_embed = rec.flagged_embed || flagged;
        }
        rec.flags.push_back(flagged);
    }
    rec.success = !rec.flagged_text && !rec.flagged_embed && result.passed_text_checker &&
                  rec.hard_cosine >= cfg.success_cosine;
    return rec;
}

}  // namespace

void summarize(EvalReport& report) {
    const auto n = static_cast<double>(report.records.size());
    double successes = 0.0, fidelity = 0.0, iterations = 0.0;
    for (const auto& r : report.records) {
        successes += r.success ? 1.0 : 0.0;
        fidelity += r.fidelity;
        iterations += r.iterations;
    }
    report.asr = n > 0 ? successes / n : 0.0;
    report.mean_fidelity = n > 0 ? fidelity / n : 0.0;
    report.mean_iterations = n > 0 ? iterations / n : 0.0;
}

EvalReport evaluate(const EncoderWeights& w, const Vocabulary& vocab,
                    const std::vector<std::string>& prompts, const ConceptDirection& direction,
                    const AttackConfig& cfg, const Blocklist& blocklist,
                    const std::vector<Checker>& checkers, int jobs) {
    if (prompts.empty()) throw UsageError("evaluation corpus is empty");
    cfg.validate();
    const std::string weights_fp = weights_fingerprint(w);

    EvalReport report;
    report.config = cfg;
    report.records.resize(prompts.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < prompts.size(); i = next++) {
            try {
                report.records[i] = evaluate_one(w, weights_fp, vocab, prompts[i], i, direction, cfg,
                                                 blocklist, checkers);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = prompts.size();
            }
        }
    };
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(workers, prompts.size()); ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    summarize(report);
    return report;
}

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus " + path.string());
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        prompts.push_back(line);
    }
    return prompts;
}

json report_to_json(const EvalReport& report) {
    json records = json::array();
    for (const auto& r : report.records) {
        json flags = json::array();
        for (bool f : r.flags) flags.push_back(f);
        records.push_back({{"prompt_index", r.prompt_index},
                           {"prompt", r.prompt},
                           {"adversarial_prompt", r.adversarial_prompt},
                           {"adversarial_ids", r.adversarial_ids},
                           {"seed", r.seed},
                           {"flags", flags},
                           {"flagged_text", r.flagged_text},
                           {"flagged_embed", r.flagged_embed},
                           {"hard_cosine", r.hard_cosine},
                           {"fidelity", r.fidelity},
                           {"iterations", r.iterations},
                           {"success", r.success}});
    }
    return {{"config", config_to_json(report.config)},
            {"records", records},
            {"aggregates",
             {{"asr", report.asr},
              {"mean_fidelity", report.mean_fidelity},
              {"mean_iterations", report.mean_iterations},
              {"count", report.records.size()}}}};
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "prompt_index,success,flagged_text,flagged_embed,hard_cosine,fidelity,iterations\n";
    for (const auto& r : report.records) {
        out << r.prompt_index << ',' << (r.success ? 1 : 0) << ',' << (r.flagged_text ? 1 : 0) << ','
            << (r.flagged_embed ? 1 : 0) << ',' << r.hard_cosine << ',' << r.fidelity << ','
            << r.iterations << '\n';
    }
    return out.str();
}

}  // namespace promptsteer
