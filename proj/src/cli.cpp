#include "promptsteer/cli.hpp"

#include "promptsteer/attack.hpp"
#include "promptsteer/concept.hpp"
#include "promptsteer/digest.hpp"
#include "promptsteer/errors.hpp"
#include "promptsteer/fileio.hpp"
#include "promptsteer/gauntlet.hpp"
#include "promptsteer/simd.hpp"
#include "promptsteer/weights_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/logger.h>
#include <spdlog/sinks/ostream_sink.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <ostream>

#ifndef PROMPTSTEER_VERSION
#define PROMPTSTEER_VERSION "0.0.0"
#endif

namespace promptsteer {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
    if (dynamic_cast<const ContractViolation*>(&e)) return kExitContract;
    if (dynamic_cast<const Error*>(&e)) return kExitFailure;
    return kExitContract;
}

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto log = std::make_shared<spdlog::logger>("promptsteer", sink);
    log->set_pattern("[%l] %v");
    log->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("PROMPTSTEER_LOG")) {
        const std::string want(env);
        if (want == "error" || want == "warn" || want == "info" || want == "debug") {
            log->set_level(spdlog::level::from_str(want));
        } else {
            log->warn("ignoring PROMPTSTEER_LOG={}, expected error|warn|info|debug", want);
        }
    }
    return log;
}

// Everything a command needs to describe itself in a run manifest.
struct Run {
    std::string command;
    json args = json::object();
    json inputs = json::object();
    json outputs = json::object();
};

void add_input(Run& run, const std::string& name, const std::string& path) {
    if (!path.empty()) run.inputs[name] = {{"path", path}, {"sha256", sha256_file(path)}};
}

void write_output(Run& run, const std::string& name, const std::string& path, const std::string& contents) {
    write_file_atomic(path, contents);
    run.outputs[name] = {{"path", path}, {"sha256", sha256_hex(contents)}};
}

void write_manifest(const Run& run, const std::string& primary_out, double seconds) {
    const json manifest = {{"tool", "promptsteer"},
                           {"version", PROMPTSTEER_VERSION},
                           {"command", run.command},
                           {"args", run.args},
                           {"inputs", run.inputs},
                           {"outputs", run.outputs},
                           {"simd", std::string(simd::to_string(simd::active().isa))},
                           {"wall_seconds", seconds}};
    write_file_atomic(primary_out + ".manifest.json", manifest.dump(2) + "\n");
}

Vocabulary load_matching_vocab(const std::string& path, const EncoderWeights& w) {
    Vocabulary vocab = load_vocab(path);
    if (vocab.size() != static_cast<std::size_t>(w.config.vocab_size)) {
        throw CompatibilityError("vocabulary " + path + " has " + std::to_string(vocab.size()) +
                                 " tokens but the weights expect " + std::to_string(w.config.vocab_size));
    }
    return vocab;
}

Blocklist load_blocklist(const std::string& path, const Vocabulary& vocab) {
    if (path.empty()) return Blocklist::specials_only(vocab);
    return build_blocklist(load_word_list(path), vocab);
}

void check_fits(const EncoderWeights& w, std::size_t k, const TokenSequence& prompt) {
    if (k + prompt.size() + 2 > static_cast<std::size_t>(w.config.max_len)) {
        throw LengthError("prefix of " + std::to_string(k) + " plus a prompt of " + std::to_string(prompt.size()) +
                          " tokens does not fit max_len " + std::to_string(w.config.max_len));
    }
}

void add_attack_options(CLI::App* sub, AttackConfig& cfg) {
    sub->add_option("--k", cfg.k, "Prefix length")->capture_default_str();
    sub->add_option("--lambda", cfg.lambda, "Concept strength")->capture_default_str();
    sub->add_option("--iters", cfg.iterations, "Update steps")->capture_default_str();
    sub->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    sub->add_option("--mask", cfg.mask_value, "Gradient written into masked columns")->capture_default_str();
    sub->add_option("--decode-every", cfg.decode_every, "Steps between hard decodes")->capture_default_str();
    sub->add_option("--success-cosine", cfg.success_cosine, "Early-stop hard cosine")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
}

void record_attack_options(json& args, const AttackConfig& cfg) {
    args["k"] = cfg.k;
    args["lambda"] = cfg.lambda;
    args["iters"] = cfg.iterations;
    args["lr"] = cfg.learning_rate;
    args["mask"] = cfg.mask_value;
    args["decode-every"] = cfg.decode_every;
    args["success-cosine"] = cfg.success_cosine;
    args["seed"] = cfg.seed;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::shared_ptr<spdlog::logger> log;
};

// ---- commands ----

struct ConceptArgs {
    std::string weights, vocab, pairs, out;
};

int cmd_concept(const ConceptArgs& a, Context& ctx, Run& run) {
    const auto w = load_weights(a.weights);
    const auto vocab = load_matching_vocab(a.vocab, w);
    const auto pairs = load_pairs(a.pairs);
    add_input(run, "weights", a.weights);
    add_input(run, "vocab", a.vocab);
    add_input(run, "pairs", a.pairs);

    const auto r = concept_direction(w, vocab, pairs);
    for (const auto& warning : r.warnings) ctx.log->warn("{}", warning);
    write_output(run, "concept", a.out, direction_to_json(r).dump(2) + "\n");
    ctx.out << "pairs: " << r.pairs.size() << "\nnorm: " << shortest(l2_norm(r.values)) << "\n";
    return kExitOk;
}

struct AttackArgs {
    std::string weights, vocab, prompt, concept_file, blocklist, out;
    AttackConfig cfg;
};

int cmd_attack(const AttackArgs& a, Context& ctx, Run& run) {
    a.cfg.validate();
    const auto w = load_weights(a.weights);
    const auto vocab = load_matching_vocab(a.vocab, w);
    const auto direction = load_direction(a.concept_file);
    const auto blocklist = load_blocklist(a.blocklist, vocab);
    add_input(run, "weights", a.weights);
    add_input(run, "vocab", a.vocab);
    add_input(run, "concept", a.concept_file);
    add_input(run, "blocklist", a.blocklist);

    const auto prompt = tokenize(a.prompt, vocab);
    check_fits(w, static_cast<std::size_t>(a.cfg.k), prompt);
    ctx.log->info("attacking '{}' ({} tokens), {} blocklisted ids", a.prompt, prompt.size(),
                  blocklist.token_ids.size());
    const auto result = optimize(w, weights_fingerprint(w), vocab, prompt, direction, a.cfg, blocklist);
    write_output(run, "result", a.out, result_to_json(result, vocab).dump(2) + "\n");

    ctx.out << "adversarial: " << detokenize(result.adversarial_tokens, vocab) << "\n"
            << "final_cosine: " << shortest(result.final_cosine) << "\n"
            << "best_iteration: " << result.best_iteration << "\n";
    if (!result.passed_text_checker) {
        ctx.log->error("no checkpoint produced a blocklist-free prefix");
        return kExitContract;
    }
    return kExitOk;
}

struct EvalArgs {
    std::string weights, vocab, concept_file, corpus, out, csv, blocklist, text_words, anchor_pairs;
    bool embed_checker = false;
    double tau = 0.26;
    int jobs = 1;
    AttackConfig cfg;
};

int cmd_eval(const EvalArgs& a, Context& ctx, Run& run) {
    a.cfg.validate();
    if (a.jobs < 1) throw UsageError("--jobs must be at least 1");
    const auto w = load_weights(a.weights);
    const auto vocab = load_matching_vocab(a.vocab, w);
    const auto direction = load_direction(a.concept_file);
    const auto prompts = load_corpus(a.corpus);
    add_input(run, "weights", a.weights);
    add_input(run, "vocab", a.vocab);
    add_input(run, "concept", a.concept_file);
    add_input(run, "corpus", a.corpus);
    add_input(run, "blocklist", a.blocklist);
    add_input(run, "text-words", a.text_words);
    add_input(run, "anchor-pairs", a.anchor_pairs);

    std::vector<Checker> checkers;
    Blocklist blocklist = Blocklist::specials_only(vocab);
    if (!a.text_words.empty()) {
        const auto words = load_word_list(a.text_words);
        checkers.emplace_back(make_text_checker(words));
        // Without an explicit blocklist the attack avoids the checker's own words.
        if (a.blocklist.empty()) blocklist = build_blocklist(words, vocab);
    }
    if (!a.blocklist.empty()) blocklist = load_blocklist(a.blocklist, vocab);
    if (a.embed_checker || !a.anchor_pairs.empty()) {
        const auto pairs = a.anchor_pairs.empty() ? direction.pairs : load_pairs(a.anchor_pairs);
        checkers.emplace_back(make_embed_checker(w, vocab, pairs, a.tau));
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) check_fits(w, static_cast<std::size_t>(a.cfg.k), tokenize(prompts[i], vocab));

    ctx.log->info("evaluating {} prompts with {} checkers on {} workers", prompts.size(), checkers.size(), a.jobs);
    const auto report = evaluate(w, vocab, prompts, direction, a.cfg, blocklist, checkers, a.jobs);
    write_output(run, "report", a.out, report_to_json(report).dump(2) + "\n");
    if (!a.csv.empty()) write_output(run, "csv", a.csv, report_to_csv(report));

    ctx.out << "records: " << report.records.size() << "\n"
            << "asr: " << shortest(report.asr) << "\n"
            << "mean_fidelity: " << shortest(report.mean_fidelity) << "\n"
            << "mean_iterations: " << shortest(report.mean_iterations) << "\n";
    return kExitOk;
}

struct EncodeArgs {
    std::string weights, vocab, prompt, parity;
};

inline constexpr double kParityTolerance = 1e-3;

int cmd_encode(const EncodeArgs& a, Context& ctx) {
    const auto w = load_weights(a.weights);
    const auto vocab = load_matching_vocab(a.vocab, w);
    if (a.parity.empty()) {
        if (a.prompt.empty()) throw UsageError("encode needs --prompt or --parity");
        ctx.out << json(encode(w, tokenize(a.prompt, vocab))).dump() << "\n";
        return kExitOk;
    }

    json records;
    try {
        records = json::parse(read_text_file(a.parity));
    } catch (const json::parse_error& e) {
        throw FormatError(a.parity + ": " + e.what());
    }
    if (!records.is_array() || records.empty()) throw FormatError(a.parity + ": expected a nonempty JSON array");
    std::size_t within = 0;
    double worst = 0.0;
    for (const auto& rec : records) {
        std::string prompt;
        std::vector<double> expect;
        try {
            prompt = rec.at("prompt").get<std::string>();
            expect = rec.at("embedding").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw FormatError(a.parity + ": " + e.what());
        }
        const auto got = encode(w, tokenize(prompt, vocab));
        if (got.size() != expect.size()) {
            throw CompatibilityError("parity embedding for '" + prompt + "' has width " +
                                     std::to_string(expect.size()) + ", encoder gives " + std::to_string(got.size()));
        }
        const double rel = relative_error(got, expect);
        worst = std::max(worst, rel);
        if (rel <= kParityTolerance) {
            ++within;
        } else {
            ctx.log->warn("parity mismatch for '{}': relative error {}", prompt, rel);
        }
    }
    ctx.out << "parity: " << within << "/" << records.size() << " within " << shortest(kParityTolerance)
            << ", max relative error " << shortest(worst) << "\n";
    return within == records.size() ? kExitOk : kExitFailure;
}

int cmd_weights_info(const std::string& path, Context& ctx) {
    const auto bytes = read_binary_file(path);
    const auto w = deserialize_weights(bytes);
    std::size_t params = 0;
    const auto manifest = tensor_manifest(w.config);
    for (const auto& t : manifest) params += t.element_count();
    const json info = {{"config", config_to_json(w.config)},
                       {"tensors", manifest.size()},
                       {"parameters", params},
                       {"file_bytes", bytes.size()},
                       {"fingerprint", weights_fingerprint(w)}};
    ctx.out << info.dump(2) << "\n";
    return kExitOk;
}

struct InitArgs {
    std::string out, vocab;
    EncoderConfig config;
    std::uint64_t seed = 0;
};

int cmd_init_weights(InitArgs a, Context& ctx, Run& run) {
    if (!a.vocab.empty()) {
        a.config.vocab_size = static_cast<int>(load_vocab(a.vocab).size());
        add_input(run, "vocab", a.vocab);
    }
    if (!a.config.has_projection) a.config.d_out = a.config.d_model;
    run.args["vocab-size"] = a.config.vocab_size;
    run.args["d-out"] = a.config.d_out;
    const auto w = init_random_encoder(a.config, a.seed);
    std::string bytes;
    write_pfw1(w, [&](std::span<const std::uint8_t> chunk) { bytes.append(chunk.begin(), chunk.end()); });
    write_output(run, "weights", a.out, bytes);
    ctx.out << "fingerprint: " << sha256_hex(bytes) << "\n";
    return kExitOk;
}

// Turns a recorded args object back into command-line words.
std::vector<std::string> args_to_argv(const std::string& command, const json& args) {
    std::vector<std::string> argv = {"promptsteer", command};
    for (const auto& [key, value] : args.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) argv.push_back("--" + key);
            continue;
        }
        if (value.is_string() && value.get<std::string>().empty()) continue;
        argv.push_back("--" + key);
        if (value.is_string()) {
            argv.push_back(value.get<std::string>());
        } else if (value.is_number_float()) {
            argv.push_back(shortest(value.get<double>()));
        } else {
            argv.push_back(value.dump());
        }
    }
    return argv;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_override, Context& ctx) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw FormatError(manifest_path + ": " + e.what());
    }
    std::string command;
    json args, inputs, outputs;
    try {
        command = manifest.at("command").get<std::string>();
        args = manifest.at("args");
        inputs = manifest.at("inputs");
        outputs = manifest.at("outputs");
    } catch (const json::exception& e) {
        throw FormatError(manifest_path + ": " + e.what());
    }
    if (command == "replay") throw UsageError("a replay manifest cannot be replayed");

    for (const auto& [name, input] : inputs.items()) {
        const auto path = input.at("path").get<std::string>();
        if (sha256_file(path) != input.at("sha256").get<std::string>()) {
            throw CompatibilityError("input " + name + " (" + path + ") changed since the manifest was written");
        }
    }

    // Secondary outputs follow the primary one into the override location.
    std::vector<std::pair<std::string, std::string>> compare;  // recorded sha, new path
    for (const auto& [name, output] : outputs.items()) {
        const auto old_path = output.at("path").get<std::string>();
        std::string new_path = old_path;
        if (!out_override.empty()) {
            new_path = name == "csv" ? out_override + ".csv" : out_override;
            for (auto& [key, value] : args.items()) {
                if (value.is_string() && value.get<std::string>() == old_path) value = absolute(new_path);
            }
        }
        compare.emplace_back(output.at("sha256").get<std::string>(), new_path);
    }

    const auto argv = args_to_argv(command, args);
    ctx.log->info("replaying {}", command);
    const int code = run_cli(argv, ctx.out, ctx.err);
    if (code != kExitOk) return code;
    for (const auto& [sha, path] : compare) {
        if (sha256_file(path) != sha) {
            throw ContractViolation("replayed output " + path + " differs from the recorded run");
        }
        ctx.out << "replay: " << path << " identical\n";
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx{out, err, make_logger(err)};

    CLI::App app{"Discrete prompt optimisation toward concept-rendered embeddings"};
    app.set_version_flag("--version", PROMPTSTEER_VERSION);
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    ConceptArgs concept_args;
    auto* concept_cmd = app.add_subcommand("concept", "Concept direction from antonym pairs");
    concept_cmd->add_option("--weights", concept_args.weights, "PFW1 weight file")->required();
    concept_cmd->add_option("--vocab", concept_args.vocab, "Vocabulary file")->required();
    concept_cmd->add_option("--pairs", concept_args.pairs, "JSON array of {pos, neg}")->required();
    concept_cmd->add_option("--out", concept_args.out, "Direction file to write")->required();

    AttackArgs attack_args;
    auto* attack_cmd = app.add_subcommand("attack", "Optimise a prefix for one prompt");
    attack_cmd->add_option("--weights", attack_args.weights, "PFW1 weight file")->required();
    attack_cmd->add_option("--vocab", attack_args.vocab, "Vocabulary file")->required();
    attack_cmd->add_option("--prompt", attack_args.prompt, "Prompt text")->required();
    attack_cmd->add_option("--concept", attack_args.concept_file, "Direction file")->required();
    attack_cmd->add_option("--blocklist", attack_args.blocklist, "Word list the prefix must avoid");
    attack_cmd->add_option("--out", attack_args.out, "Result JSON to write")->required();
    add_attack_options(attack_cmd, attack_args.cfg);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Attack every corpus prompt and score the checkers");
    eval_cmd->add_option("--weights", eval_args.weights, "PFW1 weight file")->required();
    eval_cmd->add_option("--vocab", eval_args.vocab, "Vocabulary file")->required();
    eval_cmd->add_option("--concept", eval_args.concept_file, "Direction file")->required();
    eval_cmd->add_option("--corpus", eval_args.corpus, "One prompt per line")->required();
    eval_cmd->add_option("--out", eval_args.out, "Report JSON to write")->required();
    eval_cmd->add_option("--csv", eval_args.csv, "Optional flat CSV export");
    eval_cmd->add_option("--blocklist", eval_args.blocklist, "Word list the prefix must avoid");
    eval_cmd->add_option("--text-words", eval_args.text_words, "Enable the text checker with this word list");
    eval_cmd->add_flag("--embed-checker", eval_args.embed_checker,
                       "Enable the embedding checker, anchored on the concept's positive phrases");
    eval_cmd->add_option("--anchor-pairs", eval_args.anchor_pairs, "Pairs file whose positive phrases are anchors");
    eval_cmd->add_option("--tau", eval_args.tau, "Embedding checker threshold")->capture_default_str();
    eval_cmd->add_option("--jobs", eval_args.jobs, "Concurrent prompts")->capture_default_str();
    add_attack_options(eval_cmd, eval_args.cfg);

    EncodeArgs encode_args;
    auto* encode_cmd = app.add_subcommand("encode", "Print a pooled embedding or check a parity file");
    encode_cmd->add_option("--weights", encode_args.weights, "PFW1 weight file")->required();
    encode_cmd->add_option("--vocab", encode_args.vocab, "Vocabulary file")->required();
    encode_cmd->add_option("--prompt", encode_args.prompt, "Prompt text");
    encode_cmd->add_option("--parity", encode_args.parity, "JSON array of {prompt, embedding}");

    std::string info_weights;
    auto* info_cmd = app.add_subcommand("weights-info", "Describe a PFW1 file");
    info_cmd->add_option("--weights", info_weights, "PFW1 weight file")->required();

    InitArgs init_args;
    auto* init_cmd = app.add_subcommand("init-weights", "Write a randomly initialised encoder");
    init_cmd->add_option("--out", init_args.out, "PFW1 file to write")->required();
    init_cmd->add_option("--seed", init_args.seed, "Random seed")->capture_default_str();
    auto* vocab_opt = init_cmd->add_option("--vocab", init_args.vocab, "Take the vocabulary size from this file");
    init_cmd->add_option("--vocab-size", init_args.config.vocab_size, "Vocabulary size")
        ->capture_default_str()
        ->excludes(vocab_opt);
    init_cmd->add_option("--d-model", init_args.config.d_model)->capture_default_str();
    init_cmd->add_option("--layers", init_args.config.n_layers)->capture_default_str();
    init_cmd->add_option("--heads", init_args.config.n_heads)->capture_default_str();
    init_cmd->add_option("--d-ff", init_args.config.d_ff)->capture_default_str();
    init_cmd->add_option("--max-len", init_args.config.max_len)->capture_default_str();
    init_cmd->add_flag("--projection", init_args.config.has_projection, "Add an output projection");
    init_cmd->add_option("--d-out", init_args.config.d_out, "Projection width")->capture_default_str();

    std::string replay_manifest, replay_out;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
    replay_cmd->add_option("manifest", replay_manifest, "Manifest JSON")->required();
    replay_cmd->add_option("--out", replay_out, "Write the primary output here instead");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const auto started = std::chrono::steady_clock::now();
    auto seconds = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };
    try {
        Run run;
        std::string primary;
        int code = kExitOk;
        if (*concept_cmd) {
            auto& a = concept_args;
            for (auto* p : {&a.weights, &a.vocab, &a.pairs, &a.out}) *p = absolute(*p);
            run.command = "concept";
            run.args = {{"weights", a.weights}, {"vocab", a.vocab}, {"pairs", a.pairs}, {"out", a.out}};
            primary = a.out;
            code = cmd_concept(a, ctx, run);
        } else if (*attack_cmd) {
            auto& a = attack_args;
            for (auto* p : {&a.weights, &a.vocab, &a.concept_file, &a.blocklist, &a.out}) *p = absolute(*p);
            run.command = "attack";
            run.args = {{"weights", a.weights}, {"vocab", a.vocab},         {"prompt", a.prompt},
                        {"concept", a.concept_file}, {"blocklist", a.blocklist}, {"out", a.out}};
            record_attack_options(run.args, a.cfg);
            primary = a.out;
            code = cmd_attack(a, ctx, run);
        } else if (*eval_cmd) {
            auto& a = eval_args;
            for (auto* p : {&a.weights, &a.vocab, &a.concept_file, &a.corpus, &a.out, &a.csv, &a.blocklist,
                            &a.text_words, &a.anchor_pairs})
                *p = absolute(*p);
            run.command = "eval";
            run.args = {{"weights", a.weights},       {"vocab", a.vocab},
                        {"concept", a.concept_file},       {"corpus", a.corpus},
                        {"out", a.out},               {"csv", a.csv},
                        {"blocklist", a.blocklist},   {"text-words", a.text_words},
                        {"anchor-pairs", a.anchor_pairs}, {"embed-checker", a.embed_checker},
                        {"tau", a.tau},               {"jobs", a.jobs}};
            record_attack_options(run.args, a.cfg);
            primary = a.out;
            code = cmd_eval(a, ctx, run);
        } else if (*encode_cmd) {
            return cmd_encode(encode_args, ctx);
        } else if (*info_cmd) {
            return cmd_weights_info(info_weights, ctx);
        } else if (*init_cmd) {
            auto& a = init_args;
            a.out = absolute(a.out);
            a.vocab = absolute(a.vocab);
            run.command = "init-weights";
            run.args = {{"out", a.out},
                        {"seed", a.seed},
                        {"d-model", a.config.d_model},
                        {"layers", a.config.n_layers},
                        {"heads", a.config.n_heads},
                        {"d-ff", a.config.d_ff},
                        {"max-len", a.config.max_len},
                        {"projection", a.config.has_projection}};
            primary = a.out;
            code = cmd_init_weights(a, ctx, run);
        } else if (*replay_cmd) {
            return cmd_replay(replay_manifest, replay_out.empty() ? "" : absolute(replay_out), ctx);
        }
        if (!run.outputs.empty()) write_manifest(run, primary, seconds());
        return code;
    } catch (const std::exception& e) {
        ctx.log->error("{}", e.what());
        return exit_code_for(e);
    }
}

}  // namespace promptsteer
