#include "doctest.h"
#include "support.hpp"

#include "promptsteer/errors.hpp"
#include "promptsteer/weights_io.hpp"

#include <algorithm>
#include <cstring>

using namespace promptsteer;
using namespace testsupport;

TEST_CASE("init is deterministic in the seed") {
    auto cfg = tiny_config(32);
    CHECK(init_random_encoder(cfg, 7) == init_random_encoder(cfg, 7));
    CHECK_FALSE(init_random_encoder(cfg, 7) == init_random_encoder(cfg, 8));
}

TEST_CASE("init rejects bad configs") {
    auto cfg = tiny_config();
    cfg.n_heads = 3;
    CHECK_THROWS_AS(init_random_encoder(cfg, 1), ConfigError);
    cfg = tiny_config();
    cfg.d_out = 4;
    CHECK_THROWS_AS(init_random_encoder(cfg, 1), ConfigError);
    cfg = tiny_config();
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(init_random_encoder(cfg, 1), ConfigError);
}

TEST_CASE("pooled norm stays O(1) across seeds") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto w = init_random_encoder(tiny_config(), s);
        const double n = l2_norm(encode(w, seq({4, 5, 6})));
        CHECK(n >= 0.1);
        CHECK(n <= 10.0);
    }
}

TEST_CASE("projection keeps pooled norm O(1)") {
    auto cfg = tiny_config();
    cfg.has_projection = true;
    cfg.d_out = 6;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto w = init_random_encoder(cfg, s);
        const auto e = encode(w, seq({4, 5}));
        REQUIRE(e.size() == 6);
        CHECK(l2_norm(e) >= 0.1);
        CHECK(l2_norm(e) <= 10.0);
    }
}

TEST_CASE("encode is pure and matches the reference implementation") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto cfg = tiny_config();
        cfg.has_projection = (s % 2 == 1);
        const auto w = init_random_encoder(cfg, s);
        const std::vector<TokenId> ids{4, 9, 7, 11};
        const auto a = encode(w, seq(ids));
        CHECK(a == encode(w, seq(ids)));
        CHECK(vec_rel_err(a, ref_encode(w, ids)) < 1e-12);
    }
}

TEST_CASE("zero-layer encoder reduces to the final norm of the eos row") {
    const auto w = init_random_encoder(tiny_config(16, 0), 3);
    const TokenId t = 6;
    const auto e = encode(w, seq({t}));
    // Layout [bos, t, eos]: eos sits at position 2 and attends to nothing.
    std::vector<double> x(8);
    for (std::size_t d = 0; d < 8; ++d) x[d] = w.token_embedding(1, d) + w.position_embedding(2, d);
    double mean = 0.0;
    for (double v : x) mean += v / 8.0;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean) / 8.0;
    for (std::size_t d = 0; d < 8; ++d) {
        const double expect = (x[d] - mean) / std::sqrt(var + 1e-5);
        CHECK(e[d] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("token order matters") {
    int changed = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto w = init_random_encoder(tiny_config(), s);
        if (encode(w, seq({4, 5})) != encode(w, seq({5, 4}))) ++changed;
    }
    CHECK(changed == 20);
}

TEST_CASE("sequence longer than max_len is a length error") {
    const auto w = init_random_encoder(tiny_config(), 1);
    CHECK_NOTHROW(encode(w, seq(std::vector<TokenId>(14, 4))));
    CHECK_THROWS_AS(encode(w, seq(std::vector<TokenId>(15, 4))), LengthError);
    CHECK_THROWS_AS(encode_soft(w, random_logits(3, 16, 1), seq(std::vector<TokenId>(12, 4))), LengthError);
}

TEST_CASE("soft_embed: uniform row is the column mean") {
    const auto w = init_random_encoder(tiny_config(), 2);
    const auto rows = soft_embed(PrefixLogits{Matrix(1, 16, 0.5)}, w);
    for (std::size_t d = 0; d < 8; ++d) {
        double mean = 0.0;
        for (std::size_t j = 0; j < 16; ++j) mean += w.token_embedding(j, d);
        mean /= 16.0;
        CHECK(rows(0, d) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("soft_embed: saturated row is the token row") {
    const auto w = init_random_encoder(tiny_config(), 2);
    const auto rows = soft_embed(saturated({9}, 16), w);
    CHECK(max_rel_err(std::vector<double>(rows.row(0).begin(), rows.row(0).end()), token_row(w, 9)) < 1e-6);
}

TEST_CASE("encode_soft with saturated logits equals encode") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto w = init_random_encoder(tiny_config(), s);
        const std::vector<TokenId> prefix{static_cast<TokenId>(4 + s % 12), static_cast<TokenId>(4 + (s * 5) % 12)};
        const std::vector<TokenId> suffix{5, 6};
        std::vector<TokenId> all = prefix;
        all.insert(all.end(), suffix.begin(), suffix.end());
        CHECK(vec_rel_err(encode_soft(w, saturated(prefix, 16), seq(suffix)), encode(w, seq(all))) < 1e-5);
    }
}

TEST_CASE("encode_soft with no prefix equals encode") {
    const auto w = init_random_encoder(tiny_config(), 4);
    CHECK(vec_rel_err(encode_soft(w, PrefixLogits{Matrix(0, 16)}, seq({5, 6})), encode(w, seq({5, 6}))) < 1e-14);
}

TEST_CASE("encode_soft matches the reference implementation on random logits") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto w = init_random_encoder(tiny_config(), s);
        const auto logits = random_logits(3, 16, s + 100, 2.0);
        CHECK(vec_rel_err(encode_soft(w, logits, seq({7, 8})), ref_encode_soft(w, logits, {7, 8})) < 1e-12);
    }
}

namespace {

double soft_loss(const EncoderWeights& w, const PrefixLogits& p, const TokenSequence& suffix,
                 const EmbeddingVector& target) {
    return -ref_cos(encode_soft(w, p, suffix), target);
}

}  // namespace

TEST_CASE("gradient matches central differences") {
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto cfg = tiny_config();
        cfg.has_projection = (s == 2);
        const auto w = init_random_encoder(cfg, s + 11);
        auto logits = random_logits(2, 16, s + 21);
        const auto suffix = seq({5, 6, 7});
        const auto target = encode(w, seq({8, 9}));
        const auto lg = grad_loss_wrt_logits(w, logits, suffix, target);
        CHECK(lg.loss == doctest::Approx(soft_loss(w, logits, suffix, target)).epsilon(1e-12));
        const double h = 1e-3;
        double worst = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 16; ++j) {
                const double g = lg.grad(i, j);
                if (std::abs(g) < 1e-8) continue;
                const double saved = logits.values(i, j);
                logits.values(i, j) = saved + h;
                const double up = soft_loss(w, logits, suffix, target);
                logits.values(i, j) = saved - h;
                const double down = soft_loss(w, logits, suffix, target);
                logits.values(i, j) = saved;
                worst = std::max(worst, std::abs((up - down) / (2 * h) - g) / std::abs(g));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gradient of each softmax row sums to zero") {
    const auto w = init_random_encoder(tiny_config(), 5);
    const auto lg = grad_loss_wrt_logits(w, random_logits(2, 16, 6), seq({4}), encode(w, seq({9})));
    for (std::size_t i = 0; i < 2; ++i) {
        double sum = 0.0, mag = 0.0;
        for (double g : lg.grad.row(i)) {
            sum += g;
            mag += std::abs(g);
        }
        CHECK(std::abs(sum) <= 1e-12 * std::max(mag, 1.0));
    }
}

TEST_CASE("loss and gradient are invariant to target scale") {
    const auto w = init_random_encoder(tiny_config(), 5);
    const auto logits = random_logits(2, 16, 6);
    auto target = encode(w, seq({9, 10}));
    const auto a = grad_loss_wrt_logits(w, logits, seq({4}), target);
    for (auto& v : target) v *= 2.0;
    const auto b = grad_loss_wrt_logits(w, logits, seq({4}), target);
    CHECK(a.loss == b.loss);
    CHECK(a.grad == b.grad);
}

TEST_CASE("target equal to the output gives loss -1 and a tiny gradient") {
    const auto w = init_random_encoder(tiny_config(), 5);
    const auto logits = random_logits(2, 16, 6);
    const auto target = encode_soft(w, logits, seq({4}));
    const auto lg = grad_loss_wrt_logits(w, logits, seq({4}), target);
    CHECK(lg.loss == doctest::Approx(-1.0).epsilon(1e-12));
    for (double g : lg.grad.flat()) CHECK(std::abs(g) < 1e-7);
}

TEST_CASE("zero target is a math error, wrong width a compatibility error") {
    const auto w = init_random_encoder(tiny_config(), 5);
    CHECK_THROWS_AS(grad_loss_wrt_logits(w, random_logits(1, 16, 1), seq({4}), EmbeddingVector(8, 0.0)), MathError);
    CHECK_THROWS_AS(grad_loss_wrt_logits(w, random_logits(1, 16, 1), seq({4}), EmbeddingVector(5, 1.0)),
                    CompatibilityError);
}

// ---- PFW1 ----

TEST_CASE("PFW1 round trip is bit-identical") {
    auto cfg = tiny_config(20);
    cfg.has_projection = true;
    cfg.d_out = 4;
    const auto w = init_random_encoder(cfg, 9);
    const auto bytes = serialize_weights(w);
    CHECK(deserialize_weights(bytes) == w);

    const auto dir = scratch_dir("pfw1");
    save_weights(w, dir / "w.pfw");
    CHECK(load_weights(dir / "w.pfw") == w);
    CHECK(weights_fingerprint(w) == weights_fingerprint(load_weights(dir / "w.pfw")));
}

TEST_CASE("PFW1 byte accounting is exact") {
    const auto w = init_random_encoder(tiny_config(), 9);
    const auto bytes = serialize_weights(w);
    REQUIRE(bytes.size() > 8);
    CHECK(std::memcmp(bytes.data(), "PFW1", 4) == 0);
    const std::uint32_t h = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) | (static_cast<std::uint32_t>(bytes[7]) << 24);
    std::size_t floats = 0;
    for (const auto& t : tensor_manifest(w.config)) floats += t.element_count();
    CHECK(bytes.size() == 8 + h + 4 * floats);

    const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + h);
    CHECK(header["tensors"].size() == tensor_manifest(w.config).size());
    CHECK(header["tensors"][0]["name"] == "token_embedding");
}

TEST_CASE("PFW1 readers reject corrupt files") {
    const auto w = init_random_encoder(tiny_config(), 9);
    const auto good = serialize_weights(w);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_weights(bad_magic), FormatError);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(deserialize_weights(truncated), FormatError);

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_weights(trailing), FormatError);

    // Rewrite the manifest with a wrong shape while keeping the header length.
    const std::uint32_t h = good[4] | (good[5] << 8) | (good[6] << 16) | (static_cast<std::uint32_t>(good[7]) << 24);
    std::string header(good.begin() + 8, good.begin() + 8 + h);
    const auto pos = header.find("[16,8]");
    REQUIRE(pos != std::string::npos);
    header.replace(pos, 6, "[8,16]");
    auto reshaped = good;
    std::copy(header.begin(), header.end(), reshaped.begin() + 8);
    CHECK_THROWS_AS(deserialize_weights(reshaped), FormatError);

    auto nan = good;
    const std::size_t first_float = 8 + h;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + first_float, &q, 4);
    CHECK_THROWS_AS(deserialize_weights(nan), FormatError);

    CHECK_THROWS_AS(load_weights("/nonexistent/w.pfw"), IoError);
}
