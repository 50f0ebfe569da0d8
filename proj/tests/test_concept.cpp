#include "doctest.h"
#include "support.hpp"

#include "promptsteer/concept.hpp"
#include "promptsteer/errors.hpp"
#include "promptsteer/weights_io.hpp"

#include <algorithm>

using namespace promptsteer;
using namespace testsupport;

namespace {

const std::vector<ConceptPair> kPairs = {{"red cat", "blue dog"}, {"sun", "moon"}, {"tree", "house"}};

std::vector<ConceptPair> swapped(std::vector<ConceptPair> p) {
    for (auto& x : p) std::swap(x.positive, x.negative);
    return p;
}

}  // namespace

TEST_CASE("single pair reduces to the embedding difference") {
    // Zero layers, d_model 4, one head, eos embedding zero. The eos row is then
    // the position row alone, and the projection is chosen so that a one-token
    // prompt pools to e1 and a two-token prompt pools to 0.
    EncoderConfig cfg;
    cfg.d_model = 4;
    cfg.n_layers = 0;
    cfg.n_heads = 1;
    cfg.d_ff = 4;
    cfg.max_len = 8;
    cfg.vocab_size = 16;
    cfg.has_projection = true;
    cfg.d_out = 3;
    auto w = init_random_encoder(cfg, 1);
    for (std::size_t d = 0; d < 4; ++d) w.token_embedding(1, d) = 0.0;
    const double p2[4] = {1, -1, 0, 0};
    const double p3[4] = {0, 0, 1, -1};
    for (std::size_t d = 0; d < 4; ++d) {
        w.position_embedding(2, d) = p2[d];
        w.position_embedding(3, d) = p3[d];
    }
    const double z = 1.0 / std::sqrt(0.5 + kLayerNormEps);  // normalised magnitude of p2 entries
    w.projection = Matrix(4, 3, 0.0);
    w.projection(0, 0) = 0.5 / z;
    w.projection(1, 0) = -0.5 / z;
    const auto v = make_vocab();

    const auto r = concept_direction(w, v, {{"cat", "red dog"}});
    CHECK(r.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(r.values[1]) < 1e-15);
    CHECK(std::abs(r.values[2]) < 1e-15);
}

TEST_CASE("direction is the mean of pairwise differences in list order") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    const auto r = concept_direction(w, v, kPairs);
    std::vector<double> expect(8, 0.0);
    for (const auto& p : kPairs) {
        const auto a = encode(w, tokenize(p.positive, v));
        const auto b = encode(w, tokenize(p.negative, v));
        for (std::size_t j = 0; j < 8; ++j) expect[j] += a[j] - b[j];
    }
    for (auto& e : expect) e /= 3.0;
    CHECK(r.values == expect);
    CHECK(r.pairs == kPairs);
    CHECK(r.encoder_fingerprint == weights_fingerprint(w));
    CHECK(concept_direction(w, v, kPairs).values == r.values);
}

TEST_CASE("swapping every pair negates the direction exactly") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    const auto r = concept_direction(w, v, kPairs);
    const auto s = concept_direction(w, v, swapped(kPairs));
    for (std::size_t j = 0; j < 8; ++j) CHECK(s.values[j] == -r.values[j]);
}

TEST_CASE("pair order only matters up to rounding") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    auto shuffled = kPairs;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(vec_rel_err(concept_direction(w, v, shuffled).values, concept_direction(w, v, kPairs).values) < 1e-6);
}

TEST_CASE("bad pair lists") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    CHECK_THROWS_AS(concept_direction(w, v, {}), UsageError);
    CHECK_THROWS_AS(concept_direction(w, v, {{"", "cat"}}), UsageError);
    CHECK_THROWS_AS(concept_direction(w, v, {{"cat", "cat"}}), UsageError);
    CHECK_THROWS_AS(concept_direction(w, v, {{"cat", "   "}}), UsageError);
    const auto r = concept_direction(w, v, {{"zebra", "cat"}});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("unk") != std::string::npos);
}

TEST_CASE("rendering") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    const auto r = concept_direction(w, v, kPairs);
    const auto prompt = tokenize("a red car", v);
    const auto base = encode(w, prompt);

    CHECK(render_target(w, prompt, r, 0.0).values == base);

    const auto t3 = render_target(w, prompt, r, 3.0);
    for (std::size_t j = 0; j < 8; ++j) CHECK(t3.values[j] == base[j] + 3.0 * r.values[j]);
    CHECK(t3.lambda == 3.0);
    CHECK(t3.source_prompt == prompt);

    const double big = 1000.0 * l2_norm(base) / l2_norm(r.values);
    CHECK(cosine_similarity(render_target(w, prompt, r, big).values, r.values) > 0.99);

    CHECK_THROWS_AS(render_target(w, prompt, r, -1.0), UsageError);
    auto other = r;
    other.encoder_fingerprint = "deadbeef";
    CHECK_THROWS_AS(render_target(w, prompt, other, 1.0), CompatibilityError);
}

TEST_CASE("lambda linearity is exact on dyadic values") {
    const EmbeddingVector base{0.5, -1.25, 2.0, 0.0};
    const EmbeddingVector r{0.25, 0.125, -0.75, 1.5};
    for (double l1 : {0.5, 1.0, 3.0}) {
        for (double l2 : {0.0, 0.25, 2.0}) {
            const auto a = render_embedding(base, r, l1 + l2);
            const auto b = render_embedding(base, r, l2);
            for (std::size_t j = 0; j < 4; ++j) CHECK(a[j] - b[j] == l1 * r[j]);
        }
    }
}

TEST_CASE("direction file round trip") {
    const auto w = init_random_encoder(tiny_config(), 3);
    const auto v = make_vocab();
    auto r = concept_direction(w, v, kPairs);
    for (auto& x : r.values) x = static_cast<float>(x);
    const auto dir = scratch_dir("concept");
    save_direction(r, dir / "c.json");
    const auto back = load_direction(dir / "c.json");
    CHECK(back.values == r.values);
    CHECK(back.pairs == r.pairs);
    CHECK(back.encoder_fingerprint == r.encoder_fingerprint);

    auto j = direction_to_json(r);
    j["d_out"] = 7;
    CHECK_THROWS_AS(direction_from_json(j), FormatError);
    CHECK_THROWS_AS(parse_pairs(nlohmann::json::parse(R"([{"pos":"a"}])")), FormatError);
    CHECK_THROWS_AS(parse_pairs(nlohmann::json::parse(R"({"pos":"a","neg":"b"})")), FormatError);
}
