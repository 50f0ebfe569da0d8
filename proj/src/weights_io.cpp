#include "promptsteer/weights_io.hpp"

#include "promptsteer/digest.hpp"
#include "promptsteer/errors.hpp"
#include "promptsteer/fileio.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace promptsteer {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'F', 'W', '1'};
constexpr std::size_t kChunkFloats = 1 << 14;

// The single place that fixes tensor order in the payload. `W` is
// EncoderWeights or const EncoderWeights; shapes must already match the
// config (see allocate()).
template <class W, class Fn>
void visit_tensors(W& w, Fn&& fn) {
    auto norm = [&](const std::string& prefix, auto& n) {
        fn(prefix + ".gain", std::span(n.gain));
        fn(prefix + ".bias", std::span(n.bias));
    };
    auto linear = [&](const std::string& prefix, auto& l) {
        fn(prefix + ".weight", l.weight.flat());
        fn(prefix + ".bias", std::span(l.bias));
    };
    fn(std::string("token_embedding"), w.token_embedding.flat());
    fn(std::string("position_embedding"), w.position_embedding.flat());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l);
        auto& layer = w.layers[l];
        norm(p + ".ln1", layer.ln1);
        linear(p + ".attn.query", layer.query);
        linear(p + ".attn.key", layer.key);
        linear(p + ".attn.value", layer.value);
        linear(p + ".attn.out", layer.out);
        norm(p + ".ln2", layer.ln2);
        linear(p + ".mlp.fc1", layer.fc1);
        linear(p + ".mlp.fc2", layer.fc2);
    }
    norm("final_norm", w.final_norm);
    if (w.config.has_projection) fn(std::string("projection"), w.projection.flat());
}

void allocate(EncoderWeights& w) {
    const auto& cfg = w.config;
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto ff = static_cast<std::size_t>(cfg.d_ff);
    auto norm = [&] { return LayerNorm{std::vector<double>(d), std::vector<double>(d)}; };
    auto linear = [](std::size_t in, std::size_t out) {
        return Linear{Matrix(in, out), std::vector<double>(out)};
    };
    w.token_embedding = Matrix(static_cast<std::size_t>(cfg.vocab_size), d);
    w.position_embedding = Matrix(static_cast<std::size_t>(cfg.max_len), d);
    w.layers.clear();
    for (int l = 0; l < cfg.n_layers; ++l) {
        w.layers.push_back({norm(), linear(d, d), linear(d, d), linear(d, d), linear(d, d), norm(),
                            linear(d, ff), linear(ff, d)});
    }
    w.final_norm = norm();
    w.projection = cfg.has_projection ? Matrix(d, static_cast<std::size_t>(cfg.d_out)) : Matrix();
}

std::string header_json(const EncoderConfig& cfg) {
    json tensors = json::array();
    for (const auto& t : tensor_manifest(cfg)) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    return json{{"format", "PFW1"}, {"config", config_to_json(cfg)}, {"tensors", tensors}}.dump();
}

void put_u32_le(std::uint32_t v, std::uint8_t* out) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32_le(const std::uint8_t* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    return v;
}

}  // namespace

json config_to_json(const EncoderConfig& c) {
    return {{"d_model", c.d_model},   {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
            {"d_ff", c.d_ff},         {"max_len", c.max_len},       {"vocab_size", c.vocab_size},
            {"has_projection", c.has_projection}, {"d_out", c.d_out}};
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig c;
    try {
        c.d_model = j.at("d_model").get<int>();
        c.n_layers = j.at("n_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.max_len = j.at("max_len").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.has_projection = j.at("has_projection").get<bool>();
        c.d_out = j.at("d_out").get<int>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("PFW1 config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("PFW1 config: ") + e.what());
    }
    return c;
}

std::size_t TensorSpec::element_count() const noexcept {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::vector<TensorSpec> tensor_manifest(const EncoderConfig& config) {
    std::vector<TensorSpec> out;
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.d_ff);
    auto norm = [&](const std::string& p) {
        out.push_back({p + ".gain", {d}});
        out.push_back({p + ".bias", {d}});
    };
    auto linear = [&](const std::string& p, std::size_t in, std::size_t o) {
        out.push_back({p + ".weight", {in, o}});
        out.push_back({p + ".bias", {o}});
    };
    out.push_back({"token_embedding", {static_cast<std::size_t>(config.vocab_size), d}});
    out.push_back({"position_embedding", {static_cast<std::size_t>(config.max_len), d}});
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l);
        norm(p + ".ln1");
        linear(p + ".attn.query", d, d);
        linear(p + ".attn.key", d, d);
        linear(p + ".attn.value", d, d);
        linear(p + ".attn.out", d, d);
        norm(p + ".ln2");
        linear(p + ".mlp.fc1", d, ff);
        linear(p + ".mlp.fc2", ff, d);
    }
    norm("final_norm");
    if (config.has_projection) out.push_back({"projection", {d, static_cast<std::size_t>(config.d_out)}});
    return out;
}

void write_pfw1(const EncoderWeights& w, const ByteSink& sink) {
    validate_weights(w);
    const std::string header = header_json(w.config);
    std::uint8_t prefix[8];
    std::memcpy(prefix, kMagic, 4);
    put_u32_le(static_cast<std::uint32_t>(header.size()), prefix + 4);
    sink(prefix);
    sink({reinterpret_cast<const std::uint8_t*>(header.data()), header.size()});

    std::vector<std::uint8_t> chunk;
    chunk.reserve(kChunkFloats * 4);
    visit_tensors(w, [&](const std::string&, std::span<const double> data) {
        for (double v : data) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            chunk.resize(chunk.size() + 4);
            put_u32_le(bits, chunk.data() + chunk.size() - 4);
            if (chunk.size() >= kChunkFloats * 4) {
                sink(chunk);
                chunk.clear();
            }
        }
    });
    if (!chunk.empty()) sink(chunk);
}

std::vector<std::uint8_t> serialize_weights(const EncoderWeights& w) {
    std::vector<std::uint8_t> out;
    write_pfw1(w, [&](std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); });
    return out;
}

EncoderWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not a PFW1 weight file (bad magic)");
    }
    const std::size_t header_len = get_u32_le(bytes.data() + 4);
    if (8 + header_len > bytes.size()) throw FormatError("PFW1 header length exceeds file size");
    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("PFW1 header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("config") || !header.contains("tensors")) {
        throw FormatError("PFW1 header lacks config or tensors");
    }

    EncoderWeights w;
    w.config = encoder_config_from_json(header["config"]);

    std::vector<TensorSpec> declared;
    try {
        for (const auto& t : header.at("tensors")) {
            declared.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("PFW1 tensor manifest: ") + e.what());
    }
    const auto expected = tensor_manifest(w.config);
    if (declared != expected) {
        std::string detail = "tensor manifest does not match the config";
        for (std::size_t i = 0; i < std::min(declared.size(), expected.size()); ++i) {
            if (!(declared[i] == expected[i])) {
                detail += " (first difference at '" + declared[i].name + "', expected '" +
                          expected[i].name + "')";
                break;
            }
        }
        if (declared.size() != expected.size()) {
            detail += " (" + std::to_string(declared.size()) + " tensors declared, " +
                      std::to_string(expected.size()) + " expected)";
        }
        throw FormatError(detail);
    }

    std::size_t total = 0;
    for (const auto& t : expected) total += t.element_count();
    const std::size_t data_offset = 8 + header_len;
    if (bytes.size() - data_offset != total * 4) {
        throw FormatError("PFW1 payload is " + std::to_string(bytes.size() - data_offset) +
                          " bytes, manifest requires " + std::to_string(total * 4));
    }

    allocate(w);
    const std::uint8_t* p = bytes.data() + data_offset;
    visit_tensors(w, [&](const std::string& name, std::span<double> data) {
        for (double& v : data) {
            const float f = std::bit_cast<float>(get_u32_le(p));
            p += 4;
            if (!std::isfinite(f)) throw FormatError("tensor " + name + " holds a non-finite value");
            v = static_cast<double>(f);
        }
    });
    validate_weights(w);
    return w;
}

void save_weights(const EncoderWeights& w, const std::filesystem::path& path) {
    const auto bytes = serialize_weights(w);
    write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

EncoderWeights load_weights(const std::filesystem::path& path) {
    return deserialize_weights(read_binary_file(path));
}

std::string weights_fingerprint(const EncoderWeights& w) {
    Sha256 h;
    write_pfw1(w, [&](std::span<const std::uint8_t> b) { h.update(b); });
    return h.hex_digest();
}

}  // namespace promptsteer
