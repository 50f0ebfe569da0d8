#pragma once
// PFW1 weight files.
//
//   bytes 0-3   "PFW1"
//   bytes 4-7   little-endian u32 H, length of the JSON header
//   bytes 8..   H bytes of UTF-8 JSON: {"format", "config", "tensors": [{name, shape}]}
//   then        little-endian f32 tensor data, row-major, in manifest order
//
// Readers reject a wrong magic, a manifest that differs from the one implied
// by the config, trailing or missing bytes, and non-finite values.

#include "promptsteer/encoder.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace promptsteer {

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t element_count() const noexcept;
    friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

nlohmann::json config_to_json(const EncoderConfig& config);
/// FormatError on missing fields or an invalid architecture.
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

/// Tensor names and shapes in file order for a given architecture.
std::vector<TensorSpec> tensor_manifest(const EncoderConfig& config);

using ByteSink = std::function<void(std::span<const std::uint8_t>)>;

/// Streams the PFW1 encoding of `w` to `sink` in bounded chunks.
void write_pfw1(const EncoderWeights& w, const ByteSink& sink);

std::vector<std::uint8_t> serialize_weights(const EncoderWeights& w);
EncoderWeights deserialize_weights(std::span<const std::uint8_t> bytes);

/// Written to a temporary sibling and renamed into place.
void save_weights(const EncoderWeights& w, const std::filesystem::path& path);
EncoderWeights load_weights(const std::filesystem::path& path);

/// SHA-256 of the PFW1 encoding; equal for a file and the weights loaded
/// from it.
std::string weights_fingerprint(const EncoderWeights& w);

}  // namespace promptsteer
