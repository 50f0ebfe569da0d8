#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptsteer {

/// Incremental SHA-256 (OpenSSL EVP underneath).
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::uint8_t> bytes);
    void update(std::string_view text);
    /// Lowercase hex; the object cannot be updated afterwards.
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// FormatError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace promptsteer
