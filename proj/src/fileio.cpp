#include "promptsteer/fileio.hpp"

#include "promptsteer/errors.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace promptsteer {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    return {text.begin(), text.end()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

}  // namespace promptsteer
