#include "btfstream/binio.hpp"

#include <cstdio>
#include <memory>

namespace btfstream {

std::vector<uint8_t> read_file(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!f)
        throw FormatError("cannot open file: " + path);
    std::fseek(f.get(), 0, SEEK_END);
    long size = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    std::vector<uint8_t> data(static_cast<size_t>(size));
    if (size > 0 && std::fread(data.data(), 1, data.size(), f.get()) != data.size())
        throw FormatError("short read: " + path);
    return data;
}

void write_file(const std::string& path, const std::vector<uint8_t>& data) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f)
        throw FormatError("cannot open file for writing: " + path);
    if (!data.empty() && std::fwrite(data.data(), 1, data.size(), f.get()) != data.size())
        throw FormatError("short write: " + path);
}

} // namespace btfstream
