#include "qfvs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qfvs {

namespace {

constexpr char kMagic[] = "FCSNA1\n";
constexpr std::size_t kMagicLen = 7;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::string shape_token(const Shape& s) {
    std::string t;
    for (std::size_t i = 0; i < s.size(); ++i) t += (i ? "x" : "") + std::to_string(s[i]);
    return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
    std::string manifest;
    std::uint64_t offset = 0;
    for (const auto& a : arrays) {
        if (a.name.find_first_of("\t\n") != std::string::npos) throw FormatError("checkpoint name contains tab/newline: " + a.name);
        if (numel(a.shape) != a.values.size()) throw FormatError("checkpoint array " + a.name + " has inconsistent shape");
        manifest += a.name + "\tf64\t" + shape_token(a.shape) + "\t" + std::to_string(offset) + "\t" +
                    std::to_string(a.values.size()) + "\n";
        offset += a.values.size() * 8;
    }
    std::string blob(kMagic, kMagicLen);
    put_u64(blob, manifest.size());
    blob += manifest;
    for (const auto& a : arrays)
        for (real v : a.values) put_u64(blob, std::bit_cast<std::uint64_t>(v));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write checkpoint " + path.string());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw FormatError("short write to checkpoint " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < kMagicLen + 8 || std::memcmp(blob.data(), kMagic, kMagicLen) != 0)
        throw FormatError(path.string() + ": not an FCSNA1 checkpoint");
    const std::uint64_t mlen = get_u64(bytes + kMagicLen);
    const std::size_t payload = kMagicLen + 8 + mlen;
    if (payload > blob.size()) throw FormatError(path.string() + ": truncated manifest");

    std::vector<NamedArray> arrays;
    std::istringstream manifest(blob.substr(kMagicLen + 8, mlen));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        std::istringstream fields(line);
        std::string name, dtype, shape_tok;
        std::uint64_t offset = 0, count = 0;
        if (!std::getline(fields, name, '\t') || !std::getline(fields, dtype, '\t') ||
            !std::getline(fields, shape_tok, '\t') || !(fields >> offset >> count))
            throw FormatError(path.string() + ": malformed manifest line " + std::to_string(lineno));
        if (dtype != "f64") throw FormatError(path.string() + ": unsupported dtype " + dtype + " for " + name);
        NamedArray a;
        a.name = name;
        std::istringstream dims(shape_tok);
        std::string d;
        while (std::getline(dims, d, 'x')) a.shape.push_back(std::stoull(d));
        if (numel(a.shape) != count) throw FormatError(path.string() + ": shape/count mismatch for " + name);
        if (payload + offset + count * 8 > blob.size()) throw FormatError(path.string() + ": truncated payload for " + name);
        a.values.resize(count);
        for (std::uint64_t i = 0; i < count; ++i)
            a.values[i] = std::bit_cast<real>(get_u64(bytes + payload + offset + 8 * i));
        arrays.push_back(std::move(a));
    }
    return arrays;
}

}  // namespace qfvs
