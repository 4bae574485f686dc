#include "linesgd/io_util.hpp"
#include "linesgd/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace linesgd {

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string fmt_double6(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s.empty()) throw FormatError("empty field where a number was expected");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    if (s.empty()) throw FormatError("empty field where an integer was expected");
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) throw FormatError("not an integer: '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    if (s.empty()) throw FormatError("empty field where an integer was expected");
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) throw FormatError("not an integer: '" + s + "'");
    return v;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex_u64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex_u64(const std::string& s) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos, 0);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("not a 64-bit hex value: '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

void write_text_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + p.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw FormatError("short write: " + p.string());
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + p.string());
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return content;
}

void write_f64le(const std::filesystem::path& p, std::span<const double> values) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + p.string());
    for (const double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
        f.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!f) throw FormatError("short write: " + p.string());
}

std::vector<double> read_f64le(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + p.string());
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    if (bytes % 8 != 0) throw FormatError("size of " + p.string() + " is not a multiple of 8 bytes");
    std::vector<double> out(bytes / 8);
    std::vector<unsigned char> raw(bytes);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw FormatError("short read: " + p.string());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(raw[8 * i + j]) << (8 * j);
        std::memcpy(&out[i], &bits, sizeof(double));
    }
    return out;
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw FormatError("cannot open: " + p.string());
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty CSV: " + p.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line, ',');
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        t.rows.push_back(split(line, ','));
    }
    return t;
}

} // namespace linesgd
