#pragma once
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace linesgd {

// Shortest decimal form that round-trips a double ("%.17g" with trailing-digit
// trimming). Used for every CSV cell so that write->read->write is byte-stable.
std::string fmt_double(double v);
// Fixed lower precision for presentation output (SVG coordinates).
std::string fmt_double6(double v);

double parse_double(const std::string& s);
long long parse_int(const std::string& s);
std::uint64_t parse_u64(const std::string& s);

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s);

// "0x" + 16 hex digits, and its inverse.
std::string hex_u64(std::uint64_t v);
std::uint64_t parse_hex_u64(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);

void write_text_file(const std::filesystem::path& p, const std::string& content);
std::string read_text_file(const std::filesystem::path& p);

// Raw little-endian 64-bit float arrays (.f64le).
void write_f64le(const std::filesystem::path& p, std::span<const double> values);
std::vector<double> read_f64le(const std::filesystem::path& p);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& p);

} // namespace linesgd
