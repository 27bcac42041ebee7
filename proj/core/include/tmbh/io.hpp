#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tmbh/model.hpp"

namespace tmbh {

// Column-major float64 array with a small fixed header.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
void write_vector(const std::filesystem::path& path, const Vector& v);
Vector read_vector(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);
std::string checksum_file(const std::filesystem::path& path);  // fnv1a64 hex

// CSV with a header row, full double precision (%.17g), comma separated.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path,
              const std::vector<std::string>& header);
    ~CsvWriter();
    void row(std::span<const double> values);
    void close();

private:
    std::FILE* f_ = nullptr;
    std::size_t columns_ = 0;
};

std::string format_full(double v);  // %.17g

}  // namespace tmbh
