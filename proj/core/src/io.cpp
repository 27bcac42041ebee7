#include "tmbh/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tmbh/timegrid.hpp"

namespace tmbh {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'B', 'H'};
constexpr std::uint32_t kVersion = 1;

struct Header {
    char magic[4];
    std::uint32_t version;
    std::uint64_t rows;
    std::uint64_t cols;
};

void write_array(const std::filesystem::path& path, const double* data,
                 std::uint64_t rows, std::uint64_t cols) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_array: cannot open " + path.string());
    Header h{};
    std::memcpy(h.magic, kMagic, 4);
    h.version = kVersion;
    h.rows = rows;
    h.cols = cols;
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    f.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!f) throw std::runtime_error("write_array: short write to " + path.string());
}

Header read_header(std::ifstream& f, const std::filesystem::path& path) {
    Header h{};
    f.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!f || std::memcmp(h.magic, kMagic, 4) != 0 || h.version != kVersion)
        throw std::runtime_error("read_array: bad header in " + path.string());
    return h;
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    write_array(path, m.data(), static_cast<std::uint64_t>(m.rows()),
                static_cast<std::uint64_t>(m.cols()));
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_matrix: cannot open " + path.string());
    const Header h = read_header(f, path);
    Matrix m(static_cast<Eigen::Index>(h.rows), static_cast<Eigen::Index>(h.cols));
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(h.rows * h.cols * sizeof(double)));
    if (!f) throw std::runtime_error("read_matrix: short read from " + path.string());
    return m;
}

void write_vector(const std::filesystem::path& path, const Vector& v) {
    write_array(path, v.data(), static_cast<std::uint64_t>(v.size()), 1);
}

Vector read_vector(const std::filesystem::path& path) {
    Matrix m = read_matrix(path);
    if (m.cols() != 1) throw std::runtime_error("read_vector: not a vector: " + path.string());
    return m.col(0);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

std::string checksum_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checksum_file: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : columns_(header.size()) {
    f_ = std::fopen(path.string().c_str(), "wb");
    if (!f_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        std::fprintf(f_, "%s%s", header[i].c_str(), i + 1 < header.size() ? "," : "\n");
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::row(std::span<const double> values) {
    if (values.size() != columns_)
        throw std::invalid_argument("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        std::fprintf(f_, "%.17g%s", values[i], i + 1 < values.size() ? "," : "\n");
}

void CsvWriter::close() {
    if (f_) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

// interpolation helpers declared in timegrid.hpp

double interp_linear(std::span<const double> t, std::span<const double> y,
                     double query) {
    if (t.size() != y.size() || t.empty())
        throw std::invalid_argument("interp_linear: bad series");
    if (query <= t.front()) return y.front();
    if (query >= t.back()) return y.back();
    const auto it = std::upper_bound(t.begin(), t.end(), query);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double f = (query - t[i - 1]) / (t[i] - t[i - 1]);
    return y[i - 1] + f * (y[i] - y[i - 1]);
}

double interp_loglog(std::span<const double> t, std::span<const double> y,
                     double query) {
    if (t.size() != y.size() || t.empty())
        throw std::invalid_argument("interp_loglog: bad series");
    if (query <= t.front()) return y.front();
    if (query >= t.back()) return y.back();
    const auto it = std::upper_bound(t.begin(), t.end(), query);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double ta = t[i - 1], tb = t[i], ya = y[i - 1], yb = y[i];
    if (ta > 0.0 && ya > 0.0 && yb > 0.0) {
        const double f = (std::log(query) - std::log(ta)) / (std::log(tb) - std::log(ta));
        return std::exp(std::log(ya) + f * (std::log(yb) - std::log(ya)));
    }
    const double f = (query - ta) / (tb - ta);
    return ya + f * (yb - ya);
}

}  // namespace tmbh
