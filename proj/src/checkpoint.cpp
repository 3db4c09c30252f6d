#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "imch/error.hpp"
#include "imch/io.hpp"

namespace imch {

std::string config_hash(const Json& config) {
  const std::string canonical = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

constexpr char kMagic[4] = {'I', 'M', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::Io, "truncated checkpoint header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::Io, "truncated checkpoint body");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const SpectralField& u, const Json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const int m = u.resolution();
  put_u32(out, static_cast<std::uint32_t>(m));
  for (int a = -m / 2 + 1; a <= m / 2; ++a) {
    for (int b = -m / 2 + 1; b <= m / 2; ++b) {
      for (int c = -m / 2 + 1; c <= m / 2; ++c) {
        const Complex z = u.at({a, b, c});
        put_f64(out, z.real());
        put_f64(out, z.imag());
      }
    }
  }
  if (!out) fail(ErrorKind::Io, "error writing " + path.string());
  Json meta = metadata;
  meta["format"] = "IMCH";
  meta["version"] = kVersion;
  meta["M"] = m;
  write_text(path.string() + ".json", meta.dump(2) + "\n");
}

SpectralField read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorKind::Io, path.string() + " is not an IMCH checkpoint");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) fail(ErrorKind::Io, "unsupported checkpoint version " + std::to_string(version));
  const auto m = static_cast<int>(get_u32(in));
  SpectralField u(SpectralGrid::make(m));
  for (int a = -m / 2 + 1; a <= m / 2; ++a) {
    for (int b = -m / 2 + 1; b <= m / 2; ++b) {
      for (int c = -m / 2 + 1; c <= m / 2; ++c) {
        const double re = get_f64(in);
        const double im = get_f64(in);
        u.coeffs()(u.grid()->flat_index({a, b, c})) = Complex(re, im);
      }
    }
  }
  return u;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& hash,
                     const std::vector<std::string>& columns)
    : out_(path), columns_(columns.size()) {
  if (!out_) fail(ErrorKind::Io, "cannot write " + path.string());
  out_ << "# config_hash=" << hash << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  require(values.size() == columns_, "CSV row has the wrong number of columns");
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
  out_ << "\n";
}

void CsvWriter::close() {
  out_.flush();
  out_.close();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "error writing " + path.string());
}

}  // namespace imch
