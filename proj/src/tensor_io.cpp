#include "psr/tensor_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psr {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void write_tensor3(const std::string& path, const Tensor3& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(t.magic, 4);
  put_u32(os, t.a);
  put_u32(os, t.b);
  put_u32(os, t.c);
  put_f64(os, t.da);
  put_f64(os, t.db);
  put_f64(os, t.dc);
  for (Real v : t.values) put_f64(os, v);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor3 read_tensor3(const std::string& path, const char* expect_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Tensor3 t;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, expect_magic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  std::memcpy(t.magic, magic, 4);
  t.magic[4] = 0;
  t.a = get_u32(is);
  t.b = get_u32(is);
  t.c = get_u32(is);
  t.da = get_f64(is);
  t.db = get_f64(is);
  t.dc = get_f64(is);
  const uint64_t n = static_cast<uint64_t>(t.a) * t.b * t.c;
  if (t.a == 0 || t.b == 0 || t.c == 0 || n > (1ull << 31))
    throw std::runtime_error("implausible tensor shape in " + path);
  t.values.resize(n);
  for (uint64_t i = 0; i < n; ++i) t.values[i] = get_f64(is);
  if (!is) throw std::runtime_error("truncated tensor file: " + path);
  return t;
}

void write_matrix(const std::string& path, const Matrix& m, double dx, double dc) {
  Tensor3 t;
  t.a = static_cast<uint32_t>(m.cols);
  t.b = 1;
  t.c = static_cast<uint32_t>(m.rows);
  t.da = dx;
  t.dc = dc;
  t.values = m.v;
  write_tensor3(path, t);
}

Matrix read_matrix(const std::string& path) {
  Tensor3 t = read_tensor3(path);
  if (t.b != 1) throw std::runtime_error("expected a flat (b=1) tensor: " + path);
  Matrix m(static_cast<int>(t.c), static_cast<int>(t.a));
  m.v = std::move(t.values);
  return m;
}

std::string format_real(Real x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      if (c) os << ',';
      os << format_real(m.at(r, c));
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<std::vector<Real>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<Real> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged CSV: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty CSV: " + path);
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  return m;
}

void write_pgm16(const std::string& path, const Real* v, int width, int height) {
  const size_t n = static_cast<size_t>(width) * height;
  Real mx = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0)
      throw std::invalid_argument("write_pgm16: values must be finite and nonnegative");
    mx = std::max(mx, v[i]);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n65535\n";
  const Real scale = mx > 0 ? 65535.0 / mx : 0.0;
  for (size_t i = 0; i < n; ++i) {
    const uint16_t q = static_cast<uint16_t>(v[i] * scale + 0.5);
    // PGM stores 16-bit samples most significant byte first
    const unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                                static_cast<unsigned char>(q & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<uint16_t> read_pgm16(const std::string& path, int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int maxval = 0;
  is >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 65535)
    throw std::runtime_error("not a 16-bit P5 PGM: " + path);
  is.get();  // single whitespace after maxval
  std::vector<uint16_t> out(static_cast<size_t>(width) * height);
  for (auto& q : out) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    q = static_cast<uint16_t>((b[0] << 8) | b[1]);
  }
  if (!is) throw std::runtime_error("truncated PGM: " + path);
  return out;
}

}  // namespace psr
