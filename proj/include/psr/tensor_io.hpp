#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psr/types.hpp"

namespace psr {

/// Flat little-endian tensor container shared by kernel, stack, and dataset
/// files: magic (4 bytes), u32 a, b, c, f64 da, db, dc, then a*b*c f64
/// values with the first axis fastest. The meaning of the axes is fixed by
/// each file kind, not by the container.
struct Tensor3 {
  char magic[5] = "PSF1";
  uint32_t a = 0, b = 0, c = 0;
  double da = 0, db = 0, dc = 0;
  std::vector<Real> values;
};

void write_tensor3(const std::string& path, const Tensor3& t);
Tensor3 read_tensor3(const std::string& path, const char* expect_magic = "PSF1");

/// Matrix persisted as (a=cols, b=1, c=rows): row-major bytes round-trip.
void write_matrix(const std::string& path, const Matrix& m, double dx = 0, double dc = 0);
Matrix read_matrix(const std::string& path);

/// CSV with one row per matrix row, full double precision (%.17g).
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

/// 16-bit binary PGM, max-scaled; constant images map to zero. Values must
/// be finite and nonnegative.
void write_pgm16(const std::string& path, const Real* v, int width, int height);
std::vector<uint16_t> read_pgm16(const std::string& path, int& width, int& height);

/// Deterministic float formatting used by every CSV writer.
std::string format_real(Real x);

}  // namespace psr
