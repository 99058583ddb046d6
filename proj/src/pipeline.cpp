#include "psr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "psr/tensor_io.hpp"

namespace psr {

Matrix Stack2D::row_slice(int y) const {
  if (y < 0 || y >= n_y) throw std::invalid_argument("row_slice: y out of range");
  Matrix out(n_meas, n_x);
  for (int m = 0; m < n_meas; ++m)
    std::memcpy(out.row(m), &v[(static_cast<size_t>(m) * n_y + y) * n_x],
                sizeof(Real) * n_x);
  return out;
}

void Stack2D::set_row_slice(int y, const Matrix& rows) {
  if (y < 0 || y >= n_y) throw std::invalid_argument("set_row_slice: y out of range");
  if (rows.rows != n_meas || rows.cols != n_x)
    throw std::invalid_argument("set_row_slice: shape mismatch");
  for (int m = 0; m < n_meas; ++m)
    std::memcpy(&v[(static_cast<size_t>(m) * n_y + y) * n_x], rows.row(m),
                sizeof(Real) * n_x);
}

Stack2D replicate_rows(const MeasurementStack& stack, int n_y, Real dy) {
  Stack2D out(stack.n_meas(), stack.data.cols, n_y, stack.grid.dx, dy);
  for (int m = 0; m < out.n_meas; ++m)
    for (int y = 0; y < n_y; ++y)
      std::memcpy(&out.v[(static_cast<size_t>(m) * n_y + y) * out.n_x],
                  stack.data.row(m), sizeof(Real) * out.n_x);
  return out;
}

Stack2D bin_pixels_y(const Stack2D& stack, int factor) {
  if (factor < 1) throw std::invalid_argument("bin_pixels_y: factor must be >= 1");
  if (stack.n_y % factor != 0) {
    std::ostringstream msg;
    msg << "bin_pixels_y: factor " << factor << " does not divide n_y = " << stack.n_y
        << "; valid factors:";
    for (int d = 1; d <= stack.n_y; ++d)
      if (stack.n_y % d == 0) msg << ' ' << d;
    throw std::invalid_argument(msg.str());
  }
  Stack2D out(stack.n_meas, stack.n_x, stack.n_y / factor, stack.dx, stack.dy * factor);
  const Real inv = 1.0 / factor;
  for (int m = 0; m < stack.n_meas; ++m)
    for (int yo = 0; yo < out.n_y; ++yo)
      for (int x = 0; x < stack.n_x; ++x) {
        Real acc = 0;
        for (int i = 0; i < factor; ++i) acc += stack.at(m, x, yo * factor + i);
        out.at(m, x, yo) = acc * inv;
      }
  return out;
}

namespace {

template <typename RowFn>
Stack2D reconstruct_rows(const Stack2D& stack, int threads, RowFn&& row_fn) {
  Stack2D out(stack.n_meas, stack.n_x, stack.n_y, stack.dx, stack.dy);
  auto work = [&](int y_lo, int y_hi) {
    for (int y = y_lo; y < y_hi; ++y) out.set_row_slice(y, row_fn(stack.row_slice(y)));
  };
  if (threads <= 1 || stack.n_y == 1) {
    work(0, stack.n_y);
    return out;
  }
  const int n_workers = std::min(threads, stack.n_y);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    const int lo = static_cast<int>(static_cast<long>(stack.n_y) * w / n_workers);
    const int hi = static_cast<int>(static_cast<long>(stack.n_y) * (w + 1) / n_workers);
    pool.emplace_back(work, lo, hi);
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

Stack2D reconstruct_stack(const UnfoldedNetwork& net, const Stack2D& stack, int threads) {
  net.validate();
  return reconstruct_rows(stack, threads,
                          [&](const Matrix& rows) { return infer(net, rows); });
}

Stack2D reconstruct_stack(const SolverConfig& config, const Filter& phi,
                          const Stack2D& stack, int threads) {
  config.validate();
  return reconstruct_rows(stack, threads,
                          [&](const Matrix& rows) { return solve(config, phi, rows).u; });
}

Image2D aggregate_and_normalize(const Stack2D& per_measurement) {
  Image2D img(per_measurement.n_x, per_measurement.n_y, per_measurement.dx,
              per_measurement.dy);
  for (int m = 0; m < per_measurement.n_meas; ++m)
    for (int y = 0; y < per_measurement.n_y; ++y)
      for (int x = 0; x < per_measurement.n_x; ++x)
        img.at(x, y) += per_measurement.at(m, x, y);
  Real peak = 0;
  for (Real x : img.v)
    if (x > peak) peak = x;
  if (peak <= 0)
    throw std::invalid_argument(
        "aggregate_and_normalize: no positive value to normalize by (all-zero input?)");
  for (Real& x : img.v) x /= peak;
  return img;
}

Image2D reconstruct_2d(const UnfoldedNetwork& net, const Stack2D& stack, int threads) {
  return aggregate_and_normalize(reconstruct_stack(net, stack, threads));
}

Image2D reconstruct_2d(const SolverConfig& config, const Filter& phi, const Stack2D& stack,
                       int threads) {
  return aggregate_and_normalize(reconstruct_stack(config, phi, stack, threads));
}

Real pearson(const std::vector<Real>& a, const std::vector<Real>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least two samples");
  Real ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  Real sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    const Real da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0)
    throw std::invalid_argument("pearson: correlation undefined for a constant vector");
  return sab / std::sqrt(saa * sbb);
}

RoiY roi_from_meters(Real y_min, Real y_max, int n_y, Real dy) {
  if (!(dy > 0) || n_y < 1) throw std::invalid_argument("roi_from_meters: bad grid");
  if (!(y_max > y_min)) throw std::invalid_argument("roi_from_meters: empty window");
  RoiY roi;
  roi.y0 = std::max(0, static_cast<int>(std::floor(y_min / dy)));
  roi.y1 = std::min(n_y, static_cast<int>(std::ceil(y_max / dy)));
  if (roi.y1 <= roi.y0)
    throw std::invalid_argument("roi_from_meters: window covers no rows");
  return roi;
}

QualityScore pearson_quality(const Image2D& image, const DefectScene& scene, RoiY roi) {
  if (roi.y0 < 0 || roi.y1 > image.n_y || roi.y0 >= roi.y1)
    throw std::invalid_argument("pearson_quality: roi outside image");
  if (static_cast<int>(scene.a.size()) != image.n_x)
    throw std::invalid_argument("pearson_quality: scene width mismatch");
  std::vector<Real> profile(image.n_x, 0.0);
  for (int y = roi.y0; y < roi.y1; ++y)
    for (int x = 0; x < image.n_x; ++x) profile[x] += image.at(x, y);
  const Real inv = 1.0 / (roi.y1 - roi.y0);
  for (Real& p : profile) p *= inv;
  QualityScore score;
  score.roi = roi;
  score.pearson_r = pearson(profile, scene.a);
  return score;
}

std::vector<BinningRow> binning_study(const UnfoldedNetwork& net, const Stack2D& stack,
                                      const DefectScene& scene,
                                      const std::vector<int>& factors, Real roi_y_min,
                                      Real roi_y_max, int threads) {
  std::vector<BinningRow> rows;
  rows.reserve(factors.size());
  for (int factor : factors) {
    BinningRow row;
    row.factor = factor;
    const auto t0 = std::chrono::steady_clock::now();
    const Stack2D binned = bin_pixels_y(stack, factor);
    const Image2D image = reconstruct_2d(net, binned, threads);
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    const RoiY roi = roi_from_meters(roi_y_min, roi_y_max, binned.n_y, binned.dy);
    row.pearson_r = pearson_quality(image, scene, roi).pearson_r;
    rows.push_back(row);
  }
  return rows;
}

void write_binning_csv(const std::string& path, const std::vector<BinningRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "factor,pearson_r,wall_ms\n";
  for (const auto& r : rows)
    os << r.factor << ',' << format_real(r.pearson_r) << ',' << format_real(r.wall_ms)
       << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

void write_stack(const std::string& path, const Stack2D& stack) {
  Tensor3 t;
  t.a = static_cast<uint32_t>(stack.n_x);
  t.b = static_cast<uint32_t>(stack.n_y);
  t.c = static_cast<uint32_t>(stack.n_meas);
  t.da = stack.dx;
  t.db = stack.dy;
  t.values = stack.v;  // (m * n_y + y) * n_x + x matches first-axis-fastest
  write_tensor3(path, t);
}

Stack2D read_stack(const std::string& path) {
  const Tensor3 t = read_tensor3(path);
  Stack2D out(static_cast<int>(t.c), static_cast<int>(t.a), static_cast<int>(t.b),
              t.da > 0 ? t.da : 1e-4, t.db > 0 ? t.db : 1e-4);
  for (Real x : t.values)
    if (!std::isfinite(x)) throw std::runtime_error("read_stack: non-finite value");
  out.v = t.values;
  return out;
}

void write_image_pgm(const std::string& path, const Image2D& image) {
  std::vector<Real> clamped(image.v.size());
  for (size_t i = 0; i < clamped.size(); ++i)
    clamped[i] = image.v[i] > 0 ? image.v[i] : 0.0;
  write_pgm16(path, clamped.data(), image.n_x, image.n_y);
}

void write_image_csv(const std::string& path, const Image2D& image) {
  Matrix m(image.n_y, image.n_x);
  m.v = image.v;
  write_matrix_csv(path, m);
}

Image2D read_image_csv(const std::string& path) {
  const Matrix m = read_matrix_csv(path);
  Image2D img(m.cols, m.rows);
  img.v = m.v;
  return img;
}

}  // namespace psr
