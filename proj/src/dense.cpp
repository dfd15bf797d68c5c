#include "dense.h"

#include <cmath>

namespace tra {

DenseArray dense_random(uint64_t rows, uint64_t cols, uint64_t seed, bool integers) {
  DenseArray m = DenseArray::zeros(ArrayType{IndexVector{rows, cols}});
  for (size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = integers ? seeded_small_int(seed, i, -4, 4) : seeded_uniform(seed, i);
  return m;
}

DenseArray dense_matmul(const DenseArray& a, const DenseArray& b) {
  if (a.type.rank() != 2 || b.type.rank() != 2 || a.type.bound[1] != b.type.bound[0])
    throw ShapeError("dense_matmul shape mismatch");
  uint64_t m = a.type.bound[0], k = a.type.bound[1], n = b.type.bound[1];
  DenseArray out = DenseArray::zeros(ArrayType{IndexVector{m, n}});
  for (uint64_t i = 0; i < m; ++i)
    for (uint64_t kk = 0; kk < k; ++kk) {
      double x = a.values[i * k + kk];
      for (uint64_t j = 0; j < n; ++j) out.values[i * n + j] += x * b.values[kk * n + j];
    }
  return out;
}

static DenseArray zip(const DenseArray& a, const DenseArray& b, double (*fn)(double, double)) {
  if (a.type != b.type) throw ShapeError("dense elementwise shape mismatch");
  DenseArray out = a;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = fn(a.values[i], b.values[i]);
  return out;
}

DenseArray dense_add(const DenseArray& a, const DenseArray& b) {
  return zip(a, b, [](double x, double y) { return x + y; });
}
DenseArray dense_sub(const DenseArray& a, const DenseArray& b) {
  return zip(a, b, [](double x, double y) { return x - y; });
}
DenseArray dense_hadamard(const DenseArray& a, const DenseArray& b) {
  return zip(a, b, [](double x, double y) { return x * y; });
}

DenseArray dense_transpose(const DenseArray& a) {
  uint64_t m = a.type.bound[0], n = a.type.bound[1];
  DenseArray out = DenseArray::zeros(ArrayType{IndexVector{n, m}});
  for (uint64_t i = 0; i < m; ++i)
    for (uint64_t j = 0; j < n; ++j) out.values[j * m + i] = a.values[i * n + j];
  return out;
}

DenseArray dense_scale(const DenseArray& a, double factor) {
  DenseArray out = a;
  for (double& v : out.values) v *= factor;
  return out;
}

DenseArray dense_map(const DenseArray& a, double (*fn)(double)) {
  DenseArray out = a;
  for (double& v : out.values) v = fn(v);
  return out;
}

bool dense_close(const DenseArray& a, const DenseArray& b, double tol, std::string* why) {
  if (a.type != b.type) {
    if (why) *why = "shape mismatch";
    return false;
  }
  for (size_t i = 0; i < a.values.size(); ++i) {
    bool ok = tol == 0.0 ? double_bits(a.values[i]) == double_bits(b.values[i])
                         : std::abs(a.values[i] - b.values[i]) <= tol;
    if (!ok) {
      if (why)
        *why = "offset " + std::to_string(i) + ": " + std::to_string(a.values[i]) + " vs " +
               std::to_string(b.values[i]);
      return false;
    }
  }
  return true;
}

NnScanResult dense_nn_scan(const DenseArray& candidates, const DenseArray& metric,
                           const DenseArray& query) {
  uint64_t n = candidates.type.bound[0], d = candidates.type.bound[1];
  if (metric.type.bound[0] != d || metric.type.bound[1] != d || query.type.bound[1] != d)
    throw ShapeError("dense_nn_scan shape mismatch");
  NnScanResult best;
  bool first = true;
  std::vector<double> diff(d), proj(d);
  for (uint64_t i = 0; i < n; ++i) {
    for (uint64_t j = 0; j < d; ++j) diff[j] = candidates.values[i * d + j] - query.values[j];
    for (uint64_t j = 0; j < d; ++j) {
      double s = 0;
      for (uint64_t k = 0; k < d; ++k) s += diff[k] * metric.values[k * d + j];
      proj[j] = s;
    }
    double dist = 0;
    for (uint64_t j = 0; j < d; ++j) dist += proj[j] * diff[j];
    if (first || dist < best.distance) {
      best.distance = dist;
      best.index = i;
      first = false;
    }
  }
  return best;
}

DenseSgdResult dense_sgd_step(const DenseArray& x, const DenseArray& y, const DenseArray& w1,
                              const DenseArray& w2, double eta) {
  DenseArray z1 = dense_matmul(x, w1);
  DenseArray a1 = dense_map(z1, [](double v) { return v > 0 ? v : 0.0; });
  DenseArray z2 = dense_matmul(a1, w2);
  DenseArray a2 = dense_map(z2, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  DenseArray dz2 = dense_sub(a2, y);
  DenseArray gw2 = dense_matmul(dense_transpose(a1), dz2);
  DenseArray m = dense_matmul(dz2, dense_transpose(w2));
  DenseArray mask = dense_map(a1, [](double v) { return v > 0 ? 1.0 : 0.0; });
  DenseArray ga1 = dense_hadamard(m, mask);
  DenseArray gw1 = dense_matmul(dense_transpose(x), ga1);
  return DenseSgdResult{dense_sub(w1, dense_scale(gw1, eta)),
                        dense_sub(w2, dense_scale(gw2, eta))};
}

}  // namespace tra
