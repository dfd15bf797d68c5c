#pragma once

#include "types.h"

namespace tra {

// Plain dense helpers used as independent oracles by `validate`/`bench`
// and by the test suites. They never touch the relational engine.

DenseArray dense_random(uint64_t rows, uint64_t cols, uint64_t seed, bool integers = false);
DenseArray dense_matmul(const DenseArray& a, const DenseArray& b);
DenseArray dense_add(const DenseArray& a, const DenseArray& b);
DenseArray dense_sub(const DenseArray& a, const DenseArray& b);
DenseArray dense_hadamard(const DenseArray& a, const DenseArray& b);
DenseArray dense_transpose(const DenseArray& a);
DenseArray dense_scale(const DenseArray& a, double factor);
DenseArray dense_map(const DenseArray& a, double (*fn)(double));

bool dense_close(const DenseArray& a, const DenseArray& b, double tol, std::string* why = nullptr);

// Brute-force metric nearest neighbor: argmin_i (x_i - q) A (x_i - q)^T,
// ties to the smallest index.
struct NnScanResult {
  double distance = 0;
  uint64_t index = 0;
};
NnScanResult dense_nn_scan(const DenseArray& candidates, const DenseArray& metric,
                           const DenseArray& query);

// One SGD step of the two-layer network: relu hidden layer, sigmoid output,
// output error a2 - Y, updates W -= eta * grad.
struct DenseSgdResult {
  DenseArray w1, w2;
};
DenseSgdResult dense_sgd_step(const DenseArray& x, const DenseArray& y, const DenseArray& w1,
                              const DenseArray& w2, double eta);

}  // namespace tra
