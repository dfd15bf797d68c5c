#pragma once

#include "compile.h"
#include "dense.h"
#include "expr.h"
#include "plan.h"
#include "runtime.h"

namespace tra {

// The three benchmark workloads as parameterized plan generators. Block
// grids follow the conventions recorded in the README: the contracted
// dimension carries one block per site, replication-based matrix multiply
// splits rows and columns s/2 ways so the two duplication factors sum to s,
// and each variant is costed on its preferred initial layout.

struct MatmulConfig {
  uint64_t rows_i = 64, inner_k = 64, cols_j = 64;  // I, K, J
  uint64_t nbi = 4, nbk = 4, nbj = 4;               // block grid
  uint64_t seed = 1;
  bool integers = false;
  bool with_data = true;  // desk scale: materialize the operands
};

enum class MatmulVariant { BMM, CMM, RMM };

struct MatmulWorkload {
  TraExprPtr expr;  // the logical multiply
  Catalog catalog;  // per-variant initial layouts
  IaPlan plan;      // the variant's optimized physical plan
};

MatmulWorkload build_matmul(const KernelRegistry& reg, const MatmulConfig& cfg,
                            MatmulVariant variant);

struct NnConfig {
  uint64_t points_n = 64, dim_d = 16;  // N, D
  uint64_t nbi = 4, nbd = 4;
  uint64_t seed = 2;
  bool with_data = true;
};

enum class NnVariant { Horizontal, Vertical };

struct NnWorkload {
  Catalog catalog;
  IaPlan plan;  // root "argmin": one tuple, array [distance, global index]
};

NnWorkload build_nn(const KernelRegistry& reg, const NnConfig& cfg, NnVariant variant);

struct FfnnConfig {
  uint64_t batch_n = 32, input_d = 16, hidden_h = 8, labels_l = 4;  // N, D, H, L
  uint64_t nbn = 2, nbh = 2;
  double eta = 0.1;
  uint64_t seed = 3;
  bool with_data = true;
};

enum class FfnnVariant { DP, MP };

struct FfnnWorkload {
  Catalog catalog;
  IaPlan plan;  // roots "W1", "W2": the updated weights
};

FfnnWorkload build_ffnn(const KernelRegistry& reg, const FfnnConfig& cfg, FfnnVariant variant);

// Render a count the way the predicted-cost tables print them: two
// significant digits, e.g. 16000000000 -> "1.6e10".
std::string format_sig2(uint64_t v);

struct BenchResult {
  std::string text;
  std::string csv;
  bool ok = true;
};

// Presets: "table3" | "desk" for matmul, "table5" | "desk" for nn,
// "table6" | "desk" for ffnn. Table presets cost full-scale shapes
// symbolically; desk presets execute and check against the dense oracles
// and the cost model.
BenchResult bench_matmul(const KernelRegistry& reg, const std::string& preset, uint32_t sites);
BenchResult bench_nn(const KernelRegistry& reg, const std::string& preset, uint32_t sites);
BenchResult bench_ffnn(const KernelRegistry& reg, const std::string& preset, uint32_t sites);
BenchResult bench(const KernelRegistry& reg, const std::string& workload,
                  const std::string& preset, uint32_t sites);

}  // namespace tra
