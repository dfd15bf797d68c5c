#include "workloads.h"

#include <sstream>

namespace tra {

namespace {

using Kind = IaNode::Kind;

size_t add_source(IaPlan& p, const std::string& name) {
  IaNode n;
  n.kind = Kind::Source;
  n.source = name;
  return p.add(std::move(n));
}
size_t add_bcast(IaPlan& p, size_t c) {
  IaNode n;
  n.kind = Kind::Bcast;
  n.children = {c};
  return p.add(std::move(n));
}
size_t add_shuf(IaPlan& p, std::vector<size_t> dims, size_t c) {
  IaNode n;
  n.kind = Kind::Shuf;
  n.dims = std::move(dims);
  n.children = {c};
  return p.add(std::move(n));
}
size_t add_join(IaPlan& p, std::vector<size_t> kl, std::vector<size_t> kr, KernelRef proj,
                size_t l, size_t r) {
  IaNode n;
  n.kind = Kind::Join;
  n.join = JoinSpec{std::move(kl), std::move(kr), std::move(proj), {}, {}, std::nullopt};
  n.children = {l, r};
  return p.add(std::move(n));
}
size_t add_agg(IaPlan& p, std::vector<size_t> gb, KernelRef agg, size_t c) {
  IaNode n;
  n.kind = Kind::Agg;
  n.agg = AggSpec{std::move(gb), std::move(agg), {}, {}};
  n.children = {c};
  return p.add(std::move(n));
}
size_t add_map(IaPlan& p, KeySpec key, ArrSpec arr, size_t c) {
  IaNode n;
  n.kind = Kind::Map;
  n.map_key = std::move(key);
  n.map_arr = std::move(arr);
  n.children = {c};
  return p.add(std::move(n));
}
size_t add_transform(IaPlan& p, const std::string& kernel, size_t c) {
  return add_map(p, KeySpec::identity(), ArrSpec::of_kernel({kernel, {}}), c);
}
size_t add_transpose(IaPlan& p, size_t c) {
  KeyFunc swap{2, 2, {{KeyExpr::ref(1), KeyExpr::ref(0)}}};
  return add_map(p, KeySpec::ast(std::move(swap)), ArrSpec::of_kernel({"transpose", {}}), c);
}

KernelRef kref(const std::string& name) { return KernelRef{name, {}}; }

void add_blocked_source(Catalog& cat, const std::string& name, const DenseArray* dense,
                        uint64_t rows, uint64_t cols, uint64_t nbr, uint64_t nbc,
                        PartitionSpec layout) {
  if (rows % nbr || cols % nbc)
    throw ShapeError(name + ": " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " not divisible into a " + std::to_string(nbr) + "x" + std::to_string(nbc) +
                     " grid");
  if (dense) {
    cat.add(name, blockify(*dense, rows / nbr, cols / nbc), layout);
  } else {
    cat.add_symbolic(name, 2, ArrayType{IndexVector{rows / nbr, cols / nbc}},
                     IndexVector{nbr, nbc}, layout);
  }
}

}  // namespace

MatmulWorkload build_matmul(const KernelRegistry& reg, const MatmulConfig& cfg,
                            MatmulVariant variant) {
  (void)reg;
  MatmulWorkload w;
  w.expr = TraExpr::aggregate(
      {0, 2}, kref("matAdd"),
      TraExpr::join({1}, {0}, kref("matMul"), TraExpr::source_of("X"), TraExpr::source_of("Y")));

  std::optional<DenseArray> x, y;
  if (cfg.with_data) {
    x = dense_random(cfg.rows_i, cfg.inner_k, cfg.seed, cfg.integers);
    y = dense_random(cfg.inner_k, cfg.cols_j, cfg.seed + 1, cfg.integers);
  }
  PartitionSpec x_layout = variant == MatmulVariant::CMM ? PartitionSpec::by_dims({1})
                                                         : PartitionSpec::by_dims({0});
  PartitionSpec y_layout = variant == MatmulVariant::CMM ? PartitionSpec::by_dims({0})
                                                         : PartitionSpec::by_dims({1});
  add_blocked_source(w.catalog, "X", x ? &*x : nullptr, cfg.rows_i, cfg.inner_k, cfg.nbi,
                     cfg.nbk, x_layout);
  add_blocked_source(w.catalog, "Y", y ? &*y : nullptr, cfg.inner_k, cfg.cols_j, cfg.nbk,
                     cfg.nbj, y_layout);

  IaPlan& p = w.plan;
  size_t sx = add_source(p, "X");
  size_t sy = add_source(p, "Y");
  size_t root;
  switch (variant) {
    case MatmulVariant::BMM: {
      size_t b = add_bcast(p, sx);
      size_t j = add_join(p, {1}, {0}, kref("matMul"), b, sy);
      root = add_agg(p, {0, 2}, kref("matAdd"), j);
      break;
    }
    case MatmulVariant::CMM: {
      size_t j = add_join(p, {1}, {0}, kref("matMul"), sx, sy);
      size_t s = add_shuf(p, {0, 2}, j);
      root = add_agg(p, {0, 2}, kref("matAdd"), s);
      break;
    }
    case MatmulVariant::RMM: {
      uint64_t x_dups = cfg.nbj, y_dups = cfg.nbi;
      size_t mx = add_map(p, KeySpec::insert_dim(2, x_dups),
                          ArrSpec::of_kernel({"duplicate", {double(x_dups)}}), sx);
      size_t shx = add_shuf(p, {0, 2}, mx);
      size_t my = add_map(p, KeySpec::insert_dim(0, y_dups),
                          ArrSpec::of_kernel({"duplicate", {double(y_dups)}}), sy);
      size_t shy = add_shuf(p, {0, 2}, my);
      size_t j = add_join(p, {0, 1, 2}, {0, 1, 2}, kref("matMul"), shx, shy);
      root = add_agg(p, {0, 2}, kref("matAdd"), j);
      break;
    }
    default:
      throw ValidationError("bad matmul variant");
  }
  p.roots.push_back({root, "product"});
  return w;
}

NnWorkload build_nn(const KernelRegistry& reg, const NnConfig& cfg, NnVariant variant) {
  (void)reg;
  NnWorkload w;
  std::optional<DenseArray> x, a, q;
  if (cfg.with_data) {
    x = dense_random(cfg.points_n, cfg.dim_d, cfg.seed, false);
    a = dense_random(cfg.dim_d, cfg.dim_d, cfg.seed + 1, false);
    q = dense_random(1, cfg.dim_d, cfg.seed + 2, false);
  }
  bool horizontal = variant == NnVariant::Horizontal;
  add_blocked_source(w.catalog, "X", x ? &*x : nullptr, cfg.points_n, cfg.dim_d, cfg.nbi,
                     cfg.nbd, horizontal ? PartitionSpec::by_dims({0}) : PartitionSpec::by_dims({1}));
  add_blocked_source(w.catalog, "A", a ? &*a : nullptr, cfg.dim_d, cfg.dim_d, cfg.nbd, cfg.nbd,
                     PartitionSpec::by_dims({0}));
  add_blocked_source(w.catalog, "q", q ? &*q : nullptr, 1, cfg.dim_d, 1, cfg.nbd,
                     PartitionSpec::by_dims({0}));

  IaPlan& p = w.plan;
  KeyFunc drop_last{3, 2, {{KeyExpr::ref(0), KeyExpr::ref(1)}}};

  size_t sq = add_source(p, "q");
  size_t sa = add_source(p, "A");
  size_t sx = add_source(p, "X");
  size_t qb = add_bcast(p, sq);

  if (horizontal) {
    size_t ab = add_bcast(p, sa);
    size_t diff3 = add_join(p, {1}, {1}, kref("matVecSub"), sx, qb);
    size_t diff = add_map(p, KeySpec::ast(drop_last), ArrSpec::identity(), diff3);
    size_t projp = add_join(p, {1}, {0}, kref("matMul"), diff, ab);
    size_t proj = add_agg(p, {0, 2}, kref("matAdd"), projp);
    size_t prod = add_join(p, {0, 1}, {0, 1}, kref("elemMul"), proj, diff);
    size_t summed = add_agg(p, {0}, kref("matAdd"), prod);
    size_t dist = add_transform(p, "rowSum", summed);
    size_t gathered = add_shuf(p, {}, dist);
    size_t argmin = add_agg(p, {}, kref("minIndex"), gathered);
    p.roots.push_back({argmin, "argmin"});
  } else {
    size_t diff3 = add_join(p, {1}, {1}, kref("matVecSub"), sx, qb);
    size_t diff = add_map(p, KeySpec::ast(drop_last), ArrSpec::identity(), diff3);
    size_t projp = add_join(p, {1}, {0}, kref("matMul"), diff, sa);
    size_t moved = add_shuf(p, {2}, projp);
    size_t proj = add_agg(p, {0, 2}, kref("matAdd"), moved);
    size_t prod = add_join(p, {0, 1}, {0, 1}, kref("elemMul"), proj, diff);
    size_t vecs = add_transform(p, "rowSum", prod);
    size_t byrow = add_shuf(p, {0}, vecs);
    size_t dist = add_agg(p, {0}, kref("matAdd"), byrow);
    size_t gathered = add_shuf(p, {}, dist);
    size_t argmin = add_agg(p, {}, kref("minIndex"), gathered);
    p.roots.push_back({argmin, "argmin"});
  }
  return w;
}

FfnnWorkload build_ffnn(const KernelRegistry& reg, const FfnnConfig& cfg, FfnnVariant variant) {
  (void)reg;
  FfnnWorkload w;
  std::optional<DenseArray> x, y, w1, w2;
  if (cfg.with_data) {
    x = dense_random(cfg.batch_n, cfg.input_d, cfg.seed, false);
    y = dense_random(cfg.batch_n, cfg.labels_l, cfg.seed + 1, false);
    w1 = dense_random(cfg.input_d, cfg.hidden_h, cfg.seed + 2, false);
    w2 = dense_random(cfg.hidden_h, cfg.labels_l, cfg.seed + 3, false);
  }
  bool dp = variant == FfnnVariant::DP;
  // data parallel: batch rows spread, weights replicated; model parallel:
  // the hidden dimension of the weights spread, batch replicated
  uint64_t nbn = dp ? cfg.nbn : 1;
  uint64_t nbh = dp ? 1 : cfg.nbh;
  add_blocked_source(w.catalog, "X", x ? &*x : nullptr, cfg.batch_n, cfg.input_d, nbn, 1,
                     dp ? PartitionSpec::by_dims({0}) : PartitionSpec::all());
  add_blocked_source(w.catalog, "Y", y ? &*y : nullptr, cfg.batch_n, cfg.labels_l, nbn, 1,
                     dp ? PartitionSpec::by_dims({0}) : PartitionSpec::all());
  add_blocked_source(w.catalog, "W1", w1 ? &*w1 : nullptr, cfg.input_d, cfg.hidden_h, 1, nbh,
                     dp ? PartitionSpec::all() : PartitionSpec::by_dims({1}));
  add_blocked_source(w.catalog, "W2", w2 ? &*w2 : nullptr, cfg.hidden_h, cfg.labels_l, nbh, 1,
                     PartitionSpec::all());

  IaPlan& p = w.plan;
  size_t sx = add_source(p, "X");
  size_t sy = add_source(p, "Y");
  size_t sw1 = add_source(p, "W1");
  size_t sw2 = add_source(p, "W2");

  // forward
  size_t z1p = add_join(p, {1}, {0}, kref("matMul"), sx, sw1);
  size_t z1 = add_agg(p, {0, 2}, kref("matAdd"), z1p);
  size_t a1 = add_transform(p, "relu", z1);
  size_t a1_everywhere = dp ? a1 : add_bcast(p, a1);
  size_t z2p = add_join(p, {1}, {0}, kref("matMul"), a1_everywhere, sw2);
  size_t z2 = add_agg(p, {0, 2}, kref("matAdd"), z2p);
  size_t a2 = add_transform(p, "sigmoid", z2);
  // backward
  size_t dz2 = add_join(p, {0, 1}, {0, 1}, kref("matSub"), a2, sy);
  size_t a1t = add_transpose(p, a1_everywhere);
  size_t gw2p = add_join(p, {1}, {0}, kref("matMul"), a1t, dz2);
  size_t gw2pp = dp ? add_shuf(p, {0, 2}, gw2p) : gw2p;
  size_t gw2 = add_agg(p, {0, 2}, kref("matAdd"), gw2pp);
  size_t w2t = add_transpose(p, sw2);
  size_t mp = add_join(p, {1}, {0}, kref("matMul"), dz2, w2t);
  size_t m = add_agg(p, {0, 2}, kref("matAdd"), mp);
  size_t mask = add_transform(p, "reluGrad", a1);
  size_t ga1 = add_join(p, {0, 1}, {0, 1}, kref("elemMul"), m, mask);
  size_t ga1_everywhere = dp ? ga1 : add_bcast(p, ga1);
  size_t xt = add_transpose(p, sx);
  size_t gw1p = add_join(p, {1}, {0}, kref("matMul"), xt, ga1_everywhere);
  size_t gw1pp = dp ? add_shuf(p, {0, 2}, gw1p) : gw1p;
  size_t gw1 = add_agg(p, {0, 2}, kref("matAdd"), gw1pp);
  // update
  size_t sg1 = add_map(p, KeySpec::identity(), ArrSpec::of_kernel({"scalarScale", {cfg.eta}}),
                       gw1);
  size_t w1n = add_join(p, {0, 1}, {0, 1}, kref("matSub"), sw1, sg1);
  size_t sg2 = add_map(p, KeySpec::identity(), ArrSpec::of_kernel({"scalarScale", {cfg.eta}}),
                       gw2);
  size_t w2n = add_join(p, {0, 1}, {0, 1}, kref("matSub"), sw2, sg2);
  p.roots.push_back({w1n, "W1"});
  p.roots.push_back({w2n, "W2"});
  return w;
}

std::string format_sig2(uint64_t v) {
  if (v == 0) return "0";
  int digits = 0;
  for (uint64_t t = v; t; t /= 10) ++digits;
  if (digits == 1) return std::to_string(v) + ".0e0";
  uint64_t divisor = 1;
  for (int i = 0; i < digits - 2; ++i) divisor *= 10;
  uint64_t m2 = (v + divisor / 2) / divisor;
  if (m2 == 100) {
    m2 = 10;
    ++digits;
  }
  return std::to_string(m2 / 10) + "." + std::to_string(m2 % 10) + "e" +
         std::to_string(digits - 1);
}

namespace {

struct TableRow {
  std::string label;
  std::vector<std::pair<std::string, uint64_t>> cells;  // variant -> cost
};

std::string render_table(const std::string& title,
                         const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << title << "\n";
  for (const auto& row : rows) {
    os << "  " << row.label << ":";
    for (const auto& [name, cost] : row.cells)
      os << "  " << name << "=" << format_sig2(cost) << " (" << cost << ")";
    os << "\n";
  }
  return os.str();
}

uint64_t cost_total(const KernelRegistry& reg, const IaPlan& plan, const Catalog& cat,
                    uint32_t sites) {
  return cost_plan(reg, plan, cat, sites).total_transfer;
}

// desk-scale helper: run, check prediction vs metering node by node, return
// trace total
struct DeskRun {
  ExecResult result;
  uint64_t predicted = 0;
  bool metering_ok = true;
};

DeskRun desk_run(const KernelRegistry& reg, const IaPlan& plan, const Catalog& cat,
                 uint32_t sites) {
  DeskRun out;
  CostReport cost = cost_plan(reg, plan, cat, sites);
  out.predicted = cost.total_transfer;
  ExecOptions opts;
  opts.sites = sites;
  out.result = execute_plan(reg, plan, cat, opts);
  for (size_t i = 0; i < plan.nodes.size(); ++i)
    if (cost.nodes[i].transfer_floats != out.result.trace.rows[i].transfer_floats)
      out.metering_ok = false;
  return out;
}

BenchResult bench_matmul_table3(const KernelRegistry& reg, uint32_t sites) {
  struct Shape {
    const char* name;
    uint64_t I, K, J;
    uint64_t expect_bmm, expect_cmm, expect_rmm;
  };
  const Shape shapes[] = {
      {"two general matrices", 40000, 40000, 40000, 16000000000ull, 16000000000ull,
       16000000000ull},
      {"a common large dim", 10000, 640000, 10000, 64000000000ull, 1000000000ull,
       64000000000ull},
      {"two large dims", 80000, 10000, 80000, 8000000000ull, 64000000000ull, 8000000000ull},
  };
  BenchResult out;
  std::ostringstream csv;
  csv << "shape,variant,cost,cost_sig2,expected\n";
  std::vector<TableRow> rows;
  for (const Shape& sh : shapes) {
    MatmulConfig cfg;
    cfg.rows_i = sh.I;
    cfg.inner_k = sh.K;
    cfg.cols_j = sh.J;
    cfg.nbi = cfg.nbj = sites / 2;
    cfg.nbk = sites;
    cfg.with_data = false;
    TableRow row{sh.name, {}};
    const std::pair<MatmulVariant, uint64_t> variants[] = {
        {MatmulVariant::BMM, sh.expect_bmm},
        {MatmulVariant::CMM, sh.expect_cmm},
        {MatmulVariant::RMM, sh.expect_rmm},
    };
    for (auto& [variant, expect] : variants) {
      MatmulWorkload w = build_matmul(reg, cfg, variant);
      uint64_t c = cost_total(reg, w.plan, w.catalog, sites);
      const char* vname = variant == MatmulVariant::BMM ? "BMM"
                        : variant == MatmulVariant::CMM ? "CMM"
                                                        : "RMM";
      row.cells.push_back({vname, c});
      csv << sh.name << "," << vname << "," << c << "," << format_sig2(c) << "," << expect
          << "\n";
      if (c != expect) out.ok = false;
    }
    rows.push_back(std::move(row));
  }
  out.text = render_table("matmul predicted transfer (floats), sites=" + std::to_string(sites),
                          rows);
  out.csv = csv.str();
  return out;
}

BenchResult bench_matmul_desk(const KernelRegistry& reg, uint32_t sites) {
  BenchResult out;
  std::ostringstream text, csv;
  csv << "variant,predicted,measured,oracle\n";
  MatmulConfig cfg;  // 64^3, 4x4x4 grid
  DenseArray xd = dense_random(cfg.rows_i, cfg.inner_k, cfg.seed, false);
  DenseArray yd = dense_random(cfg.inner_k, cfg.cols_j, cfg.seed + 1, false);
  DenseArray expect = dense_matmul(xd, yd);
  text << "matmul desk run (" << cfg.rows_i << "x" << cfg.inner_k << "x" << cfg.cols_j
       << "), sites=" << sites << "\n";
  for (MatmulVariant v : {MatmulVariant::BMM, MatmulVariant::CMM, MatmulVariant::RMM}) {
    MatmulWorkload w = build_matmul(reg, cfg, v);
    DeskRun run = desk_run(reg, w.plan, w.catalog, sites);
    DenseArray got = unblockify(run.result.root("product").project());
    std::string why;
    bool oracle_ok = dense_close(got, expect, 1e-9, &why);
    const char* vname = v == MatmulVariant::BMM ? "BMM" : v == MatmulVariant::CMM ? "CMM" : "RMM";
    text << "  " << vname << ": transfer=" << run.result.trace.total_transfer
         << " predicted=" << run.predicted << (run.metering_ok ? "" : "  METERING MISMATCH")
         << (oracle_ok ? "  oracle ok" : "  ORACLE FAIL: " + why) << "\n";
    csv << vname << "," << run.predicted << "," << run.result.trace.total_transfer << ","
        << (oracle_ok ? "ok" : "fail") << "\n";
    if (!oracle_ok || !run.metering_ok) out.ok = false;
  }
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

BenchResult bench_nn_table5(const KernelRegistry& reg, uint32_t sites) {
  BenchResult out;
  std::ostringstream csv;
  csv << "dataset,variant,cost,cost_sig2\n";
  struct Shape {
    const char* name;
    uint64_t N, D;
  };
  const Shape shapes[] = {{"many rows (N=1.5e5, D=6e3)", 150000, 6000},
                          {"large D (N=6e3, D=1e5)", 6000, 100000}};
  std::vector<TableRow> rows;
  uint64_t h_many = 0, v_many = 0, h_large = 0, v_large = 0;
  for (int si = 0; si < 2; ++si) {
    NnConfig cfg;
    cfg.points_n = shapes[si].N;
    cfg.dim_d = shapes[si].D;
    cfg.nbi = sites;
    cfg.nbd = sites;
    cfg.with_data = false;
    TableRow row{shapes[si].name, {}};
    for (NnVariant v : {NnVariant::Horizontal, NnVariant::Vertical}) {
      NnWorkload w = build_nn(reg, cfg, v);
      uint64_t c = cost_total(reg, w.plan, w.catalog, sites);
      const char* vname = v == NnVariant::Horizontal ? "horizontal" : "vertical";
      row.cells.push_back({vname, c});
      csv << shapes[si].name << "," << vname << "," << c << "," << format_sig2(c) << "\n";
      if (si == 0 && v == NnVariant::Horizontal) h_many = c;
      if (si == 0 && v == NnVariant::Vertical) v_many = c;
      if (si == 1 && v == NnVariant::Horizontal) h_large = c;
      if (si == 1 && v == NnVariant::Vertical) v_large = c;
    }
    rows.push_back(std::move(row));
  }
  out.ok = h_many < v_many && v_large < h_large && format_sig2(h_many) == "2.9e8" &&
           format_sig2(v_large) == "4.8e9";
  out.text = render_table(
      "nearest neighbor predicted transfer (floats), sites=" + std::to_string(sites), rows);
  out.csv = csv.str();
  return out;
}

BenchResult bench_nn_desk(const KernelRegistry& reg, uint32_t sites) {
  BenchResult out;
  std::ostringstream text, csv;
  csv << "variant,predicted,measured,index,oracle\n";
  NnConfig cfg;  // N=64, D=16
  DenseArray xd = dense_random(cfg.points_n, cfg.dim_d, cfg.seed, false);
  DenseArray ad = dense_random(cfg.dim_d, cfg.dim_d, cfg.seed + 1, false);
  DenseArray qd = dense_random(1, cfg.dim_d, cfg.seed + 2, false);
  NnScanResult expect = dense_nn_scan(xd, ad, qd);
  text << "nearest neighbor desk run (N=" << cfg.points_n << ", D=" << cfg.dim_d
       << "), sites=" << sites << "\n";
  for (NnVariant v : {NnVariant::Horizontal, NnVariant::Vertical}) {
    NnWorkload w = build_nn(reg, cfg, v);
    DeskRun run = desk_run(reg, w.plan, w.catalog, sites);
    TensorRelation res = run.result.root("argmin").project();
    if (res.size() != 1) throw ExecutionError("argmin should produce one tuple");
    const DenseArray& arr = res.tuples()[0].array;
    uint64_t index = static_cast<uint64_t>(arr.values[1]);
    bool oracle_ok =
        index == expect.index && std::abs(arr.values[0] - expect.distance) <= 1e-9;
    const char* vname = v == NnVariant::Horizontal ? "horizontal" : "vertical";
    text << "  " << vname << ": transfer=" << run.result.trace.total_transfer
         << " predicted=" << run.predicted << " argmin=" << index
         << (run.metering_ok ? "" : "  METERING MISMATCH")
         << (oracle_ok ? "  oracle ok" : "  ORACLE FAIL") << "\n";
    csv << vname << "," << run.predicted << "," << run.result.trace.total_transfer << ","
        << index << "," << (oracle_ok ? "ok" : "fail") << "\n";
    if (!oracle_ok || !run.metering_ok) out.ok = false;
  }
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

BenchResult bench_ffnn_table6(const KernelRegistry& reg, uint32_t sites) {
  BenchResult out;
  std::ostringstream csv;
  csv << "dataset,variant,cost,cost_sig2,expected_mp\n";
  struct Shape {
    std::string name;
    uint64_t N, D, H, L;
  };
  std::vector<Shape> shapes;
  for (uint64_t h : {100000ull, 150000ull, 200000ull})
    shapes.push_back({"google speech " + std::to_string(h / 1000) + "k", 10000, 1600, h, 10});
  for (uint64_t h : {1000ull, 3000ull, 5000ull, 7000ull})
    shapes.push_back({"amazon xml " + std::to_string(h / 1000) + "k", 1000, 597540, h, 14588});
  std::vector<TableRow> rows;
  for (const Shape& sh : shapes) {
    FfnnConfig cfg;
    cfg.batch_n = sh.N;
    cfg.input_d = sh.D;
    cfg.hidden_h = sh.H;
    cfg.labels_l = sh.L;
    cfg.nbn = sites;
    cfg.nbh = sites;
    cfg.with_data = false;
    uint64_t dp_cost = 0, mp_cost = 0;
    for (FfnnVariant v : {FfnnVariant::DP, FfnnVariant::MP}) {
      FfnnWorkload w = build_ffnn(reg, cfg, v);
      uint64_t c = cost_total(reg, w.plan, w.catalog, sites);
      (v == FfnnVariant::DP ? dp_cost : mp_cost) = c;
    }
    uint64_t expect_mp = 2ull * sites * sh.N * sh.H;
    bool google = sh.name.rfind("google", 0) == 0;
    bool order_ok = google ? dp_cost < mp_cost : mp_cost < dp_cost;
    if (mp_cost != expect_mp || !order_ok) out.ok = false;
    rows.push_back({sh.name, {{"TRA-DP", dp_cost}, {"TRA-MP", mp_cost}}});
    csv << sh.name << ",TRA-DP," << dp_cost << "," << format_sig2(dp_cost) << ",\n";
    csv << sh.name << ",TRA-MP," << mp_cost << "," << format_sig2(mp_cost) << "," << expect_mp
        << "\n";
  }
  out.text =
      render_table("ffnn predicted transfer (floats), sites=" + std::to_string(sites), rows);
  out.csv = csv.str();
  return out;
}

BenchResult bench_ffnn_desk(const KernelRegistry& reg, uint32_t sites) {
  BenchResult out;
  std::ostringstream text, csv;
  csv << "variant,predicted,measured,oracle\n";
  FfnnConfig cfg;  // N=32, D=16, H=8, L=4
  cfg.nbn = 4;
  cfg.nbh = 4;
  DenseArray xd = dense_random(cfg.batch_n, cfg.input_d, cfg.seed, false);
  DenseArray yd = dense_random(cfg.batch_n, cfg.labels_l, cfg.seed + 1, false);
  DenseArray w1d = dense_random(cfg.input_d, cfg.hidden_h, cfg.seed + 2, false);
  DenseArray w2d = dense_random(cfg.hidden_h, cfg.labels_l, cfg.seed + 3, false);
  DenseSgdResult expect = dense_sgd_step(xd, yd, w1d, w2d, cfg.eta);
  text << "ffnn desk run (N=" << cfg.batch_n << ", D=" << cfg.input_d << ", H=" << cfg.hidden_h
       << ", L=" << cfg.labels_l << "), sites=" << sites << "\n";
  for (FfnnVariant v : {FfnnVariant::DP, FfnnVariant::MP}) {
    FfnnWorkload w = build_ffnn(reg, cfg, v);
    DeskRun run = desk_run(reg, w.plan, w.catalog, sites);
    DenseArray got_w1 = unblockify(run.result.root("W1").project());
    DenseArray got_w2 = unblockify(run.result.root("W2").project());
    std::string why;
    bool oracle_ok = dense_close(got_w1, expect.w1, 1e-9, &why) &&
                     dense_close(got_w2, expect.w2, 1e-9, &why);
    const char* vname = v == FfnnVariant::DP ? "TRA-DP" : "TRA-MP";
    text << "  " << vname << ": transfer=" << run.result.trace.total_transfer
         << " predicted=" << run.predicted << (run.metering_ok ? "" : "  METERING MISMATCH")
         << (oracle_ok ? "  oracle ok" : "  ORACLE FAIL: " + why) << "\n";
    csv << vname << "," << run.predicted << "," << run.result.trace.total_transfer << ","
        << (oracle_ok ? "ok" : "fail") << "\n";
    if (!oracle_ok || !run.metering_ok) out.ok = false;
  }
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

}  // namespace

BenchResult bench_matmul(const KernelRegistry& reg, const std::string& preset, uint32_t sites) {
  if (preset == "table3") return bench_matmul_table3(reg, sites);
  if (preset == "desk") return bench_matmul_desk(reg, sites);
  throw ValidationError("unknown matmul preset: " + preset + " (table3 | desk)");
}

BenchResult bench_nn(const KernelRegistry& reg, const std::string& preset, uint32_t sites) {
  if (preset == "table5") return bench_nn_table5(reg, sites);
  if (preset == "desk") return bench_nn_desk(reg, sites);
  throw ValidationError("unknown nn preset: " + preset + " (table5 | desk)");
}

BenchResult bench_ffnn(const KernelRegistry& reg, const std::string& preset, uint32_t sites) {
  if (preset == "table6") return bench_ffnn_table6(reg, sites);
  if (preset == "desk") return bench_ffnn_desk(reg, sites);
  throw ValidationError("unknown ffnn preset: " + preset + " (table6 | desk)");
}

BenchResult bench(const KernelRegistry& reg, const std::string& workload,
                  const std::string& preset, uint32_t sites) {
  if (workload == "matmul") return bench_matmul(reg, preset, sites);
  if (workload == "nn") return bench_nn(reg, preset, sites);
  if (workload == "ffnn") return bench_ffnn(reg, preset, sites);
  throw ValidationError("unknown workload: " + workload + " (matmul | nn | ffnn)");
}

}  // namespace tra
