#include "runtime.h"

#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <barrier>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "relation_io.h"

namespace tra {

std::string ExecutionTrace::csv() const {
  std::ostringstream os;
  os << "node,op,key_arity,frontier,physical_tuples,transfer_floats\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const TraceRow& r = rows[i];
    os << i << ",\"" << r.label << "\"," << r.key_arity << "," << index_vector_to_string(r.front)
       << "," << r.physical_tuples << "," << r.transfer_floats << "\n";
  }
  os << "total,,,,," << total_transfer << "\n";
  return os.str();
}

const PhysRelation& ExecResult::root(const std::string& name) const {
  for (const auto& [n, rel] : roots)
    if (n == name) return rel;
  throw ValidationError("no plan root named " + name);
}

namespace {

// Which node outputs get constraint-checked in validate mode: the closed
// logical operators (join, aggregation, transform- and tile-style maps).
bool constraint_checked(const IaNode& n) {
  switch (n.kind) {
    case IaNode::Kind::Join:
    case IaNode::Kind::Agg:
      return true;
    case IaNode::Kind::Map:
      return n.map_key.kind == KeySpec::Kind::Identity || n.map_key.kind == KeySpec::Kind::Tile;
    default:
      return false;
  }
}

void check_node_constraints(const IaNode& n, size_t node_id, const PhysRelation& rel) {
  if (!constraint_checked(n)) return;
  ConstraintReport r = check_constraints(rel.project());
  if (!r.ok)
    throw ExecutionError("node #" + std::to_string(node_id) + " (" + n.label() +
                         "): " + r.to_string());
}

PhysRelation eval_data_node(const KernelRegistry& reg, const IaNode& n,
                            const std::vector<const PhysRelation*>& kids, const Catalog& catalog,
                            uint32_t sites, const NodeAnnotation& meta, MoveStats* stats) {
  switch (n.kind) {
    case IaNode::Kind::Source: {
      const CatalogEntry& e = catalog.at(n.source);
      if (!e.data) throw ExecutionError("source " + n.source + " has no data");
      return scatter(*e.data, sites, e.layout);
    }
    case IaNode::Kind::Bcast:
      return bcast(*kids[0], stats);
    case IaNode::Kind::Shuf:
      return shuf(n.dims, *kids[0], stats);
    case IaNode::Kind::Join:
      return join_local(reg, n.join, *kids[0], *kids[1]);
    case IaNode::Kind::Agg:
      return agg_local(reg, n.agg, *kids[0]);
    case IaNode::Kind::Filter:
      return filter_local(n.pred, *kids[0]);
    case IaNode::Kind::Map: {
      KeyFunc kf = n.map_key.resolve(kids[0]->key_arity, kids[0]->type);
      return map_local(reg, kf, n.map_arr.resolve(), *kids[0]);
    }
  }
  (void)meta;
  throw ExecutionError("bad plan node");
}

}  // namespace

ExecResult execute_reference(const KernelRegistry& reg, const IaPlan& plan,
                             const Catalog& catalog, uint32_t sites, bool check) {
  CostReport cost = cost_plan(reg, plan, catalog, sites);  // validates and types
  std::vector<PhysRelation> rels(plan.nodes.size());
  ExecResult result;
  result.trace.rows.resize(plan.nodes.size());
  for (size_t i = 0; i < plan.nodes.size(); ++i) {
    const IaNode& n = plan.nodes[i];
    std::vector<const PhysRelation*> kids;
    for (size_t c : n.children) kids.push_back(&rels[c]);
    MoveStats stats;
    auto t0 = std::chrono::steady_clock::now();
    rels[i] = eval_data_node(reg, n, kids, catalog, sites, cost.nodes[i], &stats);
    auto t1 = std::chrono::steady_clock::now();
    if (check) check_node_constraints(n, i, rels[i]);
    TraceRow& row = result.trace.rows[i];
    row.label = n.label();
    row.key_arity = rels[i].key_arity;
    row.front = rels[i].frontier();
    row.physical_tuples = rels[i].tuples.size();
    row.transfer_floats = stats.floats_sent;
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.trace.total_transfer += stats.floats_sent;
  }
  for (const auto& r : plan.roots) result.roots.push_back({r.name, rels[r.id]});
  return result;
}

// ---------------------------------------------------------------------------
// thread mode
// ---------------------------------------------------------------------------

namespace {

struct Batch {
  std::vector<PhysTuple> tuples;
};

class BoundedChannel {
 public:
  BoundedChannel(size_t capacity, uint32_t writers) : cap_(capacity), open_writers_(writers) {}

  bool try_push(Batch&& b) {
    std::lock_guard<std::mutex> lk(m_);
    if (q_.size() >= cap_) return false;
    q_.push_back(std::move(b));
    return true;
  }
  void close_one() {
    std::lock_guard<std::mutex> lk(m_);
    --open_writers_;
  }
  // returns: 0 = got batch, 1 = drained and all writers closed, 2 = empty now
  int try_pop(Batch& out) {
    std::lock_guard<std::mutex> lk(m_);
    if (!q_.empty()) {
      out = std::move(q_.front());
      q_.pop_front();
      return 0;
    }
    return open_writers_ == 0 ? 1 : 2;
  }

 private:
  std::mutex m_;
  std::deque<Batch> q_;
  size_t cap_;
  uint32_t open_writers_;
};

// Sort arrivals the way the reference's sort_canonical orders one site, then
// apply shuffle dedup semantics if requested.
std::vector<PhysTuple> integrate_arrivals(std::vector<PhysTuple> arrivals, bool dedup) {
  std::stable_sort(arrivals.begin(), arrivals.end(), [](const PhysTuple& a, const PhysTuple& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.array && b.array) return compare_arrays(*a.array, *b.array) < 0;
    return false;
  });
  if (!dedup) return arrivals;
  std::vector<PhysTuple> out;
  for (auto& t : arrivals) {
    if (!out.empty() && out.back().key == t.key) {
      bool same = !t.array || !out.back().array || out.back().array->bit_equal(*t.array);
      if (same) continue;
      throw ExecutionError("shuf: two tuples with key " + index_vector_to_string(t.key) +
                           " carry different arrays");
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct ThreadShared {
  const KernelRegistry& reg;
  const IaPlan& plan;
  const Catalog& catalog;
  const ExecOptions& opts;
  const CostReport& cost;
  const std::vector<StaticInfo>& facts;
  // store[node][site]
  std::vector<std::vector<std::vector<PhysTuple>>> store;
  // channels[node][dest]
  std::vector<std::vector<std::unique_ptr<BoundedChannel>>> channels;
  std::vector<std::atomic<uint64_t>> meter;
  std::vector<double> wall;
  std::barrier<> sync;
  std::mutex error_mu;
  std::string error;
  std::atomic<bool> failed{false};

  ThreadShared(const KernelRegistry& r, const IaPlan& p, const Catalog& c, const ExecOptions& o,
               const CostReport& cr, const std::vector<StaticInfo>& f)
      : reg(r), plan(p), catalog(c), opts(o), cost(cr), facts(f),
        store(p.nodes.size(), std::vector<std::vector<PhysTuple>>(o.sites)),
        meter(p.nodes.size()), wall(p.nodes.size(), 0.0),
        sync(static_cast<ptrdiff_t>(o.sites)) {
    channels.resize(p.nodes.size());
    for (size_t i = 0; i < p.nodes.size(); ++i) {
      const IaNode& n = p.nodes[i];
      if (n.kind == IaNode::Kind::Bcast || n.kind == IaNode::Kind::Shuf) {
        for (uint32_t s = 0; s < o.sites; ++s)
          channels[i].push_back(std::make_unique<BoundedChannel>(o.channel_capacity, o.sites));
      }
    }
  }

  void fail(const std::string& msg) {
    {
      std::lock_guard<std::mutex> lk(error_mu);
      if (error.empty()) error = msg;
    }
    failed.store(true);
  }
};

// Wrap one site's slice as a relation so the reference operator
// implementations can run on it unchanged.
PhysRelation slice_rel(const ThreadShared& sh, size_t node, uint32_t site) {
  PhysRelation r;
  r.key_arity = sh.cost.nodes[node].key_arity;
  r.type = sh.cost.nodes[node].type;
  r.sites = sh.opts.sites;
  r.replicated = false;  // slices are processed per site; gating uses facts
  r.tuples = sh.store[node][site];
  return r;
}

void thread_worker(ThreadShared& sh, uint32_t site) {
  const uint32_t s = sh.opts.sites;
  for (size_t ni = 0; ni < sh.plan.nodes.size(); ++ni) {
    const IaNode& n = sh.plan.nodes[ni];
    auto t0 = std::chrono::steady_clock::now();
    bool movement = n.kind == IaNode::Kind::Bcast || n.kind == IaNode::Kind::Shuf;
    std::vector<std::vector<PhysTuple>> outbox(movement ? s : 0);
    try {
      if (!sh.failed.load()) {
        switch (n.kind) {
          case IaNode::Kind::Source: {
            const CatalogEntry& e = sh.catalog.at(n.source);
            if (!e.data) throw ExecutionError("source " + n.source + " has no data");
            PhysRelation all = scatter(*e.data, s, e.layout);
            for (auto& t : all.tuples)
              if (t.site == site) sh.store[ni][site].push_back(std::move(t));
            break;
          }
          case IaNode::Kind::Bcast: {
            size_t child = n.children[0];
            bool rep = sh.facts[child].replicated;
            if (!rep || site == 0) {
              for (const auto& t : sh.store[child][site])
                for (uint32_t d = 0; d < s; ++d)
                  outbox[d].push_back(PhysTuple{t.key, d, t.array});
            }
            break;
          }
          case IaNode::Kind::Shuf: {
            size_t child = n.children[0];
            std::vector<size_t> dims = n.dims;
            std::sort(dims.begin(), dims.end());
            for (size_t d : dims)
              if (d >= sh.cost.nodes[child].key_arity)
                throw ValidationError("shuf dim out of range");
            for (const auto& t : sh.store[child][site]) {
              uint32_t dest = placement_site(t.key, dims, s);
              outbox[dest].push_back(PhysTuple{t.key, dest, t.array});
            }
            break;
          }
          case IaNode::Kind::Join: {
            PhysRelation l = slice_rel(sh, n.children[0], site);
            PhysRelation r = slice_rel(sh, n.children[1], site);
            PhysRelation out = join_local(sh.reg, n.join, l, r);
            if (!out.tuples.empty() && out.type != sh.cost.nodes[ni].type)
              throw ExecutionError("site " + std::to_string(site) +
                                   ": join output type diverges from the plan annotation");
            sh.store[ni][site] = std::move(out.tuples);
            break;
          }
          case IaNode::Kind::Agg: {
            PhysRelation c = slice_rel(sh, n.children[0], site);
            PhysRelation out = agg_local(sh.reg, n.agg, c);
            if (!out.tuples.empty() && out.type != sh.cost.nodes[ni].type)
              throw ExecutionError("site " + std::to_string(site) +
                                   ": aggregation output type diverges from the plan annotation");
            sh.store[ni][site] = std::move(out.tuples);
            break;
          }
          case IaNode::Kind::Filter: {
            PhysRelation c = slice_rel(sh, n.children[0], site);
            sh.store[ni][site] = filter_local(n.pred, c).tuples;
            break;
          }
          case IaNode::Kind::Map: {
            PhysRelation c = slice_rel(sh, n.children[0], site);
            KeyFunc kf = n.map_key.resolve(c.key_arity, c.type);
            sh.store[ni][site] = map_local(sh.reg, kf, n.map_arr.resolve(), c).tuples;
            break;
          }
        }
      }
    } catch (const Error& e) {
      sh.fail("node #" + std::to_string(ni) + " (" + n.label() + ") at site " +
              std::to_string(site) + ": " + e.what());
    }
    sh.sync.arrive_and_wait();

    if (movement) {
      bool closed = false;
      try {
        if (sh.failed.load()) throw ExecutionError("skipped: a peer already failed");
        // exchange: push batches, interleaving drains so bounded channels
        // cannot deadlock
        std::vector<PhysTuple> arrivals;
        uint64_t sent_floats = 0;
        auto drain = [&]() {
          Batch b;
          while (sh.channels[ni][site]->try_pop(b) == 0)
            for (auto& t : b.tuples) arrivals.push_back(std::move(t));
        };
        for (uint32_t d = 0; d < s; ++d) {
          size_t i = 0;
          while (i < outbox[d].size()) {
            Batch b;
            size_t end = std::min(outbox[d].size(), i + sh.opts.batch_tuples);
            for (; i < end; ++i) b.tuples.push_back(std::move(outbox[d][i]));
            sent_floats += b.tuples.size() * sh.cost.nodes[ni].type.float_count();
            while (!sh.channels[ni][d]->try_push(std::move(b))) drain();
          }
        }
        for (uint32_t d = 0; d < s; ++d) sh.channels[ni][d]->close_one();
        closed = true;
        Batch b;
        int st;
        while ((st = sh.channels[ni][site]->try_pop(b)) != 1) {
          if (st == 0)
            for (auto& t : b.tuples) arrivals.push_back(std::move(t));
          else
            std::this_thread::yield();
        }
        sh.meter[ni] += sent_floats;
        sh.store[ni][site] =
            integrate_arrivals(std::move(arrivals), n.kind == IaNode::Kind::Shuf);
      } catch (const Error& e) {
        sh.fail("node #" + std::to_string(ni) + " (" + n.label() + ") at site " +
                std::to_string(site) + ": " + e.what());
        if (!closed)
          for (uint32_t d = 0; d < s; ++d) sh.channels[ni][d]->close_one();
        // keep draining (and discarding) so peers blocked on a full channel
        // can finish their sends
        Batch b;
        int st;
        while ((st = sh.channels[ni][site]->try_pop(b)) != 1) {
          if (st != 0) std::this_thread::yield();
        }
      }
    }
    sh.sync.arrive_and_wait();
    if (site == 0) {
      auto t1 = std::chrono::steady_clock::now();
      sh.wall[ni] = std::chrono::duration<double>(t1 - t0).count();
    }
    sh.sync.arrive_and_wait();
  }
}

ExecResult execute_threads(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                           const ExecOptions& opts, const CostReport& cost,
                           const std::vector<StaticInfo>& facts) {
  ThreadShared sh(reg, plan, catalog, opts, cost, facts);
  std::vector<std::thread> workers;
  workers.reserve(opts.sites);
  for (uint32_t site = 0; site < opts.sites; ++site)
    workers.emplace_back(thread_worker, std::ref(sh), site);
  for (auto& w : workers) w.join();
  if (!sh.error.empty()) throw ExecutionError(sh.error);

  ExecResult result;
  result.trace.rows.resize(plan.nodes.size());
  std::map<size_t, PhysRelation> root_rels;
  for (size_t i = 0; i < plan.nodes.size(); ++i) {
    PhysRelation rel;
    rel.key_arity = cost.nodes[i].key_arity;
    rel.type = cost.nodes[i].type;
    rel.sites = opts.sites;
    rel.replicated = facts[i].replicated;
    for (uint32_t s = 0; s < opts.sites; ++s)
      for (auto& t : sh.store[i][s]) rel.tuples.push_back(t);
    rel.sort_canonical();
    if (opts.check_constraints) check_node_constraints(plan.nodes[i], i, rel);
    TraceRow& row = result.trace.rows[i];
    row.label = plan.nodes[i].label();
    row.key_arity = rel.key_arity;
    row.front = rel.frontier();
    row.physical_tuples = rel.tuples.size();
    row.transfer_floats = sh.meter[i].load();
    row.wall_seconds = sh.wall[i];
    result.trace.total_transfer += row.transfer_floats;
    for (const auto& r : plan.roots)
      if (r.id == i && !root_rels.count(i)) root_rels[i] = rel;
  }
  for (const auto& r : plan.roots) result.roots.push_back({r.name, root_rels.at(r.id)});
  return result;
}

// ---------------------------------------------------------------------------
// process mode: fork one worker per site, move tuples over unix sockets
// ---------------------------------------------------------------------------

// frame types
enum : uint8_t {
  MSG_INIT = 1,
  MSG_SLICE,      // node slice delivery (sources and movement arrivals)
  MSG_SLICE_END,  // node, dedup flag
  MSG_LOCAL,      // run a local node
  MSG_MOVE,       // produce outboxes for a movement node
  MSG_OUT,        // worker -> coordinator: dest + tuples
  MSG_OUT_END,
  MSG_ACK,        // node summary: count + frontier
  MSG_FETCH,      // request node slice
  MSG_ERR,
  MSG_EXIT,
};

void write_all(int fd, const void* data, size_t len) {
  const char* p = static_cast<const char*>(data);
  while (len > 0) {
    ssize_t n = ::write(fd, p, len);
    if (n <= 0) throw ExecutionError("worker socket write failed");
    p += n;
    len -= static_cast<size_t>(n);
  }
}

void read_all(int fd, void* data, size_t len) {
  char* p = static_cast<char*>(data);
  while (len > 0) {
    ssize_t n = ::read(fd, p, len);
    if (n <= 0) throw ExecutionError("worker socket read failed");
    p += n;
    len -= static_cast<size_t>(n);
  }
}

void send_frame(int fd, uint8_t type, const std::string& payload) {
  std::string head;
  put_u64(head, payload.size());
  head.push_back(static_cast<char>(type));
  write_all(fd, head.data(), head.size());
  if (!payload.empty()) write_all(fd, payload.data(), payload.size());
}

uint8_t recv_frame(int fd, std::string& payload) {
  char head[9];
  read_all(fd, head, 9);
  uint64_t len = get_u64(head);
  payload.resize(len);
  if (len) read_all(fd, payload.data(), len);
  return static_cast<uint8_t>(head[8]);
}

std::string encode_tuples(const std::vector<PhysTuple>& tuples, size_t arity, size_t floats,
                          size_t begin, size_t end, const std::vector<uint32_t>* dests) {
  std::string buf;
  put_u64(buf, end - begin);
  for (size_t i = begin; i < end; ++i) {
    const PhysTuple& t = tuples[i];
    put_u64(buf, dests ? (*dests)[i] : t.site);
    for (uint64_t k : t.key) put_u64(buf, k);
    if (floats) {
      if (!t.array) throw ExecutionError("wire encoding of a symbolic tuple");
      for (double v : t.array->values) put_f64(buf, v);
    }
  }
  (void)arity;
  return buf;
}

std::vector<PhysTuple> decode_tuples(const std::string& buf, size_t arity, const ArrayType& type) {
  size_t floats = type.float_count();
  size_t rec = 8 * (1 + arity + floats);
  uint64_t count = get_u64(buf.data());
  std::vector<PhysTuple> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const char* p = buf.data() + 8 + i * rec;
    PhysTuple t;
    t.site = static_cast<uint32_t>(get_u64(p));
    t.key.resize(arity);
    for (size_t k = 0; k < arity; ++k) t.key[k] = get_u64(p + 8 * (1 + k));
    DenseArray arr = DenseArray::zeros(type);
    for (size_t v = 0; v < floats; ++v) arr.values[v] = get_f64(p + 8 * (1 + arity + v));
    t.array = std::make_shared<const DenseArray>(std::move(arr));
    out.push_back(std::move(t));
  }
  return out;
}

struct WireMeta {
  std::vector<size_t> arity;
  std::vector<ArrayType> type;
};

// Runs in the forked child: owns one site's slices, executes local nodes,
// produces outboxes, integrates arrivals.
class SiteWorker {
 public:
  SiteWorker(int fd, uint32_t site, uint32_t sites, IaPlan plan, WireMeta meta)
      : fd_(fd), site_(site), sites_(sites), plan_(std::move(plan)), meta_(std::move(meta)),
        reg_(false), store_(plan_.nodes.size()) {}

  void run() {
    std::string payload;
    for (;;) {
      uint8_t type = recv_frame(fd_, payload);
      try {
        switch (type) {
          case MSG_SLICE: {
            size_t node = get_u64(payload.data());
            auto tuples =
                decode_tuples(payload.substr(8), meta_.arity[node], meta_.type[node]);
            for (auto& t : tuples) pending_[node].push_back(std::move(t));
            break;
          }
          case MSG_SLICE_END: {
            size_t node = get_u64(payload.data());
            bool dedup = get_u64(payload.data() + 8) != 0;
            store_[node] = integrate_arrivals(std::move(pending_[node]), dedup);
            pending_[node].clear();
            ack(node);
            break;
          }
          case MSG_LOCAL: {
            size_t node = get_u64(payload.data());
            run_local(node);
            ack(node);
            break;
          }
          case MSG_MOVE: {
            size_t node = get_u64(payload.data());
            send_outboxes(node);
            break;
          }
          case MSG_FETCH: {
            size_t node = get_u64(payload.data());
            size_t floats = meta_.type[node].float_count();
            const auto& ts = store_[node];
            for (size_t i = 0; i < ts.size(); i += 256) {
              std::string head;
              put_u64(head, node);
              send_frame(fd_, MSG_OUT,
                         head + encode_tuples(ts, meta_.arity[node], floats, i,
                                              std::min(ts.size(), i + 256), nullptr));
            }
            send_frame(fd_, MSG_OUT_END, "");
            break;
          }
          case MSG_EXIT:
            return;
          default:
            throw ExecutionError("worker received unknown frame");
        }
      } catch (const std::exception& e) {
        send_frame(fd_, MSG_ERR,
                   "site " + std::to_string(site_) + ": " + e.what());
      }
    }
  }

 private:
  void ack(size_t node) {
    std::string buf;
    put_u64(buf, node);
    put_u64(buf, store_[node].size());
    IndexVector f = frontier_of_keys_local(node);
    put_u64(buf, f.size());
    for (uint64_t x : f) put_u64(buf, x);
    send_frame(fd_, MSG_ACK, buf);
  }

  IndexVector frontier_of_keys_local(size_t node) {
    IndexVector f(meta_.arity[node], 0);
    for (const auto& t : store_[node])
      for (size_t d = 0; d < f.size(); ++d) f[d] = std::max(f[d], t.key[d] + 1);
    return f;
  }

  PhysRelation slice(size_t node) {
    PhysRelation r;
    r.key_arity = meta_.arity[node];
    r.type = meta_.type[node];
    r.sites = sites_;
    r.tuples = store_[node];
    return r;
  }

  void run_local(size_t node) {
    const IaNode& n = plan_.nodes[node];
    switch (n.kind) {
      case IaNode::Kind::Join: {
        PhysRelation l = slice(n.children[0]), r = slice(n.children[1]);
        PhysRelation out = join_local(reg_, n.join, l, r);
        if (!out.tuples.empty() && out.type != meta_.type[node])
          throw ExecutionError("join output type diverges from the plan annotation");
        store_[node] = std::move(out.tuples);
        break;
      }
      case IaNode::Kind::Agg: {
        PhysRelation out = agg_local(reg_, n.agg, slice(n.children[0]));
        if (!out.tuples.empty() && out.type != meta_.type[node])
          throw ExecutionError("aggregation output type diverges from the plan annotation");
        store_[node] = std::move(out.tuples);
        break;
      }
      case IaNode::Kind::Filter:
        store_[node] = filter_local(n.pred, slice(n.children[0])).tuples;
        break;
      case IaNode::Kind::Map: {
        PhysRelation c = slice(n.children[0]);
        KeyFunc kf = n.map_key.resolve(c.key_arity, c.type);
        store_[node] = map_local(reg_, kf, n.map_arr.resolve(), c).tuples;
        break;
      }
      default:
        throw ExecutionError("MSG_LOCAL on a non-local node");
    }
  }

  void send_outboxes(size_t node) {
    const IaNode& n = plan_.nodes[node];
    size_t child = n.children[0];
    const auto& ts = store_[child];
    size_t floats = meta_.type[child].float_count();
    std::vector<PhysTuple> out;
    std::vector<uint32_t> dests;
    if (n.kind == IaNode::Kind::Bcast) {
      // replicated gating handled by the coordinator: it only sends MSG_MOVE
      // for bcast to contributing sites
      for (const auto& t : ts)
        for (uint32_t d = 0; d < sites_; ++d) {
          out.push_back(t);
          dests.push_back(d);
        }
    } else {
      std::vector<size_t> dims = n.dims;
      std::sort(dims.begin(), dims.end());
      for (const auto& t : ts) {
        out.push_back(t);
        dests.push_back(placement_site(t.key, dims, sites_));
      }
    }
    for (size_t i = 0; i < out.size(); i += 256) {
      std::string head;
      put_u64(head, node);
      send_frame(fd_, MSG_OUT,
                 head + encode_tuples(out, meta_.arity[child], floats, i,
                                      std::min(out.size(), i + 256), &dests));
    }
    send_frame(fd_, MSG_OUT_END, "");
  }

  int fd_;
  uint32_t site_;
  uint32_t sites_;
  IaPlan plan_;
  WireMeta meta_;
  KernelRegistry reg_;
  std::vector<std::vector<PhysTuple>> store_;
  std::map<size_t, std::vector<PhysTuple>> pending_;
};

struct WorkerProc {
  pid_t pid = -1;
  int fd = -1;
};

class ProcessCluster {
 public:
  ProcessCluster(const IaPlan& plan, const CostReport& cost, uint32_t sites) : sites_(sites) {
    WireMeta meta;
    for (const auto& a : cost.nodes) {
      meta.arity.push_back(a.key_arity);
      meta.type.push_back(a.type);
    }
    for (uint32_t s = 0; s < sites; ++s) {
      int sv[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
        throw ExecutionError("socketpair failed");
      pid_t pid = ::fork();
      if (pid < 0) throw ExecutionError("fork failed");
      if (pid == 0) {
        // child: become the site worker and never return
        ::close(sv[0]);
        for (auto& w : workers_)
          if (w.fd >= 0) ::close(w.fd);
        int code = 0;
        try {
          SiteWorker worker(sv[1], s, sites, plan, meta);
          worker.run();
        } catch (...) {
          code = 1;
        }
        ::close(sv[1]);
        ::_exit(code);
      }
      ::close(sv[1]);
      workers_.push_back(WorkerProc{pid, sv[0]});
    }
  }

  ~ProcessCluster() {
    for (auto& w : workers_) {
      if (w.fd >= 0) {
        try {
          send_frame(w.fd, MSG_EXIT, "");
        } catch (...) {
        }
        ::close(w.fd);
      }
      if (w.pid > 0) ::waitpid(w.pid, nullptr, 0);
    }
  }

  int fd(uint32_t site) const { return workers_[site].fd; }
  uint32_t sites() const { return sites_; }

 private:
  uint32_t sites_;
  std::vector<WorkerProc> workers_;
};

struct AckInfo {
  uint64_t count = 0;
  IndexVector front;
};

AckInfo expect_ack(int fd, size_t node) {
  std::string payload;
  for (;;) {
    uint8_t type = recv_frame(fd, payload);
    if (type == MSG_ERR) throw ExecutionError(payload);
    if (type != MSG_ACK) throw ExecutionError("unexpected worker frame (wanted ack)");
    size_t got = get_u64(payload.data());
    if (got != node) throw ExecutionError("worker acked the wrong node");
    AckInfo a;
    a.count = get_u64(payload.data() + 8);
    uint64_t fa = get_u64(payload.data() + 16);
    for (uint64_t i = 0; i < fa; ++i) a.front.push_back(get_u64(payload.data() + 24 + 8 * i));
    return a;
  }
}

void deliver_slices(ProcessCluster& cluster, size_t node, size_t arity, size_t floats,
                    std::vector<std::vector<PhysTuple>>& per_site, bool dedup,
                    std::vector<AckInfo>& acks) {
  for (uint32_t s = 0; s < cluster.sites(); ++s) {
    const auto& ts = per_site[s];
    for (size_t i = 0; i < ts.size(); i += 256) {
      std::string head;
      put_u64(head, node);
      send_frame(cluster.fd(s), MSG_SLICE,
                 head + encode_tuples(ts, arity, floats, i, std::min(ts.size(), i + 256),
                                      nullptr));
    }
    std::string endp;
    put_u64(endp, node);
    put_u64(endp, dedup ? 1 : 0);
    send_frame(cluster.fd(s), MSG_SLICE_END, endp);
  }
  for (uint32_t s = 0; s < cluster.sites(); ++s) acks[s] = expect_ack(cluster.fd(s), node);
}

ExecResult execute_processes(const KernelRegistry& reg, const IaPlan& plan,
                             const Catalog& catalog, const ExecOptions& opts,
                             const CostReport& cost, const std::vector<StaticInfo>& facts) {
  (void)reg;  // workers build their own registries after the fork
  ProcessCluster cluster(plan, cost, opts.sites);
  ExecResult result;
  result.trace.rows.resize(plan.nodes.size());
  std::vector<std::vector<AckInfo>> acks(plan.nodes.size(),
                                         std::vector<AckInfo>(opts.sites));

  auto collect_out = [&](uint32_t origin, size_t node,
                         std::vector<std::vector<PhysTuple>>& per_dest, size_t arity,
                         const ArrayType& type) -> uint64_t {
    uint64_t floats_sent = 0;
    std::string payload;
    for (;;) {
      uint8_t t = recv_frame(cluster.fd(origin), payload);
      if (t == MSG_ERR) throw ExecutionError(payload);
      if (t == MSG_OUT_END) break;
      if (t != MSG_OUT) throw ExecutionError("unexpected worker frame (wanted outbox)");
      size_t got = get_u64(payload.data());
      if (got != node) throw ExecutionError("outbox for the wrong node");
      auto tuples = decode_tuples(payload.substr(8), arity, type);
      floats_sent += tuples.size() * type.float_count();
      for (auto& tp : tuples) {
        uint32_t dest = tp.site;
        per_dest[dest].push_back(std::move(tp));
      }
    }
    return floats_sent;
  };

  for (size_t ni = 0; ni < plan.nodes.size(); ++ni) {
    const IaNode& n = plan.nodes[ni];
    auto t0 = std::chrono::steady_clock::now();
    uint64_t transfer = 0;
    switch (n.kind) {
      case IaNode::Kind::Source: {
        const CatalogEntry& e = catalog.at(n.source);
        if (!e.data) throw ExecutionError("source " + n.source + " has no data");
        PhysRelation all = scatter(*e.data, opts.sites, e.layout);
        std::vector<std::vector<PhysTuple>> per_site(opts.sites);
        for (auto& t : all.tuples) per_site[t.site].push_back(std::move(t));
        deliver_slices(cluster, ni, cost.nodes[ni].key_arity,
                       cost.nodes[ni].type.float_count(), per_site, false, acks[ni]);
        break;
      }
      case IaNode::Kind::Bcast:
      case IaNode::Kind::Shuf: {
        size_t child = n.children[0];
        bool rep_bcast = n.kind == IaNode::Kind::Bcast && facts[child].replicated;
        std::vector<std::vector<PhysTuple>> per_dest(opts.sites);
        std::string req;
        put_u64(req, ni);
        for (uint32_t s = 0; s < opts.sites; ++s) {
          if (rep_bcast && s != 0) continue;  // only site 0 contributes
          send_frame(cluster.fd(s), MSG_MOVE, req);
          transfer += collect_out(s, ni, per_dest, cost.nodes[child].key_arity,
                                  cost.nodes[child].type);
        }
        deliver_slices(cluster, ni, cost.nodes[ni].key_arity,
                       cost.nodes[ni].type.float_count(), per_dest,
                       n.kind == IaNode::Kind::Shuf, acks[ni]);
        break;
      }
      default: {
        std::string req;
        put_u64(req, ni);
        for (uint32_t s = 0; s < opts.sites; ++s) send_frame(cluster.fd(s), MSG_LOCAL, req);
        for (uint32_t s = 0; s < opts.sites; ++s) acks[ni][s] = expect_ack(cluster.fd(s), ni);
        break;
      }
    }
    auto t1 = std::chrono::steady_clock::now();
    TraceRow& row = result.trace.rows[ni];
    row.label = n.label();
    row.key_arity = cost.nodes[ni].key_arity;
    row.front.assign(cost.nodes[ni].key_arity, 0);
    for (uint32_t s = 0; s < opts.sites; ++s) {
      row.physical_tuples += acks[ni][s].count;
      for (size_t d = 0; d < acks[ni][s].front.size(); ++d)
        row.front[d] = std::max(row.front[d], acks[ni][s].front[d]);
    }
    row.transfer_floats = transfer;
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.trace.total_transfer += transfer;
  }

  // fetch roots (and validate-mode nodes)
  auto fetch = [&](size_t node) {
    PhysRelation rel;
    rel.key_arity = cost.nodes[node].key_arity;
    rel.type = cost.nodes[node].type;
    rel.sites = opts.sites;
    rel.replicated = facts[node].replicated;
    std::string req;
    put_u64(req, node);
    for (uint32_t s = 0; s < opts.sites; ++s) {
      send_frame(cluster.fd(s), MSG_FETCH, req);
      std::string payload;
      for (;;) {
        uint8_t t = recv_frame(cluster.fd(s), payload);
        if (t == MSG_ERR) throw ExecutionError(payload);
        if (t == MSG_OUT_END) break;
        if (t != MSG_OUT) throw ExecutionError("unexpected worker frame (wanted fetch)");
        auto tuples = decode_tuples(payload.substr(8), rel.key_arity, rel.type);
        for (auto& tp : tuples) {
          tp.site = s;
          rel.tuples.push_back(std::move(tp));
        }
      }
    }
    rel.sort_canonical();
    return rel;
  };

  if (opts.check_constraints)
    for (size_t i = 0; i < plan.nodes.size(); ++i)
      if (constraint_checked(plan.nodes[i])) check_node_constraints(plan.nodes[i], i, fetch(i));

  for (const auto& r : plan.roots) result.roots.push_back({r.name, fetch(r.id)});
  return result;
}

}  // namespace

ExecResult execute_plan(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                        const ExecOptions& opts) {
  if (opts.sites < 1) throw ValidationError("site count must be >= 1");
  CostReport cost = cost_plan(reg, plan, catalog, opts.sites);
  std::vector<StaticInfo> facts = annotate_static(plan, catalog);
  if (opts.processes) return execute_processes(reg, plan, catalog, opts, cost, facts);
  return execute_threads(reg, plan, catalog, opts, cost, facts);
}

}  // namespace tra
