#pragma once

// Command implementations behind the `graphpy` CLI.  Every command returns a
// report of the shape {"manifest":{...},"series":[...],"ledger":{...}} plus
// an `ok` flag for commands that assert something.  Needs nlohmann/json
// (vendor/json.hpp) on the include path.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <locale>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "graphpy/autodiff.hpp"
#include "graphpy/dataset.hpp"
#include "graphpy/graph_io.hpp"
#include "graphpy/models.hpp"
#include "graphpy/oracle.hpp"

namespace graphpy::bench {

using json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "0.1.0";

struct CommandResult {
  json report;
  std::string csv;   // empty for commands without tabular output
  std::string text;  // human-readable summary for stdout
  bool ok = true;    // false: a check ran and failed (exit code 1)
};

inline json manifest(const std::string& cmd, json config, std::uint64_t seed) {
  return {{"subcommand", cmd}, {"config", std::move(config)}, {"seed", seed}, {"artifact_version", kArtifactVersion}};
}

inline json to_json(const ElementCounts& c) {
  json j = json::object();
  for (auto cat : kAllMemCategories) j[to_string(cat)] = c[cat];
  j["total"] = c.total();
  return j;
}

inline json to_json(const LedgerSnapshot& s) {
  return {{"current", to_json(s.current)}, {"peak", to_json(s.peak)}, {"peak_total", s.peak_total}};
}

inline json to_json(const Accuracies& a) { return {{"train", a.train}, {"val", a.val}, {"test", a.test}}; }

inline json empty_ledger() { return to_json(LedgerSnapshot{}); }

// CSV writer: header row, comma-delimited, '.' decimal regardless of locale.
class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    out_.imbue(std::locale::classic());
    out_.precision(10);
    row(header);
  }
  template <class... Ts>
  void add(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  std::ostringstream out_;
};

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::bad_argument, "median of an empty sample");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Tensor uniform_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline UnifiedGraph er_graph(std::uint64_t vcount, std::uint64_t slots, std::uint64_t seed) {
  return build_graph(erdos_renyi_edges(vcount, slots, seed), vcount, {.symmetrize = true, .need_edge_ids = true});
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
  std::string input;
  char delimiter = ' ';
  std::uint64_t vcount = 0;  // 0: max id + 1
  bool symmetrize = false;
  bool edge_ids = false;
  std::string out;  // empty: do not save
};

inline CommandResult cmd_build(const BuildArgs& a) {
  std::ifstream in(a.input);
  if (!in) fail(ErrorCode::io, "cannot open '" + a.input + "'");
  auto edges = parse_edge_text(in, {}, a.delimiter);
  const auto vcount = a.vcount ? a.vcount : edges.vcount_hint();
  auto g = build_graph(edges, vcount, {.symmetrize = a.symmetrize, .need_edge_ids = a.edge_ids});
  std::size_t bytes = 0;
  if (!a.out.empty()) bytes = save_graph(g, a.out);
  CommandResult r;
  json cfg = {{"input", a.input}, {"delimiter", std::string(1, a.delimiter)}, {"vcount", a.vcount},
              {"symmetrize", a.symmetrize}, {"edge_ids", a.edge_ids}, {"out", a.out}};
  json row = {{"vcount", g.vcount()}, {"ecount", g.ecount()}, {"storage_elements", g.storage_elements()},
              {"has_edge_ids", g.has_edge_ids()}, {"bytes_written", bytes}};
  r.report = {{"manifest", manifest("build", cfg, 0)}, {"series", json::array({row})}, {"ledger", empty_ledger()}};
  r.text = row.dump();
  return r;
}

// ---------------------------------------------------------------------------
// gen-sbm

struct GenSbmArgs {
  SbmDatasetConfig data;
  bool edge_ids = true;
  std::string out_dir = ".";
};

inline CommandResult cmd_gen_sbm(const GenSbmArgs& a) {
  auto d = make_sbm_dataset(a.data);
  if (!a.edge_ids) d.graph = build_graph(sbm_edges(a.data.vertices, a.data.classes, a.data.p_in, a.data.p_out, a.data.seed).edges,
                                         a.data.vertices, {.symmetrize = true});
  const std::string base = a.out_dir.empty() ? std::string(".") : a.out_dir;
  save_graph(d.graph, base + "/graph.bin");
  save_features(d.features, base + "/features.bin");
  save_ints(d.labels, base + "/labels.txt");
  save_ints(from_mask(d.train_mask), base + "/train_mask.txt");
  save_ints(from_mask(d.val_mask), base + "/val_mask.txt");
  save_ints(from_mask(d.test_mask), base + "/test_mask.txt");
  CommandResult r;
  const auto& c = a.data;
  json cfg = {{"vertices", c.vertices}, {"classes", c.classes}, {"p_in", c.p_in}, {"p_out", c.p_out},
              {"feature_dim", c.feature_dim}, {"noise", c.noise}, {"edge_ids", a.edge_ids}, {"out_dir", base}};
  json row = {{"vcount", d.graph.vcount()}, {"ecount", d.graph.ecount()}};
  r.report = {{"manifest", manifest("gen-sbm", cfg, c.seed)}, {"series", json::array({row})}, {"ledger", empty_ledger()}};
  r.text = row.dump();
  return r;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string graph, features, labels;
  std::string train_mask, val_mask, test_mask;  // optional; random split when absent
  bool builtin_sbm = false;                      // use make_sbm_dataset() instead of files
  TrainConfig cfg;
};

inline NodeDataset load_dataset(const TrainArgs& a) {
  if (a.builtin_sbm) {
    SbmDatasetConfig c;
    return make_sbm_dataset(c);
  }
  require(!a.graph.empty() && !a.features.empty() && !a.labels.empty(), ErrorCode::bad_argument,
          "train needs --graph, --features and --labels (or --sbm)");
  NodeDataset d;
  d.graph = load_graph(a.graph);
  d.features = load_features(a.features);
  d.labels = load_ints(a.labels);
  require(d.features.rows() == d.graph.vcount(), ErrorCode::shape,
          "features have " + std::to_string(d.features.rows()) + " rows, graph has " +
              std::to_string(d.graph.vcount()) + " vertices");
  require(d.labels.size() == d.graph.vcount(), ErrorCode::shape,
          "labels have " + std::to_string(d.labels.size()) + " entries, graph has " +
              std::to_string(d.graph.vcount()) + " vertices");
  std::int64_t mx = -1;
  for (auto l : d.labels) mx = std::max(mx, l);
  d.num_classes = mx + 1;
  if (a.train_mask.empty()) {
    random_split(d, a.cfg.seed);
  } else {
    d.train_mask = to_mask(load_ints(a.train_mask));
    d.val_mask = a.val_mask.empty() ? std::vector<bool>(d.graph.vcount()) : to_mask(load_ints(a.val_mask));
    d.test_mask = a.test_mask.empty() ? std::vector<bool>(d.graph.vcount()) : to_mask(load_ints(a.test_mask));
  }
  return d;
}

inline json config_json(const TrainConfig& c) {
  return {{"model", to_string(c.model)}, {"heads", c.heads},   {"hidden", c.hidden_size()},
          {"layers", c.layers},          {"epochs", c.epochs}, {"lr", c.lr},
          {"dropout", c.dropout},        {"layout", to_string(c.layout)}};
}

inline CommandResult cmd_train(const TrainArgs& a) {
  auto data = load_dataset(a);
  auto rep = train(data, a.cfg);
  json cfg = config_json(a.cfg);
  cfg["dataset"] = a.builtin_sbm ? json("builtin-sbm") : json(a.graph);
  json series = json::array();
  for (const auto& e : rep.epochs)
    series.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"train_acc", e.acc.train},
                      {"val_acc", e.acc.val},
                      {"test_acc", e.acc.test},
                      {"orchestration_ns", e.timing.orchestration_ns},
                      {"kernel_ns", e.timing.kernel_ns},
                      {"overhead_ratio", e.timing.overhead_ratio()}});
  json m = manifest("train", cfg, a.cfg.seed);
  m["results"] = {{"vcount", data.graph.vcount()},
                  {"ecount", data.graph.ecount()},
                  {"initial_accuracy", to_json(rep.initial)},
                  {"final_accuracy", to_json(rep.final)},
                  {"framework_overhead_ns", rep.overhead.framework_overhead_ns},
                  {"kernel_ns", rep.overhead.kernel_ns},
                  {"overhead_ratio", rep.overhead.overhead_ratio()}};
  CommandResult r;
  r.report = {{"manifest", m}, {"series", series}, {"ledger", to_json(rep.ledger)}};
  std::ostringstream s;
  s << to_string(a.cfg.model) << ": epochs=" << rep.epochs.size() << " final train/val/test accuracy "
    << rep.final.train << " / " << rep.final.val << " / " << rep.final.test;
  if (!rep.epochs.empty()) s << ", last loss " << rep.epochs.back().loss;
  r.text = s.str();
  return r;
}

// ---------------------------------------------------------------------------
// bench-kernel

inline const std::vector<std::string>& kernel_names() {
  static const std::vector<std::string> names{"gspmm_v",   "gspmm_ve",  "gspmm_ve_t", "gsddmm_vv",
                                              "gsddmm_ve", "e_shuffle", "edge_softmax", "shuffle_gspmm_ve"};
  return names;
}

struct BenchKernelArgs {
  std::string graph;  // empty: Erdos-Renyi graph from vcount/ecount/seed
  std::uint64_t vcount = 32768, ecount = 1000000;
  std::string kernel = "gspmm_v";
  std::size_t feat = 16, heads = 1, iters = 10;
  bool unit_weights = false;
  std::uint64_t seed = 0;
};

struct KernelTiming {
  double median_ns = 0;
  double checksum = 0;
};

// Times one kernel: one warmup call, then `iters` timed calls.
inline KernelTiming time_kernel(const UnifiedGraph& g, const std::string& kernel, std::size_t feat, std::size_t heads,
                                std::size_t iters, bool unit_weights, std::uint64_t seed) {
  require(iters >= 1, ErrorCode::bad_argument, "iters must be >= 1");
  require(feat >= 1 && heads >= 1, ErrorCode::bad_argument, "feat and heads must be >= 1");
  require(std::find(kernel_names().begin(), kernel_names().end(), kernel) != kernel_names().end(),
          ErrorCode::bad_argument, "unknown kernel '" + kernel + "'");
  const std::size_t V = g.vcount(), E = g.ecount(), H = heads;
  require(E > 0, ErrorCode::bad_argument, "benchmark graph has no edges");
  std::mt19937_64 rng(seed);
  const Tensor X = uniform_tensor({V, H * feat}, rng);
  const Tensor We = unit_weights ? Tensor({E, H}, 1.0) : uniform_tensor({E, H}, rng);
  const Tensor Xv = uniform_tensor({V, H}, rng);

  std::function<Tensor()> run;
  if (kernel == "gspmm_v") run = [&] { return gspmm_v(g, X); };
  else if (kernel == "gspmm_ve") run = [&] { return gspmm_ve(g, We, X); };
  else if (kernel == "gspmm_ve_t") run = [&] { return gspmm_ve_t(g, We, X); };
  else if (kernel == "gsddmm_vv") run = [&] { return gsddmm_vv(g, X, X, H); };
  else if (kernel == "gsddmm_ve") run = [&] { return gsddmm_ve(g, Xv, We, SddmmOp::add); };
  else if (kernel == "e_shuffle") run = [&] { return e_shuffle(g, We); };
  else if (kernel == "edge_softmax") run = [&] { return edge_softmax(g, We); };
  else run = [&] { return gspmm_ve(g, e_shuffle(g, We), X); };

  KernelTiming out;
  out.checksum = run().sum();
  std::vector<double> ns;
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    Tensor y = run();
    const auto t1 = Clock::now();
    ns.push_back(static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    if (y.size() == 0) fail(ErrorCode::shape, "kernel produced no output");
  }
  out.median_ns = median(ns);
  return out;
}

// Native vs shuffle path, interleaved per iteration (order alternates) so
// both see the same machine state; block-ordered runs drift by more than
// the few percent being measured.
struct PairTiming {
  KernelTiming native, shuffled;
  double slowdown = 0;  // median of per-pair ratios
};

inline PairTiming time_pair(const UnifiedGraph& g, std::size_t feat, std::size_t iters,
                                                       std::uint64_t seed) {
  require(iters >= 1, ErrorCode::bad_argument, "iters must be >= 1");
  std::mt19937_64 rng(seed);
  const Tensor X = uniform_tensor({g.vcount(), feat}, rng);
  const Tensor We = uniform_tensor({g.ecount(), 1}, rng);
  auto native = [&] { return gspmm_ve_t(g, We, X); };
  auto shuffled = [&] { return gspmm_ve(g, e_shuffle(g, We), X); };
  PairTiming out;
  out.native.checksum = native().sum();
  out.shuffled.checksum = shuffled().sum();
  std::vector<double> a, b, ratio;
  auto timed = [](auto& f) {
    const auto t0 = Clock::now();
    Tensor y = f();
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
  };
  for (std::size_t i = 0; i < iters; ++i) {
    if (i % 2 == 0) {
      a.push_back(timed(native));
      b.push_back(timed(shuffled));
    } else {
      b.push_back(timed(shuffled));
      a.push_back(timed(native));
    }
    ratio.push_back(b.back() / a.back());
  }
  out.native.median_ns = median(a);
  out.shuffled.median_ns = median(b);
  out.slowdown = median(ratio);
  return out;
}

inline CommandResult cmd_bench_kernel(const BenchKernelArgs& a) {
  require(a.iters >= 1, ErrorCode::bad_argument, "iters must be >= 1");
  const auto g = a.graph.empty() ? er_graph(a.vcount, a.ecount, a.seed) : load_graph(a.graph);
  const auto t = time_kernel(g, a.kernel, a.feat, a.heads, a.iters, a.unit_weights, a.seed);
  Csv csv({"kernel", "vcount", "ecount", "K", "H", "median_ns", "checksum"});
  csv.add(a.kernel, g.vcount(), g.ecount(), a.feat, a.heads, t.median_ns, t.checksum);
  json cfg = {{"graph", a.graph.empty() ? json("erdos-renyi") : json(a.graph)},
              {"kernel", a.kernel},
              {"K", a.feat},
              {"H", a.heads},
              {"iters", a.iters},
              {"unit_weights", a.unit_weights}};
  json row = {{"kernel", a.kernel},   {"vcount", g.vcount()},       {"ecount", g.ecount()}, {"K", a.feat},
              {"H", a.heads},         {"median_ns", t.median_ns},   {"checksum", t.checksum}};
  CommandResult r;
  r.report = {{"manifest", manifest("bench-kernel", cfg, a.seed)}, {"series", json::array({row})},
              {"ledger", empty_ledger()}};
  r.csv = csv.str();
  r.text = r.csv;
  return r;
}

// ---------------------------------------------------------------------------
// mem-report

struct MemReportArgs {
  std::uint64_t vcount = 4, ecount = 8;
  LayoutMode mode = LayoutMode::dgl_emulation;
  ModelClass cls = ModelClass::A;
};

inline CommandResult cmd_mem_report(const MemReportArgs& a) {
  const auto base = layout_cost(LayoutMode::graphpy, a.vcount, a.ecount, a.cls);
  const auto mine = layout_cost(a.mode, a.vcount, a.ecount, a.cls);
  json series = json::array();
  Csv csv({"mode", "section", "category", "elements"});
  auto emit = [&](LayoutMode m, const LayoutCost& c) {
    const std::pair<const char*, const ElementCounts*> sections[] = {
        {"storage", &c.storage}, {"per_iteration", &c.per_iteration}, {"per_spmm", &c.per_spmm}};
    for (const auto& [name, counts] : sections)
      for (auto cat : kAllMemCategories)
        if ((*counts)[cat] != 0) {
          series.push_back({{"mode", to_string(m)}, {"section", name}, {"category", to_string(cat)},
                            {"elements", (*counts)[cat]}});
          csv.add(to_string(m), name, to_string(cat), (*counts)[cat]);
        }
  };
  emit(LayoutMode::graphpy, base);
  if (a.mode != LayoutMode::graphpy) emit(a.mode, mine);
  const auto bt = base.storage.total(), mt = mine.storage.total();
  const double ratio = bt == 0 ? 1.0 : static_cast<double>(mt) / static_cast<double>(bt);
  json m = manifest("mem-report",
                    {{"vcount", a.vcount}, {"ecount", a.ecount}, {"mode", to_string(a.mode)}, {"class", to_string(a.cls)}},
                    0);
  m["results"] = {{"graphpy_storage", bt}, {"mode_storage", mt}, {"ratio", ratio}};
  CommandResult r;
  r.report = {{"manifest", m}, {"series", series}, {"ledger", empty_ledger()}};
  r.csv = csv.str();
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << r.csv << "storage graphpy=" << bt << " " << to_string(a.mode) << "=" << mt << " ratio=" << ratio;
  r.text = s.str();
  return r;
}

// ---------------------------------------------------------------------------
// overhead

struct OverheadArgs {
  ModelKind model = ModelKind::gcn;
  std::uint64_t vcount = 32768;
  std::vector<std::uint64_t> edges{1000, 10000, 100000, 1000000};
  std::size_t epochs = 200;
  std::size_t feat = 16;
  std::size_t classes = 2;
  std::uint64_t seed = 0;
};

// Random features and labels on an Erdos-Renyi graph; only the timing matters.
inline NodeDataset overhead_dataset(std::uint64_t vcount, std::uint64_t slots, std::size_t feat, std::size_t classes,
                                    std::uint64_t seed) {
  NodeDataset d;
  d.graph = er_graph(vcount, slots, seed);
  std::mt19937_64 rng(seed + 17);
  d.features = uniform_tensor({vcount, feat}, rng);
  std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(classes) - 1);
  d.labels.resize(vcount);
  for (auto& l : d.labels) l = pick(rng);
  d.num_classes = static_cast<std::int64_t>(classes);
  random_split(d, seed);
  return d;
}

inline CommandResult cmd_overhead(const OverheadArgs& a) {
  require(!a.edges.empty(), ErrorCode::bad_argument, "edges list is empty");
  require(a.epochs >= 1, ErrorCode::bad_argument, "epochs must be >= 1");
  Csv csv({"vcount", "ecount", "epochs", "framework_overhead_ns", "kernel_ns", "overhead_ratio"});
  json series = json::array();
  std::vector<double> ratios;
  LedgerSnapshot last;
  for (auto e : a.edges) {
    auto data = overhead_dataset(a.vcount, e, a.feat, a.classes, a.seed);
    auto rep = train(data, {.model = a.model, .epochs = a.epochs, .seed = a.seed});
    const double ratio = rep.overhead.overhead_ratio();
    ratios.push_back(ratio);
    last = rep.ledger;
    csv.add(a.vcount, data.graph.ecount(), a.epochs, rep.overhead.framework_overhead_ns, rep.overhead.kernel_ns, ratio);
    series.push_back({{"vcount", a.vcount},
                      {"ecount", data.graph.ecount()},
                      {"epochs", a.epochs},
                      {"framework_overhead_ns", rep.overhead.framework_overhead_ns},
                      {"kernel_ns", rep.overhead.kernel_ns},
                      {"overhead_ratio", ratio}});
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < ratios.size(); ++i) decreasing = decreasing && ratios[i] < ratios[i - 1];
  bool in_range = true;
  for (double r : ratios) in_range = in_range && r >= 0.0 && r <= 1.0;
  json edges = a.edges;
  json m = manifest("overhead",
                    {{"model", to_string(a.model)}, {"vcount", a.vcount}, {"edges", edges}, {"epochs", a.epochs},
                     {"feat", a.feat}},
                    a.seed);
  m["results"] = {{"strictly_decreasing", decreasing}, {"ratios_in_unit_interval", in_range}};
  CommandResult r;
  r.report = {{"manifest", m}, {"series", series}, {"ledger", to_json(last)}};
  r.csv = csv.str();
  r.ok = in_range && decreasing;
  r.text = r.csv + (decreasing ? "overhead ratio strictly decreasing" : "overhead ratio NOT strictly decreasing");
  return r;
}

// ---------------------------------------------------------------------------
// pitfall-demo

struct PitfallArgs {
  std::string which = "sys-p3";
  std::string topology = "t4";  // t4 | ring
  std::uint64_t seed = 0;
  // eval-p3 only
  std::uint64_t vcount = 100000, ecount = 1000000;
  std::size_t feat = 16, iters = 20;
};

inline constexpr double kPitfallDetect = 1e-2;
inline constexpr double kGradPass = 1e-5;

inline UnifiedGraph demo_graph(const std::string& topology) {
  if (topology == "t4") return build_graph(t4_edges(), 4, {.symmetrize = true, .need_edge_ids = true});
  if (topology == "ring") return build_graph(ring_edges(8), 8, {.symmetrize = true, .need_edge_ids = true});
  fail(ErrorCode::bad_argument, "unknown topology '" + topology + "' (expected t4 or ring)");
}

// Relative error of the tape gradient of sum(R * f(x)) w.r.t. x against
// central differences.
inline double demo_grad_error(const Tensor& x, const Tensor& R, const TapeOptions& opts,
                              const std::function<Variable(const Variable&)>& f) {
  Tensor analytic;
  {
    Tape t(opts);
    auto in = t.input(x);
    backward(weighted_sum(f(in), R));
    analytic = *in.grad();
  }
  auto fd = oracle::finite_diff(
      [&](const Tensor& p) {
        Tape t(opts);
        return weighted_sum(f(t.input(p)), R).value()[0];
      },
      x);
  return oracle::grad_rel_error(analytic, fd);
}

inline CommandResult cmd_pitfall_demo(const PitfallArgs& a) {
  CommandResult r;
  json cfg = {{"which", a.which}, {"topology", a.topology}};
  json row;
  std::mt19937_64 rng(a.seed);

  if (a.which == "sys-p1") {
    auto g = demo_graph(a.topology);
    const Tensor X = uniform_tensor({g.vcount(), 3}, rng);
    const Tensor W = uniform_tensor({3, 2}, rng);
    auto run = [&](bool skip) -> std::optional<std::string> {
      Tape t({.pitfalls = {.skip_state_tensors = skip}});
      auto h = spmm_v_node(g, matmul(t.input(X), t.input(W)), true);
      auto y = fused_relu_dropout(h, 0.5, a.seed);
      auto loss = weighted_sum(y, Tensor(y.value().shape(), 1.0));
      try {
        backward(loss);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::state_tensor_missing) throw;
        return std::string(e.what());
      }
      return std::nullopt;
    };
    const auto bad = run(true);
    const auto good = run(false);
    row = {{"pitfall", "sys-p1"},
           {"backward_aborted", bad.has_value()},
           {"error", bad.value_or("")},
           {"correct_path_completed", !good.has_value()}};
    r.ok = bad.has_value() && !good.has_value();
  } else if (a.which == "sys-p2" || a.which == "sys-p3") {
    auto g = demo_graph(a.topology);
    const std::size_t V = g.vcount();
    const Tensor X = uniform_tensor({V, 2}, rng);
    const Tensor R = uniform_tensor({V, 2}, rng);
    const bool p2 = a.which == "sys-p2";
    const Tensor We = uniform_tensor({g.ecount(), 1}, rng);
    auto f = [&](const Variable& x) {
      if (p2) return spmm_ve_node(g, x.tape().constant(We), x);
      return spmm_v_node(g, x, true);
    };
    Pitfalls pit;
    if (p2) pit.untransposed_backward = true;
    else pit.normalize_after_backward = true;
    const double correct = demo_grad_error(X, R, {}, f);
    const double wrong = demo_grad_error(X, R, {.pitfalls = pit}, f);
    const auto& deg = g.deg();
    bool uniform = true;  // every edge joins two vertices of equal degree
    for (index_t j = 0; j < g.ecount(); ++j) uniform = uniform && deg[g.coo_rows()[j]] == deg[g.col_ids()[j]];
    // sys-p2 is visible whenever edge weights are not symmetric; sys-p3 only when some edge joins unequal degrees.
    const bool expect_detect = p2 || !uniform;
    const bool detected = wrong > kPitfallDetect;
    const bool hidden = wrong < kGradPass;
    row = {{"pitfall", a.which},
           {"uniform_degree", uniform},
           {"pitfall_rel_err", wrong},
           {"correct_rel_err", correct},
           {"detected", detected},
           {"expected_detected", expect_detect}};
    r.ok = correct < kGradPass && (expect_detect ? detected : hidden);
  } else if (a.which == "eval-p3") {
    auto g = er_graph(a.vcount, a.ecount, a.seed);
    const auto pt = time_pair(g, a.feat, a.iters, a.seed);
    const auto& native = pt.native;
    const auto& shuffled = pt.shuffled;
    const double slowdown = pt.slowdown;
    cfg["vcount"] = a.vcount;
    cfg["ecount"] = a.ecount;
    cfg["feat"] = a.feat;
    cfg["iters"] = a.iters;
    row = {{"pitfall", "eval-p3"},
           {"vcount", g.vcount()},
           {"ecount", g.ecount()},
           {"native_median_ns", native.median_ns},
           {"shuffle_median_ns", shuffled.median_ns},
           {"slowdown", slowdown},
           {"native_checksum", native.checksum},
           {"shuffle_checksum", shuffled.checksum}};
    r.ok = slowdown > 1.0 && native.checksum == shuffled.checksum;
  } else {
    fail(ErrorCode::bad_argument, "unknown demo '" + a.which + "' (expected sys-p1, sys-p2, sys-p3 or eval-p3)");
  }
  row["ok"] = r.ok;
  r.report = {{"manifest", manifest("pitfall-demo", cfg, a.seed)}, {"series", json::array({row})},
              {"ledger", empty_ledger()}};
  r.text = row.dump();
  return r;
}

}  // namespace graphpy::bench
