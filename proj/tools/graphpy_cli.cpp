// graphpy command-line tool.  Exit codes: 0 ok, 1 a check failed, 2 usage,
// IO or input-data error.

#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "graphpy/bench.hpp"

namespace gb = graphpy::bench;

namespace {

constexpr int kExitCheck = 1;
constexpr int kExitUsage = 2;

void write_file(const std::string& path, const std::string& body) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) graphpy::fail(graphpy::ErrorCode::io, "cannot open '" + path + "' for writing");
  out << body;
  if (!out) graphpy::fail(graphpy::ErrorCode::io, "write to '" + path + "' failed");
}

const std::map<std::string, graphpy::ModelKind> kModels{
    {"gcn", graphpy::ModelKind::gcn}, {"gin", graphpy::ModelKind::gin}, {"gat", graphpy::ModelKind::gat}};
const std::map<std::string, graphpy::LayoutMode> kLayouts{{"graphpy", graphpy::LayoutMode::graphpy},
                                                          {"dgl-emulation", graphpy::LayoutMode::dgl_emulation}};
const std::map<std::string, graphpy::ModelClass> kClasses{{"A", graphpy::ModelClass::A},
                                                          {"B", graphpy::ModelClass::B}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphpy: unified-storage GNN kernels, training and measurement"};
  app.require_subcommand(1);
  std::string json_path, csv_path;

  // build
  gb::BuildArgs build;
  std::string delim = " ";
  auto* c_build = app.add_subcommand("build", "parse an edge list and save the unified graph");
  c_build->add_option("--input", build.input, "edge-list text file")->required();
  c_build->add_option("--delimiter", delim, "field delimiter (default: whitespace)");
  c_build->add_option("--vcount", build.vcount, "vertex count (default: max id + 1)");
  c_build->add_flag("--symmetrize", build.symmetrize, "add reverse edges");
  c_build->add_flag("--edge-ids", build.edge_ids, "store reverse-edge ids (csc_eid)");
  c_build->add_option("--out", build.out, "binary graph output path");
  c_build->add_option("--json", json_path, "report path");

  // gen-sbm
  gb::GenSbmArgs sbm;
  bool no_edge_ids = false;
  auto* c_sbm = app.add_subcommand("gen-sbm", "write a synthetic SBM dataset (graph, features, labels, masks)");
  c_sbm->add_option("--out-dir", sbm.out_dir, "output directory")->required();
  c_sbm->add_option("--vertices", sbm.data.vertices);
  c_sbm->add_option("--classes", sbm.data.classes);
  c_sbm->add_option("--p-in", sbm.data.p_in);
  c_sbm->add_option("--p-out", sbm.data.p_out);
  c_sbm->add_option("--feature-dim", sbm.data.feature_dim);
  c_sbm->add_option("--noise", sbm.data.noise);
  c_sbm->add_option("--seed", sbm.data.seed);
  c_sbm->add_flag("--no-edge-ids", no_edge_ids, "save the graph without csc_eid");
  c_sbm->add_option("--json", json_path, "report path");

  // train
  gb::TrainArgs tr;
  std::string model = "gcn", layout = "graphpy";
  auto* c_train = app.add_subcommand("train", "train GCN/GIN/GAT full-batch with Adam");
  c_train->add_option("--graph", tr.graph, "binary graph");
  c_train->add_option("--features", tr.features, "float32 feature file");
  c_train->add_option("--labels", tr.labels, "labels, one per line");
  c_train->add_option("--train-mask", tr.train_mask);
  c_train->add_option("--val-mask", tr.val_mask);
  c_train->add_option("--test-mask", tr.test_mask);
  c_train->add_flag("--sbm", tr.builtin_sbm, "use the bundled 200-vertex SBM dataset");
  c_train->add_option("--model", model)->check(CLI::IsMember({"gcn", "gin", "gat"}));
  c_train->add_option("--heads", tr.cfg.heads);
  c_train->add_option("--hidden", tr.cfg.hidden);
  c_train->add_option("--layers", tr.cfg.layers);
  c_train->add_option("--epochs", tr.cfg.epochs);
  c_train->add_option("--lr", tr.cfg.lr);
  c_train->add_option("--dropout", tr.cfg.dropout);
  c_train->add_option("--seed", tr.cfg.seed);
  c_train->add_option("--layout", layout)->check(CLI::IsMember({"graphpy", "dgl-emulation"}));
  c_train->add_option("--memory-budget", tr.cfg.memory_budget, "element budget for the ledger (0: none)");
  c_train->add_option("--json", json_path, "report path");

  // bench-kernel
  gb::BenchKernelArgs bk;
  auto* c_bk = app.add_subcommand("bench-kernel", "time one kernel and print a CSV row with a checksum");
  c_bk->add_option("--graph", bk.graph, "binary graph (default: Erdos-Renyi from --vcount/--ecount)");
  c_bk->add_option("--vcount", bk.vcount);
  c_bk->add_option("--ecount", bk.ecount, "stored (directed) edge slots");
  c_bk->add_option("--kernel", bk.kernel)->check(CLI::IsMember(gb::kernel_names()));
  c_bk->add_option("--feat", bk.feat);
  c_bk->add_option("--heads", bk.heads);
  c_bk->add_option("--iters", bk.iters);
  c_bk->add_flag("--unit-weights", bk.unit_weights);
  c_bk->add_option("--seed", bk.seed);
  c_bk->add_option("--csv", csv_path);
  c_bk->add_option("--json", json_path);

  // mem-report
  gb::MemReportArgs mr;
  std::string mode = "dgl-emulation", cls = "A";
  auto* c_mr = app.add_subcommand("mem-report", "storage formulas for a layout mode");
  c_mr->add_option("--vcount", mr.vcount);
  c_mr->add_option("--ecount", mr.ecount);
  c_mr->add_option("--mode", mode)->check(CLI::IsMember({"graphpy", "dgl-emulation"}));
  c_mr->add_option("--class", cls)->check(CLI::IsMember({"A", "B"}));
  c_mr->add_option("--csv", csv_path);
  c_mr->add_option("--json", json_path);

  // overhead
  gb::OverheadArgs oh;
  std::string oh_model = "gcn";
  auto* c_oh = app.add_subcommand("overhead", "framework-overhead ratio across graph sizes");
  c_oh->add_option("--model", oh_model)->check(CLI::IsMember({"gcn", "gin", "gat"}));
  c_oh->add_option("--vcount", oh.vcount);
  c_oh->add_option("--edges-list", oh.edges, "comma-separated stored edge counts")->delimiter(',');
  c_oh->add_option("--epochs", oh.epochs);
  c_oh->add_option("--feat", oh.feat);
  c_oh->add_option("--seed", oh.seed);
  c_oh->add_option("--csv", csv_path);
  c_oh->add_option("--json", json_path);

  // pitfall-demo
  gb::PitfallArgs pf;
  auto* c_pf = app.add_subcommand("pitfall-demo", "show what each systems pitfall does to gradients or speed");
  c_pf->add_option("--which", pf.which)->required()->check(CLI::IsMember({"sys-p1", "sys-p2", "sys-p3", "eval-p3"}));
  c_pf->add_option("--topology", pf.topology)->check(CLI::IsMember({"t4", "ring"}));
  c_pf->add_option("--seed", pf.seed);
  c_pf->add_option("--vcount", pf.vcount);
  c_pf->add_option("--ecount", pf.ecount);
  c_pf->add_option("--feat", pf.feat);
  c_pf->add_option("--iters", pf.iters);
  c_pf->add_option("--json", json_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    gb::CommandResult res;
    if (*c_build) {
      if (delim == "\\t" || delim == "tab") delim = "\t";
      if (delim.size() != 1) graphpy::fail(graphpy::ErrorCode::bad_argument, "--delimiter must be one character");
      build.delimiter = delim[0];
      res = gb::cmd_build(build);
    } else if (*c_sbm) {
      sbm.edge_ids = !no_edge_ids;
      res = gb::cmd_gen_sbm(sbm);
    } else if (*c_train) {
      tr.cfg.model = kModels.at(model);
      tr.cfg.layout = kLayouts.at(layout);
      res = gb::cmd_train(tr);
    } else if (*c_bk) {
      res = gb::cmd_bench_kernel(bk);
    } else if (*c_mr) {
      mr.mode = kLayouts.at(mode);
      mr.cls = kClasses.at(cls);
      res = gb::cmd_mem_report(mr);
    } else if (*c_oh) {
      oh.model = kModels.at(oh_model);
      res = gb::cmd_overhead(oh);
    } else if (*c_pf) {
      res = gb::cmd_pitfall_demo(pf);
    }
    write_file(json_path, res.report.dump(2) + "\n");
    write_file(csv_path, res.csv);
    std::cout << res.text << "\n";
    return res.ok ? 0 : kExitCheck;
  } catch (const graphpy::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
