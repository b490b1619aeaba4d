// Train a 2-layer GCN on the bundled SBM graph, then repeat with the
// emulated two-copy layout and compare memory and losses.

#include <cstdio>

#include "graphpy/graphpy.hpp"

int main() {
  using namespace graphpy;
  const auto data = make_sbm_dataset();
  std::printf("graph: %llu vertices, %llu stored edges\n", static_cast<unsigned long long>(data.graph.vcount()),
              static_cast<unsigned long long>(data.graph.ecount()));

  TrainConfig cfg{.model = ModelKind::gcn, .epochs = 100, .seed = 7};
  const auto rep = train(data, cfg);
  for (const auto& e : rep.epochs)
    if (e.epoch % 20 == 0) std::printf("epoch %3zu  loss %.4f  train acc %.3f\n", e.epoch, e.loss, e.acc.train);
  std::printf("final  train %.3f  val %.3f  test %.3f\n", rep.final.train, rep.final.val, rep.final.test);
  std::printf("overhead ratio %.3f (kernel %lld ns)\n", rep.overhead.overhead_ratio(),
              static_cast<long long>(rep.overhead.kernel_ns));

  cfg.layout = LayoutMode::dgl_emulation;
  const auto emu = train(data, cfg);
  std::printf("storage elements: graphpy %lld, emulated %lld\n", static_cast<long long>(rep.layout.storage.total()),
              static_cast<long long>(emu.layout.storage.total()));
  std::printf("peak ledger: graphpy %lld, emulated %lld\n", static_cast<long long>(rep.ledger.peak_total),
              static_cast<long long>(emu.ledger.peak_total));
  std::printf("same final loss: %s\n", rep.epochs.back().loss == emu.epochs.back().loss ? "yes" : "no");
  return rep.final.train >= 0.9 ? 0 : 1;
}
