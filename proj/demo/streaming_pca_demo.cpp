// Streams a synthetic 2000 x 500 matrix with a slowly decaying spectrum
// through single_pass_pca and compares the result with the known spectrum.

#include <cstdio>

#include "sppca/sppca.hpp"

int main() {
  using namespace sppca;
  const std::size_t m = 2000, n = 500;
  auto stream = synth_stream(SpectrumSpec::type(2), m, n, /*seed=*/3, /*block_rows=*/100);

  PcaConfig cfg;
  cfg.k = 10;
  cfg.oversample = 10;
  cfg.block = 10;
  cfg.seed = 1;

  PassCounter counted(*stream);
  RunStats stats;
  const TruncatedSvd svd = single_pass_pca(counted, cfg, &stats);

  std::printf("passes over the data: %zu\n", counted.passes_completed());
  std::printf("retained floats: %zu (bound (m+2n)l + n = %zu)\n", stats.memory.peak(),
              (m + 2 * n) * cfg.width() + n);
  std::printf("  i   computed          true\n");
  for (std::size_t i = 0; i < svd.s.size(); ++i)
    std::printf("%3zu   %.12f  %.12f\n", i + 1, svd.s[i], spectrum_value(SpectrumSpec::type(2), i + 1));
}
