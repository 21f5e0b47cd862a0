#pragma once

#include <span>
#include <vector>

namespace hetdemand {

struct EssMcse {
  double ess = 0.0;
  double mcse = 0.0;
};

struct ChainDiagnostics {
  double r_hat = 0.0;
  double ess = 0.0;
  double mcse = 0.0;
};

// Split-chain potential scale reduction factor. Each input chain is cut into
// two halves of length n = floor(len / 2) (a trailing odd draw is dropped),
// then sqrt(((n - 1) / n) W + B / n) / sqrt(W) over the halves.
// Throws DegenerateChains when W = 0, InvalidArgument for fewer than 2
// halves, unequal lengths, or length < 4.
double gelman_rubin(std::span<const std::vector<double>> chains);

// Effective sample size from Geyer's initial positive sequence of summed
// autocorrelation pairs, capped at the number of draws; mcse = sd / sqrt(ess).
EssMcse ess_mcse(std::span<const double> chain);

// Multi-chain ESS: autocorrelations combine within-chain autocovariances with
// the between-chain variance (reduces to ess_mcse for a single chain).
EssMcse ess_mcse_multi(std::span<const std::vector<double>> chains);

// R-hat, ESS and MCSE for one scalar parameter across chains.
ChainDiagnostics diagnose(std::span<const std::vector<double>> chains);

}  // namespace hetdemand
