#include "hetdemand/chain_diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hetdemand/error.hpp"

namespace hetdemand {
namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample variance with divisor n - 1.
double variance_of(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

// Autocovariance at `lag` with divisor n (the usual biased estimator).
double autocovariance(std::span<const double> v, double mean, std::size_t lag) {
  const std::size_t n = v.size();
  double s = 0.0;
  for (std::size_t t = 0; t + lag < n; ++t) s += (v[t] - mean) * (v[t + lag] - mean);
  return s / static_cast<double>(n);
}

void check_equal_lengths(std::span<const std::vector<double>> chains, std::size_t min_len) {
  if (chains.empty()) throw Error(ErrorCode::kInvalidArgument, "no chains supplied");
  const std::size_t len = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != len) throw Error(ErrorCode::kInvalidArgument, "chains must have equal length");
  }
  if (len < min_len) throw Error(ErrorCode::kInvalidArgument, "chains are too short");
}

}  // namespace

double gelman_rubin(std::span<const std::vector<double>> chains) {
  check_equal_lengths(chains, 4);
  const std::size_t half = chains.front().size() / 2;
  std::vector<std::span<const double>> pieces;
  pieces.reserve(2 * chains.size());
  for (const auto& c : chains) {
    pieces.emplace_back(c.data(), half);
    pieces.emplace_back(c.data() + half, half);
  }
  const double m = static_cast<double>(pieces.size());
  const double n = static_cast<double>(half);

  std::vector<double> means;
  double w = 0.0;
  for (auto piece : pieces) {
    const double mu = mean_of(piece);
    means.push_back(mu);
    w += variance_of(piece, mu);
  }
  w /= m;
  if (!(w > 0.0)) throw Error(ErrorCode::kDegenerateChains, "within-chain variance is zero");

  const double grand = mean_of(means);
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= n / (m - 1.0);

  // Algebraically sqrt(((n-1)/n W + B/n) / W); written so B = 0 gives sqrt((n-1)/n) exactly.
  return std::sqrt((n - 1.0) / n + between / (n * w));
}

EssMcse ess_mcse_multi(std::span<const std::vector<double>> chains) {
  check_equal_lengths(chains, 2);
  const std::size_t len = chains.front().size();
  const double n = static_cast<double>(len);
  const double m = static_cast<double>(chains.size());
  const double total = n * m;

  std::vector<double> means;
  double w = 0.0;
  double grand = 0.0;
  double pooled_ss = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    means.push_back(mu);
    w += variance_of(c, mu);
    grand += mu;
  }
  w /= m;
  grand /= m;
  for (const auto& c : chains) {
    for (double x : c) pooled_ss += (x - grand) * (x - grand);
  }
  const double sd = std::sqrt(pooled_ss / (total - 1.0));

  double between = 0.0;
  if (chains.size() > 1) {
    for (double mu : means) between += (mu - grand) * (mu - grand);
    between *= n / (m - 1.0);
  }
  const double var_plus = (n - 1.0) / n * w + between / n;
  if (!(var_plus > 0.0)) return {total, 0.0};

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t k = 0; k < chains.size(); ++k) acov += autocovariance(chains[k], means[k], lag);
    acov /= m;
    return 1.0 - (w - acov) / var_plus;
  };

  // Initial positive sequence: sum pairs (rho_{2t} + rho_{2t+1}) while positive.
  double tau = -1.0;
  for (std::size_t t = 0; 2 * t + 1 < len; ++t) {
    const double pair = rho(2 * t) + rho(2 * t + 1);
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  const double ess = std::min(total, total / std::max(tau, 1.0 / total));
  return {ess, sd / std::sqrt(ess)};
}

EssMcse ess_mcse(std::span<const double> chain) {
  if (chain.size() < 8) throw Error(ErrorCode::kInvalidArgument, "ess_mcse needs at least 8 draws");
  const std::vector<std::vector<double>> one{std::vector<double>(chain.begin(), chain.end())};
  return ess_mcse_multi(one);
}

ChainDiagnostics diagnose(std::span<const std::vector<double>> chains) {
  const EssMcse e = ess_mcse_multi(chains);
  double r_hat;
  try {
    r_hat = gelman_rubin(chains);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kDegenerateChains) throw;
    r_hat = std::numeric_limits<double>::quiet_NaN();
  }
  return {r_hat, e.ess, e.mcse};
}

}  // namespace hetdemand
