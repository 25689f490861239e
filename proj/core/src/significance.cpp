#include "minimt/eval/significance.hpp"

#include <cmath>

#include "minimt/rng.hpp"

namespace minimt::mt_eval {

namespace {

// Regularized incomplete beta via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-12) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log(1.0 - x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// Two-sided p for Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  double x = df / (df + t * t);
  return ibeta(df / 2.0, 0.5, x);
}

}  // namespace

double paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ValidationError("paired_t_test: need two aligned samples of size >= 2");
  const auto n = static_cast<double>(a.size());
  double mean = 0;
  for (size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= (n - 1.0);
  if (var <= 0.0) return mean == 0.0 ? 1.0 : 0.0;
  double t = mean / std::sqrt(var / n);
  return t_two_sided_p(t, n - 1.0);
}

SignificanceResult paired_bootstrap(
    const std::vector<std::vector<TokenId>>& hyps_a,
    const std::vector<std::vector<TokenId>>& hyps_b,
    const std::vector<std::vector<TokenId>>& refs, int resamples,
    uint64_t seed) {
  const size_t n = refs.size();
  if (hyps_a.size() != n || hyps_b.size() != n)
    throw ValidationError("paired_bootstrap: misaligned hypothesis/reference sets");
  if (n == 0) throw ValidationError("paired_bootstrap: empty input");
  if (resamples < 100)
    throw ValidationError("paired_bootstrap: resamples must be >= 100");

  std::vector<BleuStats> stats_a(n), stats_b(n);
  for (size_t i = 0; i < n; ++i) {
    stats_a[i] = bleu_sentence_stats(hyps_a[i], refs[i]);
    stats_b[i] = bleu_sentence_stats(hyps_b[i], refs[i]);
  }

  SignificanceResult res;
  res.resamples = resamples;
  {
    BleuStats full_a, full_b;
    for (size_t i = 0; i < n; ++i) {
      full_a += stats_a[i];
      full_b += stats_b[i];
    }
    res.bleu_a = bleu_from_stats(full_a);
    res.bleu_b = bleu_from_stats(full_b);
  }

  Rng rng(counter_hash(seed, 0xb007));
  double wins_a = 0;
  for (int r = 0; r < resamples; ++r) {
    BleuStats agg_a, agg_b;
    for (size_t i = 0; i < n; ++i) {
      size_t k = rng.next_below(n);
      agg_a += stats_a[k];
      agg_b += stats_b[k];
    }
    double sa = bleu_from_stats(agg_a);
    double sb = bleu_from_stats(agg_b);
    if (sa > sb)
      wins_a += 1.0;
    else if (sa == sb)
      wins_a += 0.5;
  }
  double g = wins_a / static_cast<double>(resamples);
  res.p_value = 2.0 * std::min(g, 1.0 - g);
  if (res.p_value < 0.05) res.win = g > 0.5 ? Winner::A : Winner::B;

  std::vector<double> sent_a(n), sent_b(n);
  for (size_t i = 0; i < n; ++i) {
    sent_a[i] = bleu_from_stats(stats_a[i]);
    sent_b[i] = bleu_from_stats(stats_b[i]);
  }
  res.t_p_value = n >= 2 ? paired_t_test(sent_a, sent_b) : 1.0;
  return res;
}

}  // namespace minimt::mt_eval
