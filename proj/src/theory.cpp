#include "tfl/theory.hpp"

#include <algorithm>
#include <bit>
#include <ostream>

#include "tfl/error.hpp"
#include "tfl/records.hpp"

namespace tfl::theory {

ZipfModel ZipfModel::create(double s, size_t vocab_size) {
  if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::kConfig, "zipf exponent must be positive");
  if (vocab_size < 2) throw Error(ErrorCode::kConfig, "vocabulary needs at least two ranks");
  ZipfModel m;
  m.s = s;
  m.vocab_size = vocab_size;
  std::vector<double> weights(vocab_size);
  for (size_t r = 1; r <= vocab_size; ++r) weights[r - 1] = std::pow(static_cast<double>(r), -s);
  // smallest terms first
  double z = 0.0;
  for (size_t r = vocab_size; r >= 1; --r) z += weights[r - 1];
  m.z = z;
  m.probabilities.resize(vocab_size);
  for (size_t r = 0; r < vocab_size; ++r) {
    m.probabilities[r] = weights[r] / z;
    if (r > 0 && !(m.probabilities[r] < m.probabilities[r - 1])) {
      throw Error(ErrorCode::kConfig, "zipf probabilities not strictly decreasing at rank " + std::to_string(r + 1));
    }
  }
  return m;
}

double ZipfModel::log_z() const { return std::log(z); }

double probability_mass(std::span<const double> probabilities) {
  double sum = 0.0;
  double c = 0.0;
  for (double p : probabilities) {
    const double t = sum + p;
    c += std::abs(sum) >= std::abs(p) ? (sum - t) + p : (p - t) + sum;
    sum = t;
  }
  return sum + c;
}

std::vector<double> uniform_epsilon(size_t vocab_size, double epsilon) {
  return std::vector<double>(vocab_size, epsilon);
}

double PerturbedModel::delta(size_t rank) const { return std::log(base.probability(rank)) - std::log(q.at(rank - 1)); }

double PerturbedModel::max_epsilon() const {
  return epsilon.empty() ? 0.0 : *std::max_element(epsilon.begin(), epsilon.end());
}

PerturbedModel build_perturbed(const ZipfModel& model, std::vector<double> epsilon, uint64_t seed) {
  if (epsilon.size() != model.vocab_size) {
    throw Error(ErrorCode::kConfig, "epsilon needs one entry per rank (" + std::to_string(model.vocab_size) + ")");
  }
  for (double e : epsilon) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw Error(ErrorCode::kConfig, "epsilon must be finite and >= 0");
  }
  PerturbedModel out;
  out.base = model;
  out.epsilon = std::move(epsilon);
  if (std::all_of(out.epsilon.begin(), out.epsilon.end(), [](double e) { return e == 0.0; })) {
    out.q = model.probabilities;
    out.attempts = 1;
    return out;
  }

  const size_t n = model.vocab_size;
  std::vector<double> log_p(n);
  for (size_t i = 0; i < n; ++i) log_p[i] = std::log(model.probabilities[i]);

  Rng rng(seed);
  std::vector<double> log_q(n);
  double scale = 1.0;
  constexpr int kMaxAttempts = 10;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt, scale *= 0.5) {
    for (size_t i = 0; i < n; ++i) log_q[i] = log_p[i] + (rng.uniform() - 0.5) * out.epsilon[i] * scale;
    const double top = *std::max_element(log_q.begin(), log_q.end());
    double mass = 0.0;
    for (double v : log_q) mass += std::exp(v - top);
    const double log_norm = top + std::log(mass);
    out.q.resize(n);
    for (size_t i = 0; i < n; ++i) out.q[i] = std::exp(log_q[i] - log_norm);

    bool ok = true;
    for (size_t i = 0; i < n && ok; ++i) ok = std::abs(std::log(out.q[i]) - log_p[i]) <= out.epsilon[i];
    if (ok) {
      out.band_scale = scale;
      out.attempts = attempt;
      return out;
    }
  }
  throw Error(ErrorCode::kBoundUnsatisfiable,
              "could not satisfy the log-domain bound after " + std::to_string(kMaxAttempts) + " attempts");
}

double ConditionalModel::conditional(size_t rank, size_t prev_rank) const {
  const size_t n = marginal.base.vocab_size;
  return (1.0 - lambda) * marginal.q.at(rank - 1) + lambda * kernel.at(prev_rank * n + rank - 1);
}

double ConditionalModel::row_sum(size_t prev_rank) const {
  std::vector<double> row(marginal.base.vocab_size);
  for (size_t r = 1; r <= row.size(); ++r) row[r - 1] = conditional(r, prev_rank);
  return probability_mass(row);
}

ConditionalModel build_conditional(PerturbedModel marginal, double lambda, uint64_t seed, double spread) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::kConfig, "lambda must lie in [0, 1]");
  if (!(spread >= 0.0)) throw Error(ErrorCode::kConfig, "kernel spread must be >= 0");
  ConditionalModel cond;
  cond.lambda = lambda;
  const size_t n = marginal.base.vocab_size;
  cond.kernel.resize((n + 1) * n);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (size_t row = 0; row <= n; ++row) {
    double* k = cond.kernel.data() + row * n;
    for (size_t i = 0; i < n; ++i) k[i] = marginal.q[i] * std::exp(rng.uniform(-spread, spread));
    const double mass = probability_mass({k, n});
    for (size_t i = 0; i < n; ++i) k[i] /= mass;
  }
  cond.marginal = std::move(marginal);
  for (size_t row = 0; row <= n; ++row) {
    if (std::abs(cond.row_sum(row) - 1.0) > 1e-10) {
      throw Error(ErrorCode::kBoundUnsatisfiable, "conditional row " + std::to_string(row) + " does not sum to 1");
    }
  }
  return cond;
}

double self_information_check(const ZipfModel& model) {
  const double log_z = model.log_z();
  double worst = 0.0;
  for (size_t r = 1; r <= model.vocab_size; ++r) {
    const double ideal_nll = -std::log(model.probability(r));
    const double affine = model.s * std::log(static_cast<double>(r)) + log_z;
    worst = std::max(worst, std::abs(ideal_nll - affine));
  }
  return worst;
}

SemilogFit semilog_report(const PerturbedModel& model, std::ostream* dest) {
  const size_t n = model.base.vocab_size;
  if (n < 3) throw Error(ErrorCode::kPrecondition, "semi-log fit needs at least three ranks");
  SemilogFit fit;
  fit.rows.reserve(n);
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (size_t r = 1; r <= n; ++r) {
    fit.rows.push_back({r, std::log(static_cast<double>(r)), model.marginal_loss(r)});
    mean_x += fit.rows.back().log_rank;
    mean_y += fit.rows.back().loss;
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& row : fit.rows) {
    sxx += (row.log_rank - mean_x) * (row.log_rank - mean_x);
    sxy += (row.log_rank - mean_x) * (row.loss - mean_y);
  }
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;
  for (const auto& row : fit.rows) {
    fit.max_abs_residual =
        std::max(fit.max_abs_residual, std::abs(row.loss - (fit.slope * row.log_rank + fit.intercept)));
  }
  if (dest != nullptr) {
    *dest << "# rank\tln_rank\tmarginal_loss\n";
    for (const auto& row : fit.rows) {
      *dest << row.rank << '\t' << format_double(row.log_rank) << '\t' << format_double(row.loss) << '\n';
    }
    *dest << "# slope\t" << format_double(fit.slope) << "\n# intercept\t" << format_double(fit.intercept) << '\n';
  }
  return fit;
}

double activation_ratio(double epsilon, double s) { return std::exp(2.0 * epsilon / s); }

bool monotonicity_condition(double eps_i, double eps_j, double s, size_t rank_i, size_t rank_j) {
  return eps_i + eps_j < s * std::log(static_cast<double>(rank_j) / static_cast<double>(rank_i));
}

double empirical_activation_threshold(double epsilon, double s) {
  auto fires = [&](double x) { return epsilon + epsilon < s * std::log(x); };
  double hi = 2.0;
  while (!fires(hi)) hi *= 2.0;
  auto lo_bits = std::bit_cast<uint64_t>(1.0);
  auto hi_bits = std::bit_cast<uint64_t>(hi);
  while (hi_bits - lo_bits > 1) {
    const uint64_t mid = lo_bits + (hi_bits - lo_bits) / 2;
    if (fires(std::bit_cast<double>(mid))) {
      hi_bits = mid;
    } else {
      lo_bits = mid;
    }
  }
  return std::bit_cast<double>(hi_bits);
}

SweepResult monotonicity_sweep(const PerturbedModel& model) {
  const size_t n = model.base.vocab_size;
  const double s = model.base.s;
  std::vector<double> loss(n);
  for (size_t r = 1; r <= n; ++r) loss[r - 1] = model.marginal_loss(r);
  const bool uniform = std::all_of(model.epsilon.begin(), model.epsilon.end(),
                                   [&](double e) { return e == model.epsilon.front(); });
  const double threshold = activation_ratio(model.epsilon.front(), s);

  SweepResult out;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = i + 1; j <= n; ++j) {
      ++out.pairs;
      const bool fires = monotonicity_condition(model.epsilon[i - 1], model.epsilon[j - 1], s, i, j);
      if (uniform) {
        const double ratio = static_cast<double>(j) / static_cast<double>(i);
        if ((ratio > threshold) != fires) ++out.threshold_mismatches;
      }
      if (!fires) continue;
      ++out.active;
      if (!(loss[i - 1] < loss[j - 1])) ++out.violations;
    }
  }
  return out;
}

Decomposition sentence_decomposition(std::span<const size_t> ranks, const ConditionalModel& cond) {
  const size_t n = cond.marginal.base.vocab_size;
  if (ranks.empty()) throw Error(ErrorCode::kPrecondition, "sentence needs at least one token");
  for (size_t r : ranks) {
    if (r < 1 || r > n) throw Error(ErrorCode::kPrecondition, "rank " + std::to_string(r) + " outside vocabulary");
  }
  double loss = 0.0;
  double log_p = 0.0;
  double delta = 0.0;
  double eta = 0.0;
  double eps = 0.0;
  size_t prev = 0;
  for (size_t r : ranks) {
    const double lp = std::log(cond.marginal.base.probability(r));
    const double lq = std::log(cond.marginal.q[r - 1]);
    const double lc = std::log(cond.conditional(r, prev));
    loss += -lc;
    log_p += lp;
    delta += lp - lq;
    eta += lq - lc;
    eps += cond.marginal.epsilon[r - 1];
    prev = r;
  }
  const double k = static_cast<double>(ranks.size());
  Decomposition d;
  d.loss = loss / k;
  d.neg_log_sfreq = -(log_p / k);
  d.mean_delta = delta / k;
  d.mean_eta = eta / k;
  d.mean_epsilon = eps / k;
  d.residual = d.loss - (d.neg_log_sfreq + d.mean_delta + d.mean_eta);
  return d;
}

TflTrial tfl_condition_trial(std::span<const size_t> x, std::span<const size_t> x_prime,
                             const ConditionalModel& cond) {
  const auto dx = sentence_decomposition(x, cond);
  const auto dxp = sentence_decomposition(x_prime, cond);
  TflTrial t;
  t.log_ratio = dxp.neg_log_sfreq - dx.neg_log_sfreq;
  if (!(t.log_ratio > 0.0)) throw Error(ErrorCode::kPrecondition, "needs sfreq(x) > sfreq(x')");
  t.threshold = (dx.mean_epsilon + std::abs(dx.mean_eta)) + (dxp.mean_epsilon + std::abs(dxp.mean_eta));
  t.condition_holds = t.log_ratio > t.threshold;
  t.ordering_holds = dx.loss < dxp.loss;
  return t;
}

ZipfSampler::ZipfSampler(const ZipfModel& model) : cdf_(model.vocab_size) {
  double acc = 0.0;
  for (size_t i = 0; i < cdf_.size(); ++i) cdf_[i] = (acc += model.probabilities[i]);
  cdf_.back() = std::max(cdf_.back(), 1.0);
}

size_t ZipfSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  return static_cast<size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin()) + 1;
}

std::vector<size_t> ZipfSampler::sentence(size_t length, Rng& rng) const {
  std::vector<size_t> out(length);
  for (auto& r : out) r = sample(rng);
  return out;
}

nlohmann::json CheckSummary::to_json() const {
  return {{"name", name}, {"trials", trials}, {"violations", violations}, {"max_residual", max_residual},
          {"details", details}};
}

nlohmann::json VerifyConfig::to_json() const {
  return {{"s", s}, {"vocab", vocab_size}, {"eps", epsilon}, {"lambda", lambda}, {"trials", trials},
          {"seed", seed}, {"max_sentence_length", max_sentence_length}};
}

SweepResult run_monotonicity_sweeps(double s, size_t vocab_size, double epsilon, uint64_t first_seed, size_t models) {
  const auto zipf = ZipfModel::create(s, vocab_size);
  SweepResult total;
  for (size_t m = 0; m < models; ++m) {
    const auto perturbed = build_perturbed(zipf, uniform_epsilon(vocab_size, epsilon), first_seed + m);
    const auto r = monotonicity_sweep(perturbed);
    total.pairs += r.pairs;
    total.active += r.active;
    total.violations += r.violations;
    total.threshold_mismatches += r.threshold_mismatches;
  }
  return total;
}

DecompositionRun run_decompositions(const ConditionalModel& cond, size_t sentences, size_t max_length, uint64_t seed) {
  const ZipfSampler sampler(cond.marginal.base);
  Rng rng(seed);
  DecompositionRun run;
  double ratio_sum = 0.0;
  double inv_sqrt_sum = 0.0;
  size_t ratio_count = 0;
  for (size_t i = 0; i < sentences; ++i) {
    const size_t k = 1 + rng.below(max_length);
    const auto d = sentence_decomposition(sampler.sentence(k, rng), cond);
    ++run.sentences;
    run.max_residual = std::max(run.max_residual, std::abs(d.residual));
    if (std::abs(d.residual) > 1e-10) ++run.identity_violations;
    if (std::abs(d.mean_delta) > d.mean_epsilon) ++run.delta_violations;
    if (d.mean_epsilon > 0.0) {
      ratio_sum += std::abs(d.mean_delta) / d.mean_epsilon;
      inv_sqrt_sum += 1.0 / std::sqrt(static_cast<double>(k));
      ++ratio_count;
    }
  }
  if (ratio_count > 0) {
    run.mean_delta_ratio = ratio_sum / static_cast<double>(ratio_count);
    run.mean_inv_sqrt_k = inv_sqrt_sum / static_cast<double>(ratio_count);
  }
  return run;
}

TflRun run_tfl_trials(const ConditionalModel& cond, size_t pairs, size_t max_length, uint64_t seed) {
  const ZipfSampler sampler(cond.marginal.base);
  Rng rng(seed);
  TflRun run;
  while (run.pairs < pairs) {
    auto x = sampler.sentence(1 + rng.below(max_length), rng);
    auto xp = sampler.sentence(1 + rng.below(max_length), rng);
    const double lx = sentence_decomposition(x, cond).neg_log_sfreq;
    const double lxp = sentence_decomposition(xp, cond).neg_log_sfreq;
    if (lx == lxp) continue;
    if (lx > lxp) std::swap(x, xp);  // x is the more frequent sentence
    const auto t = tfl_condition_trial(x, xp, cond);
    ++run.pairs;
    if (t.condition_holds) {
      ++run.condition_fired;
      if (!t.ordering_holds) ++run.violations;
    } else if (t.ordering_holds) {
      ++run.ordered_without_condition;
    }
  }
  return run;
}

std::vector<CheckSummary> verify_theory(const VerifyConfig& config) {
  std::vector<CheckSummary> out;
  const auto zipf = ZipfModel::create(config.s, config.vocab_size);

  {
    CheckSummary c{"self_information", config.vocab_size, 0, self_information_check(zipf)};
    c.violations = c.max_residual <= 1e-12 ? 0 : 1;
    c.details["probability_mass_error"] = std::abs(probability_mass(zipf.probabilities) - 1.0);
    out.push_back(std::move(c));
  }
  if (config.vocab_size >= 3) {
    const auto exact = semilog_report(build_perturbed(zipf, uniform_epsilon(config.vocab_size, 0.0), config.seed));
    CheckSummary c{"semilog_exact", 1, 0, std::max(std::abs(exact.slope - config.s),
                                                   std::abs(exact.intercept - zipf.log_z()))};
    c.violations = c.max_residual <= 1e-9 ? 0 : 1;
    c.details = {{"slope", exact.slope}, {"intercept", exact.intercept}, {"log_z", zipf.log_z()}};
    out.push_back(std::move(c));

    const auto banded =
        semilog_report(build_perturbed(zipf, uniform_epsilon(config.vocab_size, config.epsilon), config.seed));
    CheckSummary b{"semilog_band", config.vocab_size, 0, banded.max_abs_residual};
    for (const auto& row : banded.rows) {
      if (std::abs(row.loss - (banded.slope * row.log_rank + banded.intercept)) > 2.0 * config.epsilon) ++b.violations;
    }
    b.details = {{"slope", banded.slope}, {"intercept", banded.intercept}, {"band", 2.0 * config.epsilon}};
    out.push_back(std::move(b));
  }
  {
    const double analytic = activation_ratio(config.epsilon, config.s);
    const double empirical = empirical_activation_threshold(config.epsilon, config.s);
    const auto ulps = static_cast<double>(std::max(std::bit_cast<uint64_t>(analytic), std::bit_cast<uint64_t>(empirical)) -
                                          std::min(std::bit_cast<uint64_t>(analytic), std::bit_cast<uint64_t>(empirical)));
    CheckSummary c{"activation_threshold", 1, ulps <= 1.0 ? 0u : 1u, ulps};
    c.details = {{"analytic", analytic}, {"empirical", empirical}};
    out.push_back(std::move(c));
  }
  {
    const auto sweep = run_monotonicity_sweeps(config.s, config.vocab_size, config.epsilon, config.seed, config.trials);
    CheckSummary c{"monotonicity", config.trials, sweep.violations, 0.0};
    c.details = {{"pairs", sweep.pairs}, {"active_pairs", sweep.active},
                 {"threshold_mismatches", sweep.threshold_mismatches}};
    out.push_back(std::move(c));
  }
  const auto cond = build_conditional(
      build_perturbed(zipf, uniform_epsilon(config.vocab_size, config.epsilon), config.seed), config.lambda,
      config.seed);
  {
    const auto run = run_decompositions(cond, config.trials, config.max_sentence_length, config.seed);
    CheckSummary c{"sentence_decomposition", run.sentences, run.identity_violations + run.delta_violations,
                   run.max_residual};
    c.details = {{"identity_violations", run.identity_violations},
                 {"delta_bound_violations", run.delta_violations},
                 {"mean_abs_delta_over_eps", run.mean_delta_ratio},
                 {"mean_inv_sqrt_k", run.mean_inv_sqrt_k}};
    out.push_back(std::move(c));
  }
  {
    const auto run = run_tfl_trials(cond, config.trials, config.max_sentence_length, config.seed);
    CheckSummary c{"tfl_condition", run.pairs, run.violations, 0.0};
    c.details = {{"condition_fired", run.condition_fired},
                 {"ordered_without_condition", run.ordered_without_condition},
                 {"ordered_without_condition_fraction",
                  run.pairs == 0 ? 0.0 : static_cast<double>(run.ordered_without_condition) / run.pairs}};
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace tfl::theory
