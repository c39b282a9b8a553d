#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tfl::theory {

// mt19937_64 with hand-rolled conversions: unlike the <random>
// distributions, these give identical streams on every standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  size_t below(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)); }  // [0, n)

 private:
  std::mt19937_64 engine_;
};

// P(w_r) = r^{-s} / Z over ranks 1..vocab_size. Vectors are indexed by r - 1.
struct ZipfModel {
  double s = 1.0;
  size_t vocab_size = 0;
  double z = 0.0;
  std::vector<double> probabilities;

  static ZipfModel create(double s, size_t vocab_size);

  double log_z() const;
  double probability(size_t rank) const { return probabilities.at(rank - 1); }
};

// Compensated sum of the probabilities (for the sums-to-one check).
double probability_mass(std::span<const double> probabilities);

std::vector<double> uniform_epsilon(size_t vocab_size, double epsilon);

// A model distribution Q with |ln Q(w_r) - ln P(w_r)| <= epsilon(r) at every
// rank, and Q a probability vector.
struct PerturbedModel {
  ZipfModel base;
  std::vector<double> epsilon;
  std::vector<double> q;
  double band_scale = 1.0;  // fraction of the nominal half-band that was finally used
  int attempts = 0;
  bool normalized = true;

  // l^m(w_r) = -ln Q(w_r)
  double marginal_loss(size_t rank) const { return -std::log(q.at(rank - 1)); }
  // delta(w_r) = ln P(w_r) - ln Q(w_r)
  double delta(size_t rank) const;
  double max_epsilon() const;
};

// Draws ln Q = ln P + u with u uniform in [-epsilon(r)/2, +epsilon(r)/2],
// renormalizes, then verifies the full epsilon bound. On violation the band
// is halved and redrawn, up to 10 attempts (kBoundUnsatisfiable after that).
// epsilon == 0 everywhere gives Q == P exactly.
PerturbedModel build_perturbed(const ZipfModel& model, std::vector<double> epsilon, uint64_t seed);

// Q(w | prev) = (1 - lambda) Q(w) + lambda K(w | prev). K is a random bigram
// kernel: row `prev` is Q reweighted by exp(U(-spread, spread)) and
// renormalized. Context index 0 is the sentence start; ranks are 1-based.
struct ConditionalModel {
  PerturbedModel marginal;
  double lambda = 0.0;
  std::vector<double> kernel;  // (vocab_size + 1) rows x vocab_size

  double conditional(size_t rank, size_t prev_rank) const;
  double row_sum(size_t prev_rank) const;
};

ConditionalModel build_conditional(PerturbedModel marginal, double lambda, uint64_t seed, double spread = 1.0);

// Max over ranks of |-ln P(w_r) - (s ln r + ln Z)|.
double self_information_check(const ZipfModel& model);

struct SemilogFit {
  struct Row {
    size_t rank;
    double log_rank;
    double loss;
  };
  std::vector<Row> rows;
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_residual = 0.0;
};

// Least-squares line through (ln r, l^m(w_r)). Rows are written to `dest`
// as tab-separated lines when given. Needs vocab_size >= 3.
SemilogFit semilog_report(const PerturbedModel& model, std::ostream* dest = nullptr);

// Ratio r_j / r_i above which a uniform bound guarantees strict ordering.
double activation_ratio(double epsilon, double s);
// eps_i + eps_j < s ln(r_j / r_i)
bool monotonicity_condition(double eps_i, double eps_j, double s, size_t rank_i, size_t rank_j);
// Smallest double x with 2 eps < s ln(x), found by bisection over the
// representable doubles. Independent of activation_ratio's closed form.
double empirical_activation_threshold(double epsilon, double s);

struct SweepResult {
  size_t pairs = 0;
  size_t active = 0;
  size_t violations = 0;
  // For uniform epsilon: pairs where the condition disagrees with
  // `ratio > activation_ratio`. 0 when epsilon is not uniform.
  size_t threshold_mismatches = 0;
};

SweepResult monotonicity_sweep(const PerturbedModel& model);

struct Decomposition {
  double loss = 0.0;           // average conditional NLL
  double neg_log_sfreq = 0.0;  // -ln sfreq under the true P
  double mean_delta = 0.0;
  double mean_eta = 0.0;
  double mean_epsilon = 0.0;
  double residual = 0.0;       // loss - (neg_log_sfreq + mean_delta + mean_eta)
};

// Ranks are 1-based; the first token is conditioned on the sentence start.
Decomposition sentence_decomposition(std::span<const size_t> ranks, const ConditionalModel& cond);

struct TflTrial {
  bool condition_holds = false;
  bool ordering_holds = false;
  double log_ratio = 0.0;  // ln(sfreq(x) / sfreq(x'))
  double threshold = 0.0;  // (eps_x + eta_x) + (eps_x' + eta_x')
};

// Requires sfreq(x) > sfreq(x'). The eta bound of each sentence is its own
// measured |mean eta|.
TflTrial tfl_condition_trial(std::span<const size_t> x, std::span<const size_t> x_prime, const ConditionalModel& cond);

// Draws ranks from the Zipf distribution by inverse CDF.
class ZipfSampler {
 public:
  explicit ZipfSampler(const ZipfModel& model);
  size_t sample(Rng& rng) const;
  std::vector<size_t> sentence(size_t length, Rng& rng) const;

 private:
  std::vector<double> cdf_;
};

struct CheckSummary {
  std::string name;
  size_t trials = 0;
  size_t violations = 0;
  double max_residual = 0.0;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct VerifyConfig {
  double s = 1.0;
  size_t vocab_size = 500;
  double epsilon = 0.05;
  double lambda = 0.3;
  size_t trials = 1000;
  uint64_t seed = 0;
  size_t max_sentence_length = 20;

  nlohmann::json to_json() const;
};

SweepResult run_monotonicity_sweeps(double s, size_t vocab_size, double epsilon, uint64_t first_seed, size_t models);

struct DecompositionRun {
  size_t sentences = 0;
  size_t identity_violations = 0;  // residual > 1e-10
  size_t delta_violations = 0;     // |mean delta| > mean epsilon
  double max_residual = 0.0;
  double mean_delta_ratio = 0.0;   // mean over sentences of |mean delta| / mean epsilon
  double mean_inv_sqrt_k = 0.0;    // mean of 1/sqrt(K), for comparison
};

DecompositionRun run_decompositions(const ConditionalModel& cond, size_t sentences, size_t max_length, uint64_t seed);

struct TflRun {
  size_t pairs = 0;
  size_t condition_fired = 0;
  size_t violations = 0;           // condition holds but loss ordering fails
  size_t ordered_without_condition = 0;
};

TflRun run_tfl_trials(const ConditionalModel& cond, size_t pairs, size_t max_length, uint64_t seed);

// Every check at the given parameters, one summary per check.
std::vector<CheckSummary> verify_theory(const VerifyConfig& config);

}  // namespace tfl::theory
