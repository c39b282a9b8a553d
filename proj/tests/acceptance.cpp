// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "tfpd_fixture.hpp"
#include "tfl/distill.hpp"
#include "tfl/frequency.hpp"
#include "tfl/ingest.hpp"
#include "tfl/policy.hpp"
#include "tfl/tfpd.hpp"
#include "tfl/theory.hpp"

namespace {

using namespace tfl;
namespace th = tfl::theory;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Zipf normalizer summed in long double, smallest terms first.
long double oracle_log_z(double s, size_t n) {
  long double z = 0;
  for (size_t r = n; r >= 1; --r) z += std::pow(static_cast<long double>(r), -static_cast<long double>(s));
  return std::log(z);
}

uint64_t ulp_distance(double a, double b) {
  const auto ia = std::bit_cast<int64_t>(a);
  const auto ib = std::bit_cast<int64_t>(b);
  return ia > ib ? static_cast<uint64_t>(ia - ib) : static_cast<uint64_t>(ib - ia);
}

void zipf_self_information(Outcome& o) {
  const auto start = Clock::now();
  double worst = 0;
  for (double s : {0.8, 1.0, 1.2}) {
    const auto model = th::ZipfModel::create(s, 10000);
    const long double log_z = oracle_log_z(s, 10000);
    for (size_t r = 1; r <= 10000; ++r) {
      const long double expected = s * std::log(static_cast<long double>(r)) + log_z;
      worst = std::max(worst, static_cast<double>(std::fabs(-std::log(model.probability(r)) - expected)));
    }
    worst = std::max(worst, th::self_information_check(model));
  }
  const double elapsed = seconds_since(start);
  o.require(worst <= 1e-12, "max residual");
  o.require(elapsed < 1.0, "runtime");
  o.detail << "max_residual=" << worst << " seconds=" << elapsed;
}

void semilog_recovery(Outcome& o) {
  double slope_err = 0, intercept_err = 0, band_worst = 0;
  for (double s : {0.8, 1.0, 1.2}) {
    const auto model = th::ZipfModel::create(s, 10000);
    const double log_z = static_cast<double>(oracle_log_z(s, 10000));
    const auto exact = th::semilog_report(th::build_perturbed(model, th::uniform_epsilon(10000, 0.0), 0));
    slope_err = std::max(slope_err, std::abs(exact.slope - s));
    intercept_err = std::max(intercept_err, std::abs(exact.intercept - log_z));
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto q = th::build_perturbed(model, th::uniform_epsilon(10000, 0.1), seed);
      const auto fit = th::semilog_report(q);
      band_worst = std::max(band_worst, fit.max_abs_residual);
      for (size_t r = 1; r <= 10000; ++r) {
        const double line = s * std::log(static_cast<double>(r)) + log_z;
        band_worst = std::max(band_worst, std::abs(-std::log(q.q[r - 1]) - line));
      }
    }
  }
  o.require(slope_err <= 1e-9, "slope");
  o.require(intercept_err <= 1e-9, "intercept");
  o.require(band_worst <= 0.2, "residual band");
  o.detail << "slope_err=" << slope_err << " intercept_err=" << intercept_err << " band_max=" << band_worst;
}

void monotonicity_sweep_check(Outcome& o) {
  const double eps = 0.05;
  size_t models = 0, active = 0, violations = 0, library_violations = 0;
  for (double s : {0.8, 1.0, 1.2}) {
    const auto base = th::ZipfModel::create(s, 500);
    const double threshold = std::exp(2 * eps / s);
    for (uint64_t seed = 0; seed < 1000; ++seed) {
      const auto q = th::build_perturbed(base, th::uniform_epsilon(500, eps), seed);
      ++models;
      // suffix maxima: q_i must beat every q_j with r_j / r_i past the threshold
      std::vector<double> suffix_max(501, 0.0);
      for (size_t r = 500; r >= 1; --r) suffix_max[r - 1] = std::max(suffix_max[r], q.q[r - 1]);
      for (size_t i = 1; i <= 500; ++i) {
        size_t j0 = i + 1;
        while (j0 <= 500 && !(eps + eps < s * std::log(static_cast<double>(j0) / static_cast<double>(i)))) ++j0;
        if (j0 > 500) continue;
        active += 500 - j0 + 1;
        if (!(q.q[i - 1] > suffix_max[j0 - 1])) ++violations;
        o.require(static_cast<double>(j0) / static_cast<double>(i) > threshold ||
                      std::abs(static_cast<double>(j0) / static_cast<double>(i) - threshold) < 1e-12,
                  "activation index");
      }
      if (seed % 50 == 0) library_violations += th::monotonicity_sweep(q).violations;
    }
  }
  uint64_t ulps = 0;
  for (double s : {0.8, 1.0, 1.2}) {
    ulps = std::max(ulps, ulp_distance(th::empirical_activation_threshold(eps, s), std::exp(2 * eps / s)));
    ulps = std::max(ulps, ulp_distance(th::activation_ratio(eps, s), std::exp(2 * eps / s)));
  }
  o.require(violations == 0 && library_violations == 0, "monotonicity violations");
  o.require(ulps <= 1, "threshold ulps");
  o.detail << "models=" << models << " active_pairs=" << active << " violations=" << violations
           << " threshold_ulps=" << ulps << " threshold(s=1)=" << th::empirical_activation_threshold(eps, 1.0);
}

void sentence_decomposition(Outcome& o) {
  const auto base = th::ZipfModel::create(1.0, 500);
  const th::ZipfSampler sampler(base);
  double worst = 0;
  size_t cases = 0, delta_ok = 0;
  for (double lambda : {0.0, 0.3, 0.7}) {
    const auto cond = th::build_conditional(th::build_perturbed(base, th::uniform_epsilon(500, 0.05), 17), lambda, 23);
    th::Rng rng(101);
    for (int n = 0; n < 100; ++n) {
      const auto ranks = sampler.sentence(1 + rng.below(20), rng);
      double loss = 0, neg_log_p = 0, delta = 0, eta = 0, eps = 0;
      size_t prev = 0;
      for (size_t r : ranks) {
        const double p = base.probability(r);
        const double q = cond.marginal.q[r - 1];
        const double qc = cond.conditional(r, prev);
        loss -= std::log(qc);
        neg_log_p -= std::log(p);
        delta += std::log(p) - std::log(q);
        eta += std::log(q) - std::log(qc);
        eps += cond.marginal.epsilon[r - 1];
        prev = r;
      }
      const double k = static_cast<double>(ranks.size());
      const auto d = th::sentence_decomposition(ranks, cond);
      worst = std::max({worst, std::abs(loss / k - (neg_log_p / k + delta / k + eta / k)), std::abs(d.residual),
                        std::abs(d.loss - loss / k)});
      delta_ok += std::abs(delta / k) <= eps / k && std::abs(d.mean_delta) <= d.mean_epsilon;
      ++cases;
    }
  }
  o.require(worst <= 1e-10, "identity residual");
  o.require(delta_ok == cases, "delta bound");
  o.detail << "sentences=" << cases << " max_residual=" << worst << " delta_within_eps=" << delta_ok;
}

void loss_ordering_trials(Outcome& o) {
  const auto start = Clock::now();
  const auto base = th::ZipfModel::create(1.0, 500);
  const auto cond = th::build_conditional(th::build_perturbed(base, th::uniform_epsilon(500, 0.05), 5), 0.3, 6);
  const th::ZipfSampler sampler(base);
  th::Rng rng(2024);

  struct Terms {
    double log_sfreq = 0, eps = 0, eta = 0, loss = 0;
  };
  auto terms = [&](const std::vector<size_t>& ranks) {
    Terms t;
    size_t prev = 0;
    for (size_t r : ranks) {
      const double qc = cond.conditional(r, prev);
      t.log_sfreq += std::log(base.probability(r));
      t.eps += cond.marginal.epsilon[r - 1];
      t.eta += std::log(cond.marginal.q[r - 1]) - std::log(qc);
      t.loss -= std::log(qc);
      prev = r;
    }
    const double k = static_cast<double>(ranks.size());
    return Terms{t.log_sfreq / k, t.eps / k, t.eta / k, t.loss / k};
  };

  size_t pairs = 0, fired = 0, violations = 0;
  while (pairs < 10000) {
    auto x = sampler.sentence(1 + rng.below(20), rng);
    auto y = sampler.sentence(1 + rng.below(20), rng);
    auto tx = terms(x);
    auto ty = terms(y);
    if (tx.log_sfreq == ty.log_sfreq) continue;
    if (tx.log_sfreq < ty.log_sfreq) {
      std::swap(x, y);
      std::swap(tx, ty);
    }
    ++pairs;
    const bool condition = tx.log_sfreq - ty.log_sfreq > (tx.eps + std::abs(tx.eta)) + (ty.eps + std::abs(ty.eta));
    fired += condition;
    if (condition && !(tx.loss < ty.loss)) ++violations;
  }
  const auto lib = th::run_tfl_trials(cond, 10000, 20, 99);
  const double elapsed = seconds_since(start);
  o.require(violations == 0 && lib.violations == 0, "ordering violations");
  o.require(fired > 0 && lib.condition_fired > 0, "condition never fired");
  o.require(elapsed < 30.0, "runtime");
  o.detail << "pairs=" << pairs + lib.pairs << " fired=" << fired + lib.condition_fired
           << " violations=" << violations + lib.violations << " seconds=" << elapsed;
}

void freq_core_properties(Outcome& o) {
  tfl::test::Gen gen(77);
  const auto vocab = gen.words(300, 6);
  TableBuilder builder;
  for (const auto& w : vocab) builder.add(w, 1 + static_cast<double>(gen.below(5000)));
  const auto table = std::move(builder).finalize("props");
  auto f = [&](const std::string& w) { return std::max(table.count(w) / table.total(), 1e-9); };
  auto oracle = [&](const std::vector<std::string>& tokens) {
    long double s = 0;
    for (const auto& t : tokens) s += std::log(static_cast<long double>(f(t)));
    return static_cast<double>(s / tokens.size());
  };
  auto score = [&](const std::vector<std::string>& tokens) {
    return sentence_frequency(tfl::test::join(tokens), table).log_sfreq;
  };
  auto random_sentence = [&] {
    std::vector<std::string> tokens;
    const size_t k = 1 + gen.below(20);
    for (size_t i = 0; i < k; ++i) tokens.push_back(gen.below(5) ? vocab[gen.below(vocab.size())] : gen.word(8));
    return tokens;
  };
  const double tol = 1e-12;
  size_t failures[4] = {0, 0, 0, 0};
  const size_t cases = 1000;
  for (size_t n = 0; n < cases; ++n) {
    auto tokens = random_sentence();
    const double base = score(tokens);
    if (std::abs(base - oracle(tokens)) > tol) ++failures[0];
    auto shuffled = tokens;
    gen.shuffle(shuffled);
    if (std::abs(score(shuffled) - base) > tol) ++failures[0];

    auto doubled = tokens;
    const size_t copies = 2 + gen.below(3);
    for (size_t c = 1; c < copies; ++c) doubled.insert(doubled.end(), tokens.begin(), tokens.end());
    if (std::abs(score(doubled) - base) > tol) ++failures[1];

    const auto& single = tokens[gen.below(tokens.size())];
    if (std::abs(std::exp(score({single})) - f(single)) > 1e-15 * f(single)) ++failures[2];

    // upgrade one token to a strictly more frequent one
    const size_t k = gen.below(tokens.size());
    std::vector<const std::string*> better;
    for (const auto& w : vocab) {
      if (f(w) > f(tokens[k])) better.push_back(&w);
    }
    if (better.empty()) {
      --n;
      continue;
    }
    auto upgraded = tokens;
    upgraded[k] = *better[gen.below(better.size())];
    if (!(score(upgraded) > base)) ++failures[3];
  }
  const char* names[] = {"permutation", "duplication", "single_token", "upgrade"};
  for (int i = 0; i < 4; ++i) {
    o.require(failures[i] == 0, names[i]);
    o.detail << names[i] << "_failures=" << failures[i] << " ";
  }
  o.detail << "cases_each=" << cases;
}

void combination_algebra(Outcome& o) {
  tfl::test::Gen gen(55);
  size_t mismatches = 0;
  for (int n = 0; n < 100; ++n) {
    const double a = gen.uniform(0, 3), b = gen.uniform(1e-3, 3), z = gen.uniform(0, 10);
    const double f1 = gen.uniform(1e-9, 1), f2 = gen.uniform(0, 1);
    mismatches += combine_frequency(f1, f2, {a, 0.0, z}) != a * f1;
    mismatches += combine_frequency(0.0, f2, {a, 0.0, z}) != 0.0;
    mismatches += combine_frequency(f1, f2, {0.0, b, z}) != b * f2;
    mismatches += combine_frequency(0.0, f2, {0.0, b, z}) != (1 + z) * b * f2;
    mismatches += combine_frequency(0.0, f2, {a, b, z}) != (1 + z) * b * f2;
    mismatches += combine_frequency(f1, f2, {a, b, z}) != a * f1 + b * f2;
  }
  o.require(mismatches == 0, "formula mismatch");
  o.detail << "tuples=100 mismatches=" << mismatches;
}

void curriculum_contracts(Outcome& o) {
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  const std::vector<double> distinct{-4.5, -1.0, -3.25, -0.5, -2.0, -6.0};
  const std::vector<double> tied{-2.0, -1.0, -2.0, -3.0, -1.0, -2.0};
  size_t orderings = 0, failures = 0;
  do {
    ++orderings;
    for (const auto* keys : {&distinct, &tied}) {
      std::vector<TrainingInstance> xs;
      std::unordered_map<std::string, double> scores;
      for (int i : perm) {
        const auto id = "id" + std::to_string(i);
        xs.push_back({id, "", {}});
        scores[id] = (*keys)[i];
      }
      // insertion sort on (key, input position) as the stable reference
      auto reference = [&](bool descending) {
        std::vector<size_t> pos(xs.size());
        std::iota(pos.begin(), pos.end(), 0);
        for (size_t i = 1; i < pos.size(); ++i) {
          for (size_t j = i; j > 0; --j) {
            const double kj = scores[xs[pos[j]].id], kp = scores[xs[pos[j - 1]].id];
            if (descending ? kj > kp : kj < kp) {
              std::swap(pos[j], pos[j - 1]);
            } else {
              break;
            }
          }
        }
        std::vector<std::string> ids;
        for (size_t p : pos) ids.push_back(xs[p].id);
        return ids;
      };
      const auto up = order_curriculum(xs, scores, OrderingMode::kAscendingFrequency);
      const auto down = order_curriculum(xs, scores, OrderingMode::kDescendingFrequency);
      const auto ext = order_curriculum(xs, scores, OrderingMode::kExternalKey);
      failures += up != reference(false);
      failures += down != reference(true);
      failures += ext != up;
      auto sorted_up = up;
      std::sort(sorted_up.begin(), sorted_up.end());
      failures += sorted_up != std::vector<std::string>{"id0", "id1", "id2", "id3", "id4", "id5"};
      if (keys == &distinct) failures += !std::equal(up.begin(), up.end(), down.rbegin());
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  o.require(orderings == 720, "permutation count");
  o.require(failures == 0, "ordering contract");
  o.detail << "orderings=" << orderings << " failures=" << failures;
}

ParaphraseJob demo_job(const std::string& id, const FrequencyTable& table) {
  return job_from_completion(id, "the dog ran", tfl::test::twenty_candidates("the dog ran"), make_table_scorer(table));
}

void pipeline_contracts(Outcome& o) {
  TableBuilder tb;
  tb.add("the", 10);
  tb.add("dog", 5);
  tb.add("ran", 5);
  const auto table = std::move(tb).finalize("demo");

  // all 27 verdict combinations
  const Verdict all[] = {Verdict::kSame, Verdict::kMaybeSame, Verdict::kNotSame};
  size_t accepted = 0, wrong = 0;
  tfl::test::TempDir combos;
  PipelineConfig cfg;
  cfg.journal = combos / "combos.log";
  TfpdPipeline pl(cfg);
  for (auto a : all) {
    for (auto b : all) {
      for (auto c : all) {
        const auto id = pl.add_job(demo_job(std::string(verdict_name(a)) + std::string(verdict_name(b)) + std::string(verdict_name(c)), table));
        pl.record_judgment({id, "annotator-1", a});
        pl.record_judgment({id, "annotator-2", b});
        const auto st = pl.record_judgment({id, "annotator-3", c});
        const bool expect = a == Verdict::kSame && b == Verdict::kSame && c == Verdict::kSame;
        accepted += st == JobStatus::kAccepted;
        wrong += (st == JobStatus::kAccepted) != expect || (st != JobStatus::kAccepted && st != JobStatus::kRejected);
      }
    }
  }
  o.require(accepted == 1 && wrong == 0, "unanimity");

  // golden end-to-end run, twice for determinism
  std::string exports[2];
  for (auto& text : exports) {
    tfl::test::TempDir dir;
    const auto base = load_table(tfl::test::golden_dir() / "tfpd_base.tbl");
    auto provider = MockProvider::from_file(tfl::test::golden_dir() / "tfpd_fixtures.tsv");
    PipelineConfig c;
    c.journal = dir / "journal.log";
    TfpdPipeline run(c);
    tfl::test::run_golden_annotation(run, base, provider);
    run.export_tfpd(dir / "tfpd.jsonl");
    text = read_file(dir / "tfpd.jsonl");
  }
  const bool golden = exports[0] == exports[1] && exports[0] == read_file(tfl::test::golden_dir() / "tfpd_expected.jsonl");
  o.require(golden, "golden export");

  // crash: a child records judgments and acknowledges each through a pipe,
  // then is killed without warning
  tfl::test::TempDir crash;
  PipelineConfig cc;
  cc.journal = crash / "journal.log";
  std::vector<uint64_t> ids;
  {
    TfpdPipeline setup(cc);
    for (int i = 0; i < 60; ++i) ids.push_back(setup.add_job(demo_job("c" + std::to_string(i), table)));
  }
  int fds[2];
  o.require(::pipe(fds) == 0, "pipe");
  std::cout.flush();
  const pid_t child = ::fork();
  if (child == 0) {
    ::close(fds[0]);
    TfpdPipeline worker(cc);
    for (uint64_t id : ids) {
      for (const auto& a : cc.annotators) {
        worker.record_judgment({id, a, Verdict::kSame, 1});
        const char ack = 1;
        if (::write(fds[1], &ack, 1) != 1) ::_exit(3);
      }
    }
    for (;;) ::pause();
  }
  ::close(fds[1]);
  size_t acked = 0;
  char buf;
  while (acked < 100 && ::read(fds[0], &buf, 1) == 1) ++acked;
  ::kill(child, SIGKILL);
  ::waitpid(child, nullptr, 0);
  // whatever else the child managed to send was also acknowledged
  while (::read(fds[0], &buf, 1) == 1) ++acked;
  ::close(fds[0]);
  // simulate a write cut off by the crash
  {
    std::ofstream torn(cc.journal, std::ios::app | std::ios::binary);
    torn << "{\"type\":\"judgment\",\"job_id\":";
  }
  TfpdPipeline recovered(cc);
  size_t present = 0;
  for (size_t k = 0; k < acked; ++k) {
    const auto job = recovered.job(ids[k / 3]);
    present += job && job->verdicts.contains(cc.annotators[k % 3]);
  }
  o.require(acked >= 100 && present == acked, "lost acknowledged judgments");
  o.detail << "combinations=27 accepted=" << accepted << " golden_match=" << (golden ? "yes" : "no")
           << " acked=" << acked << " recovered=" << present;
}

void persistence(Outcome& o) {
  tfl::test::Gen gen(99);
  TableBuilder tb;
  for (size_t i = 0; i < 100000; ++i) {
    const double count = gen.coin() ? static_cast<double>(1 + gen.below(1u << 20))
                                    : std::ldexp(gen.uniform(0.5, 1.0), static_cast<int>(gen.below(60)) - 20);
    tb.add("w" + std::to_string(i) + gen.word(4), count);
  }
  const auto table = std::move(tb).finalize("big table");
  tfl::test::TempDir dir;
  save_table(table, dir / "big.tbl");
  const auto back = load_table(dir / "big.tbl");
  size_t bit_mismatches = back.size() == table.size() ? 0 : 1;
  for (const auto& [token, count] : table.entries()) {
    bit_mismatches += std::bit_cast<uint64_t>(back.count(token)) != std::bit_cast<uint64_t>(count);
  }
  bit_mismatches += std::bit_cast<uint64_t>(back.total()) != std::bit_cast<uint64_t>(table.total());
  bit_mismatches += back.label() != table.label();
  o.require(bit_mismatches == 0, "round trip");

  std::vector<std::string> docs;
  for (int i = 0; i < 100000; ++i) docs.push_back(tfl::test::join(gen.words(1 + gen.below(10), 4)));
  const auto serial = build_table(docs, {}, "corpus");
  BuildOptions opts;
  opts.workers = 4;
  opts.batch_lines = 1000;
  const auto parallel = build_table(docs, {}, "corpus", opts);
  const bool identical = serialize_table(serial.table) == serialize_table(parallel.table) &&
                         std::bit_cast<uint64_t>(serial.table.total()) == std::bit_cast<uint64_t>(parallel.table.total());
  o.require(identical, "parallel build");
  o.detail << "entries=" << table.size() << " bit_mismatches=" << bit_mismatches
           << " parallel_identical=" << (identical ? "yes" : "no");
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
      {"zipf-self-information", zipf_self_information},
      {"semilog-recovery", semilog_recovery},
      {"monotonicity-sweep", monotonicity_sweep_check},
      {"sentence-decomposition", sentence_decomposition},
      {"loss-frequency-trials", loss_ordering_trials},
      {"freq-core-properties", freq_core_properties},
      {"combination-algebra", combination_algebra},
      {"curriculum-contracts", curriculum_contracts},
      {"pipeline-unanimity-golden-replay", pipeline_contracts},
      {"persistence", persistence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
