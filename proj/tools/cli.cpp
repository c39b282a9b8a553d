#include "cli.hpp"

#include <csignal>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfl/distill.hpp"
#include "tfl/error.hpp"
#include "tfl/frequency.hpp"
#include "tfl/ingest.hpp"
#include "tfl/policy.hpp"
#include "tfl/provider.hpp"
#include "tfl/records.hpp"
#include "tfl/tfpd.hpp"
#include "tfl/tfpd_server.hpp"
#include "tfl/theory.hpp"

namespace tfl::cli {
namespace {

using nlohmann::json;

struct TokenizerOpts {
  bool no_lowercase = false;

  void add(CLI::App& app) { app.add_flag("--no-lowercase", no_lowercase, "Keep letter case when tokenizing"); }
  TokenizerConfig config() const { return {!no_lowercase}; }
  json to_json() const { return {{"lowercase", !no_lowercase}}; }
};

struct ProviderOpts {
  std::string kind = "mock";
  std::string fixtures;
  std::string base_url;
  std::string model;
  int max_retries = 3;
  int backoff_ms = 200;
  int timeout_s = 60;

  void add(CLI::App& app) {
    app.add_option("--provider", kind, "mock or http")->check(CLI::IsMember({"mock", "http"}));
    app.add_option("--fixtures", fixtures, "Mock fixture file (prompt-hash<TAB>completion)");
    app.add_option("--base-url", base_url, "Chat-completions base URL, e.g. http://host:port/v1");
    app.add_option("--model", model, "Model name sent to the HTTP provider");
    app.add_option("--max-retries", max_retries, "Retries for transient HTTP failures")->check(CLI::NonNegativeNumber);
    app.add_option("--backoff-ms", backoff_ms, "Initial retry backoff")->check(CLI::NonNegativeNumber);
    app.add_option("--timeout", timeout_s, "HTTP timeout in seconds")->check(CLI::PositiveNumber);
  }

  ProviderKind kind_config() const {
    if (kind == "mock") {
      if (fixtures.empty()) throw Error(ErrorCode::kConfig, "--fixtures is required for the mock provider");
      return MockConfig{fixtures};
    }
    if (base_url.empty()) throw Error(ErrorCode::kConfig, "--base-url is required for the http provider");
    HttpConfig http;
    http.base_url = base_url;
    http.model = model;
    http.max_retries = max_retries;
    http.initial_backoff = std::chrono::milliseconds(backoff_ms);
    http.timeout = std::chrono::seconds(timeout_s);
    return http;
  }

  json to_json() const {
    json j = {{"provider", kind}};
    if (kind == "mock") {
      j["fixtures"] = fixtures;
    } else {
      j["base_url"] = base_url;
      j["model"] = model;
      j["max_retries"] = max_retries;
      j["backoff_ms"] = backoff_ms;
      j["timeout_s"] = timeout_s;
      j["token_from_env"] = std::getenv(kProviderTokenEnv) != nullptr;
    }
    return j;
  }
};

// Base table plus optional distilled table combined with alpha/beta/zeta.
struct ScoringOpts {
  std::string table;
  std::string distilled;
  double floor = SmoothingPolicy{}.floor;
  CombineConfig combine;
  TokenizerOpts tokenizer;

  void add(CLI::App& app, bool require_distilled = false) {
    app.add_option("--table", table, "Base frequency table")->required();
    auto* d = app.add_option("--distilled", distilled, "Distilled frequency table (enables combination)");
    if (require_distilled) d->required();
    app.add_option("--floor", floor, "Relative-frequency floor for unseen tokens")->check(CLI::PositiveNumber);
    app.add_option("--alpha", combine.alpha, "Weight on the base frequency")->check(CLI::NonNegativeNumber);
    app.add_option("--beta", combine.beta, "Weight on the distilled frequency")->check(CLI::NonNegativeNumber);
    app.add_option("--zeta", combine.zeta, "Strengthening for tokens unseen in the base")->check(CLI::NonNegativeNumber);
    tokenizer.add(app);
  }

  json to_json() const {
    json j = {{"table", table}, {"floor", floor}, {"tokenizer", tokenizer.to_json()}};
    if (!distilled.empty()) {
      j["distilled"] = distilled;
      j["alpha"] = combine.alpha;
      j["beta"] = combine.beta;
      j["zeta"] = combine.zeta;
    }
    return j;
  }
};

// Owns the loaded tables and hands out a scorer over them.
class ScoringContext {
 public:
  explicit ScoringContext(const ScoringOpts& opts) : smoothing_{opts.floor}, tokenizer_(opts.tokenizer.config()) {
    base_ = load_table(opts.table);
    if (!opts.distilled.empty()) {
      distilled_ = load_table(opts.distilled);
      combined_.emplace(base_, distilled_, opts.combine);
    }
  }
  ScoringContext(const ScoringContext&) = delete;
  ScoringContext& operator=(const ScoringContext&) = delete;

  SentenceScorer scorer() const {
    if (combined_) return make_combined_scorer(*combined_, smoothing_, tokenizer_);
    return make_table_scorer(base_, smoothing_, tokenizer_);
  }

 private:
  SmoothingPolicy smoothing_;
  TokenizerConfig tokenizer_;
  FrequencyTable base_;
  FrequencyTable distilled_;
  std::optional<CombinedTable> combined_;
};

json score_json(const SentenceScore& s) {
  return {{"token_count", s.token_count}, {"log_sfreq", s.log_sfreq}, {"zipf_sfreq", s.zipf_sfreq}};
}

std::string id_string(const json& record, size_t line) {
  if (!record.contains("id")) throw Error(ErrorCode::kFormat, "record " + std::to_string(line) + " has no id");
  const auto& id = record["id"];
  return id.is_string() ? id.get<std::string>() : id.dump();
}

std::vector<std::string> read_texts(const std::string& path, const std::string& format) {
  std::vector<std::string> texts;
  if (format == "jsonl") {
    size_t n = 0;
    for (const auto& r : read_jsonl(path)) {
      ++n;
      if (!r.is_object() || !r.contains("text") || !r["text"].is_string()) {
        throw Error(ErrorCode::kFormat, path + ": record " + std::to_string(n) + " has no text field");
      }
      texts.push_back(r["text"].get<std::string>());
    }
  } else {
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) texts.push_back(line);
    }
  }
  return texts;
}

void emit(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

void emit_records(const std::string& out_path, const std::vector<json>& records, std::ostream& out) {
  if (out_path.empty()) {
    for (const auto& r : records) emit(out, r);
  } else {
    write_file_atomic(out_path, to_jsonl(records));
    emit(out, {{"written", out_path}, {"records", records.size()}});
  }
}

std::vector<double> parse_edges(const std::string& spec) {
  std::vector<double> edges;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_double(item, v)) throw Error(ErrorCode::kConfig, "invalid histogram edge '" + item + "'");
    edges.push_back(v);
  }
  return edges;
}

std::vector<ParaphraseSet> read_sets(const std::string& path) {
  std::vector<ParaphraseSet> sets;
  size_t n = 0;
  for (const auto& r : read_jsonl(path)) {
    ++n;
    ParaphraseSet set;
    set.id = id_string(r, n);
    if (!r.contains("candidates") || !r["candidates"].is_array()) {
      throw Error(ErrorCode::kFormat, path + ": record " + std::to_string(n) + " has no candidates array");
    }
    set.candidates = r["candidates"].get<std::vector<std::string>>();
    sets.push_back(std::move(set));
  }
  return sets;
}

TfpdServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Textual-frequency toolkit: frequency tables, sentence scoring, paraphrase selection, "
               "curriculum ordering, paraphrase-pair annotation and theory checks",
               "tfl"};
  app.require_subcommand(1);
  std::function<void()> action;

  // build-table
  auto* build = app.add_subcommand("build-table", "Count tokens of a corpus into a frequency table");
  struct {
    std::string input, out, label = "corpus-D", format = "lines";
    size_t workers = 1;
    TokenizerOpts tok;
  } build_o;
  build->add_option("--input", build_o.input, "Corpus file, or - for stdin")->required();
  build->add_option("--out", build_o.out, "Output table path")->required();
  build->add_option("--label", build_o.label, "Provenance label stored in the table");
  build->add_option("--format", build_o.format, "lines or jsonl (text field)")->check(CLI::IsMember({"lines", "jsonl"}));
  build->add_option("--workers", build_o.workers, "Parallel counting workers")->check(CLI::PositiveNumber);
  build_o.tok.add(*build);
  build->callback([&] {
    action = [&] {
      emit(out, {{"config", {{"command", "build-table"}, {"input", build_o.input}, {"out", build_o.out},
                             {"label", build_o.label}, {"format", build_o.format}, {"workers", build_o.workers},
                             {"tokenizer", build_o.tok.to_json()}}}});
      BuildOptions opts;
      opts.format = build_o.format == "jsonl" ? CorpusFormat::kJsonLines : CorpusFormat::kLines;
      opts.workers = build_o.workers;
      BuildResult result;
      if (build_o.input == "-") {
        result = build_table(std::cin, build_o.tok.config(), build_o.label, opts);
      } else {
        std::ifstream in(build_o.input, std::ios::binary);
        if (!in) throw Error(ErrorCode::kIo, "cannot open corpus '" + build_o.input + "'");
        result = build_table(in, build_o.tok.config(), build_o.label, opts);
      }
      save_table(result.table, build_o.out);
      emit(out, {{"table", build_o.out}, {"records", result.records}, {"skipped", result.skipped},
                 {"total", result.table.total()}, {"vocab", result.table.size()}});
    };
  });

  // import-zipf
  auto* zipf = app.add_subcommand("import-zipf", "Convert a token<TAB>zipf list into a frequency table");
  struct {
    std::string input, out;
    ZipfImportOptions opts;
  } zipf_o;
  zipf->add_option("--input", zipf_o.input, "Zipf list file")->required();
  zipf->add_option("--out", zipf_o.out, "Output table path")->required();
  zipf->add_option("--virtual-total", zipf_o.opts.virtual_total, "Virtual corpus size")->check(CLI::PositiveNumber);
  zipf->add_option("--label", zipf_o.opts.label, "Provenance label");
  zipf->callback([&] {
    action = [&] {
      emit(out, {{"config", {{"command", "import-zipf"}, {"input", zipf_o.input}, {"out", zipf_o.out},
                             {"virtual_total", zipf_o.opts.virtual_total}, {"label", zipf_o.opts.label}}}});
      auto result = import_zipf_list(std::filesystem::path(zipf_o.input), zipf_o.opts);
      save_table(result.table, zipf_o.out);
      emit(out, {{"table", zipf_o.out}, {"records", result.records}, {"skipped", result.skipped},
                 {"vocab", result.table.size()}});
    };
  });

  // score / combine-score share their shape
  struct ScoreOpts {
    ScoringOpts scoring;
    std::string text, input, out;
  };
  auto add_score = [&](const std::string& name, const std::string& help, bool combined, ScoreOpts& o) {
    auto* cmd = app.add_subcommand(name, help);
    o.scoring.add(*cmd, combined);
    auto* text = cmd->add_option("--text", o.text, "Sentence to score");
    auto* input = cmd->add_option("--input", o.input, "JSON lines with id and text");
    text->excludes(input);
    cmd->add_option("--out", o.out, "Write scores here instead of stdout");
    cmd->callback([&, name, cmd] {
      if (o.text.empty() && o.input.empty()) throw CLI::RequiredError("--text or --input");
      action = [&, name] {
        auto cfg = o.scoring.to_json();
        cfg["command"] = name;
        if (!o.text.empty()) cfg["text"] = o.text;
        if (!o.input.empty()) cfg["input"] = o.input;
        emit(out, {{"config", cfg}});
        ScoringContext ctx(o.scoring);
        const auto scorer = ctx.scorer();
        if (!o.text.empty()) {
          auto j = score_json(scorer(o.text));
          j["text"] = o.text;
          emit(out, j);
          return;
        }
        std::vector<json> records;
        size_t n = 0;
        for (const auto& r : read_jsonl(o.input)) {
          ++n;
          auto j = score_json(scorer(r.at("text").get<std::string>()));
          j["id"] = r.contains("id") ? r["id"] : json(n);
          j["score"] = j["log_sfreq"];
          records.push_back(std::move(j));
        }
        emit_records(o.out, records, out);
      };
    });
  };
  ScoreOpts score_o, combine_o;
  add_score("score", "Sentence frequency (geometric mean of word frequencies)", false, score_o);
  add_score("combine-score", "Sentence frequency over base and distilled tables combined", true, combine_o);

  // select / extremes
  struct SelectOpts {
    ScoringOpts scoring;
    std::string input, out;
  };
  auto add_select = [&](const std::string& name, const std::string& help, bool extremes, SelectOpts& o) {
    auto* cmd = app.add_subcommand(name, help);
    o.scoring.add(*cmd);
    cmd->add_option("--input", o.input, "JSON lines {id, candidates:[...]}")->required();
    cmd->add_option("--out", o.out, "Write results here instead of stdout");
    cmd->callback([&, name, extremes] {
      action = [&, name, extremes] {
        auto cfg = o.scoring.to_json();
        cfg["command"] = name;
        cfg["input"] = o.input;
        emit(out, {{"config", cfg}});
        ScoringContext ctx(o.scoring);
        const auto scorer = ctx.scorer();
        std::vector<json> records;
        for (const auto& set : read_sets(o.input)) {
          if (extremes) {
            const auto e = select_extremes(set, scorer);
            records.push_back({{"id", set.id}, {"low_index", e.lowest}, {"high_index", e.highest},
                               {"low_text", set.candidates[e.lowest]}, {"high_text", set.candidates[e.highest]},
                               {"low_log_sfreq", e.low_score.log_sfreq}, {"high_log_sfreq", e.high_score.log_sfreq}});
          } else {
            const auto sel = select_max(set, scorer);
            auto j = score_json(sel.score);
            j["id"] = set.id;
            j["index"] = sel.index;
            j["text"] = set.candidates[sel.index];
            records.push_back(std::move(j));
          }
        }
        emit_records(o.out, records, out);
      };
    });
  };
  SelectOpts select_o, extremes_o;
  add_select("select", "Pick the highest-frequency paraphrase of each set", false, select_o);
  add_select("extremes", "Pick the lowest- and highest-frequency paraphrases of each set", true, extremes_o);

  // distill
  auto* distill = app.add_subcommand("distill", "Build the distilled table from story completions");
  struct {
    std::string input, out, format = "lines";
    ProviderOpts provider;
    DistillOptions opts;
    CombineConfig combine;
  } distill_o;
  distill->add_option("--input", distill_o.input, "Training texts")->required();
  distill->add_option("--format", distill_o.format, "lines or jsonl")->check(CLI::IsMember({"lines", "jsonl"}));
  distill->add_option("--out", distill_o.out, "Output table path")->required();
  distill->add_option("--label", distill_o.opts.label, "Label (prefixed with distilled- when missing)");
  distill->add_option("--completions-per-text", distill_o.opts.completions_per_text)->check(CLI::PositiveNumber);
  distill->add_option("--parallelism", distill_o.opts.parallelism)->check(CLI::PositiveNumber);
  distill->add_option("--temperature", distill_o.opts.temperature)->check(CLI::NonNegativeNumber);
  distill->add_option("--max-tokens", distill_o.opts.max_output_tokens)->check(CLI::PositiveNumber);
  distill->add_option("--alpha", distill_o.combine.alpha, "Recorded for the later combination");
  distill->add_option("--beta", distill_o.combine.beta, "Recorded for the later combination");
  distill->add_option("--zeta", distill_o.combine.zeta, "Recorded for the later combination");
  distill_o.provider.add(*distill);
  distill->callback([&] {
    action = [&] {
      auto& o = distill_o;
      if (o.opts.label.rfind("distilled-", 0) != 0) o.opts.label = "distilled-" + o.opts.label;
      emit(out, {{"config", {{"command", "distill"}, {"input", o.input}, {"out", o.out}, {"label", o.opts.label},
                             {"completions_per_text", o.opts.completions_per_text},
                             {"parallelism", o.opts.parallelism}, {"temperature", o.opts.temperature},
                             {"max_tokens", o.opts.max_output_tokens}, {"alpha", o.combine.alpha},
                             {"beta", o.combine.beta}, {"zeta", o.combine.zeta}, {"provider", o.provider.to_json()}}}});
      auto provider = make_provider(o.provider.kind_config());
      auto result = distill_corpus(read_texts(o.input, o.format), *provider, o.opts);
      save_table(result.table, o.out);
      for (const auto& f : result.failures) emit(err, {{"skipped", f}});
      emit(out, {{"table", o.out}, {"requested", result.requested}, {"skipped", result.skipped},
                 {"total", result.table.total()}, {"vocab", result.table.size()}});
    };
  });

  // sort
  auto* sort = app.add_subcommand("sort", "Order training data by sentence frequency");
  struct {
    std::string mode = "ascending", scores, data, out, data_out, key = "score";
  } sort_o;
  sort->add_option("--mode", sort_o.mode, "ascending, descending or external")
      ->check(CLI::IsMember({"ascending", "descending", "external"}));
  sort->add_option("--scores", sort_o.scores, "JSON lines {id, score}")->required();
  sort->add_option("--data", sort_o.data, "Training data, JSON lines with an id field")->required();
  sort->add_option("--out", sort_o.out, "Ordered {id, rank, score} records")->required();
  sort->add_option("--data-out", sort_o.data_out, "Reordered training data (default: <out stem>.data.jsonl)");
  sort->add_option("--key", sort_o.key, "Field of the score records holding the key");
  sort->callback([&] {
    action = [&] {
      auto& o = sort_o;
      if (o.data_out.empty()) o.data_out = std::filesystem::path(o.out).replace_extension(".data.jsonl").string();
      emit(out, {{"config", {{"command", "sort"}, {"mode", o.mode}, {"scores", o.scores}, {"data", o.data},
                             {"out", o.out}, {"data_out", o.data_out}, {"key", o.key}}}});
      std::unordered_map<std::string, double> scores;
      size_t n = 0;
      for (const auto& r : read_jsonl(o.scores)) {
        ++n;
        if (!r.contains(o.key) || !r[o.key].is_number()) {
          throw Error(ErrorCode::kFormat, o.scores + ": record " + std::to_string(n) + " has no numeric " + o.key);
        }
        scores[id_string(r, n)] = r[o.key].get<double>();
      }
      std::vector<TrainingInstance> instances;
      std::unordered_map<std::string, std::string> raw_lines;
      std::istringstream data(read_file(o.data));
      std::string line;
      n = 0;
      while (std::getline(data, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto r = json::parse(line, nullptr, false);
        if (r.is_discarded()) throw Error(ErrorCode::kFormat, o.data + ":" + std::to_string(n) + ": malformed record");
        auto id = id_string(r, n);
        if (raw_lines.contains(id)) throw Error(ErrorCode::kFormat, o.data + ": duplicate id '" + id + "'");
        raw_lines[id] = line;
        instances.push_back({id, r.value("text", std::string()), std::move(r)});
      }
      const auto order = order_curriculum(instances, scores, parse_ordering_mode(o.mode));
      std::vector<json> ranked;
      std::string reordered;
      for (size_t rank = 0; rank < order.size(); ++rank) {
        ranked.push_back({{"id", order[rank]}, {"rank", rank}, {"score", scores.at(order[rank])}});
        reordered += raw_lines.at(order[rank]);
        reordered += '\n';
      }
      write_file_atomic(o.out, to_jsonl(ranked));
      write_file_atomic(o.data_out, reordered);
      emit(out, {{"written", o.out}, {"data_written", o.data_out}, {"records", ranked.size()}});
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Histogram of sentence Zipf frequencies");
  struct {
    ScoringOpts scoring;
    std::string input, format = "lines", edges = "0,1,2,3,4,5,6,7,8,9";
  } stats_o;
  stats_o.scoring.add(*stats);
  stats->add_option("--input", stats_o.input, "Sentences")->required();
  stats->add_option("--format", stats_o.format, "lines or jsonl")->check(CLI::IsMember({"lines", "jsonl"}));
  stats->add_option("--edges", stats_o.edges, "Comma-separated ascending bin edges on the Zipf scale");
  stats->callback([&] {
    action = [&] {
      auto cfg = stats_o.scoring.to_json();
      cfg["command"] = "stats";
      cfg["input"] = stats_o.input;
      cfg["edges"] = stats_o.edges;
      emit(out, {{"config", cfg}});
      const auto edges = parse_edges(stats_o.edges);
      ScoringContext ctx(stats_o.scoring);
      const auto scorer = ctx.scorer();
      std::vector<double> values;
      size_t unscoreable = 0;
      for (const auto& text : read_texts(stats_o.input, stats_o.format)) {
        try {
          values.push_back(scorer(text).zipf_sfreq);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kEmptySentence) throw;
          ++unscoreable;
        }
      }
      const auto h = bin_histogram(values, edges);
      json bins = json::array();
      for (size_t i = 0; i < h.counts.size(); ++i) {
        bins.push_back({{"lo", h.edges[i]}, {"hi", h.edges[i + 1]}, {"count", h.counts[i]}});
      }
      emit(out, {{"sentences", values.size()}, {"unscoreable", unscoreable}, {"bins", bins}, {"below", h.below},
                 {"above", h.above}});
    };
  });

  // verify-theory
  auto* verify = app.add_subcommand("verify-theory", "Simulation checks of the Zipf-based loss/frequency bounds");
  struct {
    theory::VerifyConfig cfg;
    std::string semilog_out;
  } verify_o;
  verify->add_option("--s", verify_o.cfg.s, "Zipf exponent")->check(CLI::PositiveNumber);
  verify->add_option("--vocab", verify_o.cfg.vocab_size, "Vocabulary size")->check(CLI::Range(size_t{2}, size_t{1} << 24));
  verify->add_option("--eps", verify_o.cfg.epsilon, "Uniform log-domain bound")->check(CLI::NonNegativeNumber);
  verify->add_option("--lambda", verify_o.cfg.lambda, "Bigram mixing weight")->check(CLI::Range(0.0, 1.0));
  verify->add_option("--trials", verify_o.cfg.trials, "Models / sentences / pairs per check")
      ->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_o.cfg.seed, "Base seed");
  verify->add_option("--max-length", verify_o.cfg.max_sentence_length, "Longest sampled sentence")
      ->check(CLI::PositiveNumber);
  verify->add_option("--semilog-out", verify_o.semilog_out, "Write (rank, ln rank, loss) rows here");
  int verify_status = 0;
  verify->callback([&] {
    action = [&] {
      auto cfg = verify_o.cfg.to_json();
      cfg["command"] = "verify-theory";
      if (!verify_o.semilog_out.empty()) cfg["semilog_out"] = verify_o.semilog_out;
      emit(out, {{"config", cfg}});
      size_t violations = 0;
      for (const auto& c : theory::verify_theory(verify_o.cfg)) {
        violations += c.violations;
        emit(out, c.to_json());
      }
      if (!verify_o.semilog_out.empty()) {
        const auto zipf_model = theory::ZipfModel::create(verify_o.cfg.s, verify_o.cfg.vocab_size);
        std::ostringstream rows;
        theory::semilog_report(theory::build_perturbed(zipf_model,
                                                       theory::uniform_epsilon(verify_o.cfg.vocab_size,
                                                                               verify_o.cfg.epsilon),
                                                       verify_o.cfg.seed),
                               &rows);
        write_file_atomic(verify_o.semilog_out, rows.str());
      }
      emit(out, {{"total_violations", violations}});
      verify_status = violations == 0 ? 0 : 1;
    };
  });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Paraphrase-pair dataset construction and annotation service");
  pipeline->require_subcommand(1);
  struct {
    std::string journal = "tfpd.journal";
    std::vector<std::string> annotators{"annotator-1", "annotator-2", "annotator-3"};
    uint64_t seed = 0;
    TokenizerOpts tok;
  } pipe_o;
  pipeline->add_option("--journal", pipe_o.journal, "Event journal path");
  pipeline->add_option("--annotators", pipe_o.annotators, "Configured annotator ids")->delimiter(',');
  pipeline->add_option("--seed", pipe_o.seed, "Seed for blind presentation order");
  pipe_o.tok.add(*pipeline);
  auto pipe_config = [&] {
    PipelineConfig c;
    c.journal = pipe_o.journal;
    c.annotators = pipe_o.annotators;
    c.seed = pipe_o.seed;
    c.tokenizer = pipe_o.tok.config();
    return c;
  };
  auto pipe_json = [&](const std::string& sub) {
    return json{{"command", "pipeline " + sub}, {"journal", pipe_o.journal}, {"annotators", pipe_o.annotators},
                {"seed", pipe_o.seed}, {"tokenizer", pipe_o.tok.to_json()}};
  };

  auto* ingest = pipeline->add_subcommand("ingest", "Generate paraphrase jobs for a source file");
  struct {
    std::string source;
    ScoringOpts scoring;
    ProviderOpts provider;
    size_t parallelism = 4;
  } ingest_o;
  ingest->add_option("source", ingest_o.source, "JSON lines {id, text, ground_truth}")->required();
  ingest_o.scoring.add(*ingest);
  ingest_o.provider.add(*ingest);
  ingest->add_option("--parallelism", ingest_o.parallelism)->check(CLI::PositiveNumber);
  ingest->callback([&] {
    action = [&] {
      auto cfg = pipe_json("ingest");
      cfg["source"] = ingest_o.source;
      cfg["scoring"] = ingest_o.scoring.to_json();
      cfg["provider"] = ingest_o.provider.to_json();
      cfg["parallelism"] = ingest_o.parallelism;
      emit(out, {{"config", cfg}});
      std::vector<TfpdPipeline::SourceRecord> sources;
      size_t n = 0;
      for (const auto& r : read_jsonl(ingest_o.source)) {
        ++n;
        sources.push_back({id_string(r, n), r.at("text").get<std::string>(),
                           r.contains("ground_truth") ? r["ground_truth"] : json()});
      }
      TfpdPipeline pl(pipe_config());
      ScoringContext ctx(ingest_o.scoring);
      auto provider = make_provider(ingest_o.provider.kind_config());
      const auto ids = pl.ingest(sources, *provider, ctx.scorer(), ingest_o.parallelism);
      for (size_t i = 0; i < ids.size(); ++i) {
        const auto job = pl.job(ids[i]);
        json j = {{"source_id", sources[i].source_id}, {"job_id", ids[i]}, {"status", job_status_name(job->status)}};
        if (!job->reject_reason.empty()) j["reason"] = job->reject_reason;
        emit(out, j);
      }
      emit(out, {{"progress", pl.progress().to_json()}});
    };
  });

  auto* serve = pipeline->add_subcommand("serve", "Serve the annotation HTTP API");
  struct {
    std::string host = "127.0.0.1", static_dir;
    int port = 8080;
  } serve_o;
  serve->add_option("--port", serve_o.port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", serve_o.host);
  serve->add_option("--static", serve_o.static_dir, "Directory of the annotation UI to serve at /");
  serve->callback([&] {
    action = [&] {
      auto cfg = pipe_json("serve");
      cfg["host"] = serve_o.host;
      cfg["port"] = serve_o.port;
      if (!serve_o.static_dir.empty()) cfg["static"] = serve_o.static_dir;
      emit(out, {{"config", cfg}});
      out.flush();
      TfpdPipeline pl(pipe_config());
      std::optional<std::filesystem::path> static_dir;
      if (!serve_o.static_dir.empty()) static_dir = serve_o.static_dir;
      TfpdServer server(pl, static_dir);
      g_server = &server;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      const bool ok = server.listen(serve_o.host, serve_o.port);
      g_server = nullptr;
      if (!ok) throw Error(ErrorCode::kIo, "cannot listen on " + serve_o.host + ":" + std::to_string(serve_o.port));
    };
  });

  auto* export_cmd = pipeline->add_subcommand("export", "Write accepted pairs and length statistics");
  std::string export_dest;
  export_cmd->add_option("dest", export_dest, "Destination JSON lines file")->required();
  export_cmd->callback([&] {
    action = [&] {
      auto cfg = pipe_json("export");
      cfg["dest"] = export_dest;
      emit(out, {{"config", cfg}});
      TfpdPipeline pl(pipe_config());
      const auto st = pl.export_tfpd(export_dest);
      emit(out, {{"written", export_dest}, {"stats", st.to_json()}});
    };
  });

  auto* progress = pipeline->add_subcommand("progress", "Job counts by status");
  progress->callback([&] {
    action = [&] {
      emit(out, {{"config", pipe_json("progress")}});
      TfpdPipeline pl(pipe_config());
      emit(out, pl.progress().to_json());
    };
  });

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    emit(err, {{"error", e.what()}, {"code", error_code_name(e.code())}});
    return 1;
  } catch (const std::exception& e) {
    emit(err, {{"error", e.what()}, {"code", "internal"}});
    return 1;
  }
  return verify_status;
}

}  // namespace tfl::cli
