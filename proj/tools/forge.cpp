#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "forge/align.hpp"
#include "forge/autocorrect.hpp"
#include "forge/corpus.hpp"
#include "forge/generate.hpp"
#include "forge/hil.hpp"
#include "forge/metrics.hpp"
#include "forge/preprocess.hpp"
#include "forge/service.hpp"
#include "forge/synth.hpp"
#include "forge/text.hpp"

using namespace forge;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// "-" or empty reads stdin
Corpus load_corpus(const std::string& path) {
  if (path.empty() || path == "-") return parse_corpus(std::cin);
  return ingest_corpus(path);
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ojson source_json(const ValueSource& s) {
  static constexpr const char* kRegions[] = {"table_id", "title", "header", "body"};
  return {{"table", s.table},   {"region", kRegions[static_cast<int>(s.region)]},
          {"row", s.row},       {"column", s.column},
          {"token", s.token},   {"length", s.length}};
}

ojson alignment_json(const PairedExample& ex, const Alignment& a) {
  ojson values = ojson::array();
  for (const auto& v : a.extract.values) {
    values.push_back({{"surface", v.surface},
                      {"kind", to_string(v.kind)},
                      {"source", v.source ? source_json(*v.source) : ojson(nullptr)}});
  }
  return {{"id", ex.id}, {"extract", std::move(values)}, {"positions", a.report_positions}};
}

// Hypotheses as {"id", "text"} lines.
std::map<std::string, std::string> read_hypotheses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      out[j.at("id").get<std::string>()] = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(n, "", std::string("hypothesis line: ") + e.what());
    }
  }
  return out;
}

std::vector<double> parse_fractions(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad fraction '" + item + "'");
    }
  }
  return out;
}


}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table-to-text pipeline workbench"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_path, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and print a summary");
  ingest->add_option("path", ingest_path, "corpus file")->required();
  ingest->add_option("--out", ingest_out, "rewrite the corpus in canonical form");

  // pair
  std::string pair_tables, pair_text, pair_out, pair_split = "train";
  auto* pair = app.add_subcommand("pair", "Pair tables with the paragraphs that describe them");
  pair->add_option("tables", pair_tables, "one table object per line")->required();
  pair->add_option("text", pair_text, "document text, paragraphs separated by blank lines")->required();
  pair->add_option("--split", pair_split, "split label for the pairs")->check(CLI::IsMember({"train", "test"}));
  pair->add_option("--out", pair_out);

  // split
  std::uint64_t split_seed = 0;
  double split_fraction = 0.1;
  std::string split_in, split_out;
  auto* split = app.add_subcommand("split", "Assign train/test labels");
  split->add_option("--seed", split_seed)->required();
  split->add_option("--test-fraction", split_fraction)->required()->check(CLI::Range(0.0, 1.0));
  split->add_option("--in", split_in, "corpus file (stdin by default)");
  split->add_option("--out", split_out);

  // preprocess
  std::size_t pp_rows = 0, pp_tokens = 0;
  std::string pp_rules, pp_corpus, pp_out;
  double pp_calibrate = 0.0;
  auto* pre = app.add_subcommand("preprocess", "Flatten tables into token sequences");
  pre->add_option("--max-rows", pp_rows);
  pre->add_option("--max-tokens-per-row", pp_tokens);
  pre->add_option("--rules", pp_rules, "aggregate rules file");
  pre->add_option("--calibrate", pp_calibrate, "print the limits reaching this coverage instead")
      ->check(CLI::Range(0.0, 1.0));
  pre->add_option("--corpus", pp_corpus, "corpus file (stdin by default)");
  pre->add_option("--out", pp_out);

  // extract
  std::string ex_corpus, ex_out;
  auto* extract = app.add_subcommand("extract", "Align report values with their tables");
  extract->add_option("corpus", ex_corpus)->required();
  extract->add_option("--out", ex_out);

  // synth
  SynthConfig synth_cfg;
  std::string synth_in, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate synthetic pairs from the train split");
  synth->add_option("--per-example", synth_cfg.per_example);
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--jitter-bound", synth_cfg.jitter_relative_bound);
  synth->add_option("--in", synth_in, "corpus file (stdin by default)");
  synth->add_option("--out", synth_out);

  // generate
  std::string gen_name = "template", gen_endpoint, gen_corpus, gen_split = "test", gen_out;
  auto* gen = app.add_subcommand("generate", "Draft reports for a corpus split");
  gen->add_option("--generator", gen_name);
  gen->add_option("--endpoint", gen_endpoint, "http:// URL for the http generator");
  gen->add_option("--corpus", gen_corpus)->required();
  gen->add_option("--split", gen_split)->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--out", gen_out);

  // evaluate
  std::string ev_hyp, ev_corpus, ev_split = "test";
  auto* eval = app.add_subcommand("evaluate", "Score hypotheses against corpus reports");
  eval->add_option("--hyp", ev_hyp, "{\"id\", \"text\"} lines")->required();
  eval->add_option("--corpus", ev_corpus)->required();
  eval->add_option("--split", ev_split)->check(CLI::IsMember({"train", "test"}));

  // correct
  std::string co_memory, co_corpus, co_hyp, co_out;
  auto* correct = app.add_subcommand("correct", "Fix table values in drafts");
  correct->add_option("--memory", co_memory, "correction memory file");
  correct->add_option("--corpus", co_corpus)->required();
  correct->add_option("--hyp", co_hyp, "{\"id\", \"text\"} lines")->required();
  correct->add_option("--out", co_out);

  // hil sweep
  auto* hil = app.add_subcommand("hil", "Human-in-the-loop protocol");
  hil->require_subcommand(1);
  std::string sw_strategy = "random", sw_fractions = "0,0.2,0.4,0.5,0.6,0.8,1", sw_corpus, sw_store;
  std::uint64_t sw_seed = 0;
  bool sw_simulate = false, sw_independent = false;
  int sw_port = 0, sw_timeout = 3600;
  auto* sweep = hil->add_subcommand("sweep", "Run stages over growing annotation budgets");
  sweep->add_option("--strategy", sw_strategy)->check(CLI::IsMember({"random", "uncertainty", "oracle"}));
  sweep->add_option("--fractions", sw_fractions, "comma separated, increasing");
  sweep->add_option("--seed", sw_seed);
  sweep->add_option("--corpus", sw_corpus)->required();
  sweep->add_flag("--simulate-annotator", sw_simulate, "answer tasks with the reference reports");
  sweep->add_flag("--independent", sw_independent, "draw every stage afresh instead of cumulatively");
  sweep->add_option("--queue-port", sw_port, "serve stage tasks for human review on this port");
  sweep->add_option("--store", sw_store, "event log directory for the review queue");
  sweep->add_option("--timeout", sw_timeout, "seconds to wait for a stage's annotations");

  // serve
  int sv_port = 8080;
  std::string sv_store, sv_host = "0.0.0.0", sv_token;
  auto* serve = app.add_subcommand("serve", "Run the review service");
  serve->add_option("--port", sv_port);
  serve->add_option("--host", sv_host);
  serve->add_option("--store", sv_store)->required();
  serve->add_option("--token", sv_token, "static bearer token required on every request");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const Corpus c = ingest_corpus(ingest_path);
      if (!ingest_out.empty()) write_corpus_file(ingest_out, c);
      std::cout << ojson{{"examples", c.size()},
                         {"train", c.split(Split::Train).size()},
                         {"test", c.split(Split::Test).size()}}
                       .dump()
                << '\n';
    } else if (*pair) {
      std::ifstream tin(pair_tables);
      if (!tin) throw NotFoundError("cannot open " + pair_tables);
      const auto tables = read_tables(tin);
      const auto paragraphs = split_paragraphs(read_file(pair_text));
      auto result = pair_tables_to_paragraphs(tables, paragraphs);
      Corpus c;
      for (auto& ex : result.examples) {
        ex.split = *split_from_string(pair_split);
        c.examples.push_back(std::move(ex));
      }
      Output out(pair_out);
      write_corpus(out.stream(), c);
      std::cerr << "paired " << c.size() << " tables, " << result.unmatched << " without a paragraph\n";
    } else if (*split) {
      const Corpus c = split_corpus(load_corpus(split_in), split_seed, split_fraction);
      Output out(split_out);
      write_corpus(out.stream(), c);
    } else if (*pre) {
      const Corpus c = load_corpus(pp_corpus);
      if (pp_calibrate > 0.0) {
        const auto limits = calibrate_limits(c, pp_calibrate);
        std::cout << ojson{{"max_rows", limits.max_rows},
                           {"max_tokens_per_row", limits.max_tokens_per_row},
                           {"coverage", limit_coverage(c, limits)}}
                         .dump()
                  << '\n';
        return 0;
      }
      if (pp_rows == 0 || pp_tokens == 0) throw std::invalid_argument("--max-rows and --max-tokens-per-row are required");
      FlattenLimits limits{pp_rows, pp_tokens};
      limits.validate();
      std::vector<AggregateRule> rules;
      if (!pp_rules.empty()) {
        std::ifstream rin(pp_rules);
        if (!rin) throw NotFoundError("cannot open " + pp_rules);
        rules = parse_aggregate_rules(rin);
      }
      Output out(pp_out);
      for (const auto& ex : c.examples) {
        for (const auto& t : ex.tables) {
          const Table prepared = propagate_markup(rules.empty() ? t : apply_aggregate_rules(t, rules));
          const auto flat = dedup_consecutive(flatten_table(prepared, limits));
          ojson src = ojson::array();
          for (const auto& s : flat.source_map) src.push_back({s.row, s.column, s.offset});
          out.stream() << ojson{{"id", ex.id}, {"table_id", t.table_id}, {"tokens", flat.tokens}, {"source", src}}.dump()
                       << '\n';
        }
      }
    } else if (*extract) {
      const Corpus c = load_corpus(ex_corpus);
      const auto alignments = align_corpus(c);
      Output out(ex_out);
      for (std::size_t i = 0; i < c.size(); ++i) out.stream() << alignment_json(c.examples[i], alignments[i]).dump() << '\n';
    } else if (*synth) {
      synth_cfg.validate();
      const Corpus syn = generate_synthetic_corpus(load_corpus(synth_in), synth_cfg);
      Output out(synth_out);
      write_corpus(out.stream(), syn);
    } else if (*gen) {
      const Corpus c = load_corpus(gen_corpus);
      const Split which = *split_from_string(gen_split);
      GeneratorOptions options;
      options.endpoint = gen_endpoint;
      options.templates = build_templates(c);
      options.exclude_own = which == Split::Train;
      const auto generator = GeneratorRegistry::with_builtins().create(gen_name, options);
      const auto alignments = align_corpus(c);
      Output out(gen_out);
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.examples[i].split != which) continue;
        const auto r = generate(request_for(c.examples[i], alignments[i]), *generator);
        out.stream() << ojson{{"id", c.examples[i].id}, {"text", r.text}, {"token_confidences", r.token_confidences}}.dump()
                     << '\n';
      }
    } else if (*eval) {
      const Corpus c = load_corpus(ev_corpus);
      const auto hyps = read_hypotheses(ev_hyp);
      const Split which = *split_from_string(ev_split);
      std::vector<EvalItem> items;
      for (const auto* ex : c.split(which)) {
        auto it = hyps.find(ex->id);
        if (it == hyps.end()) throw NotFoundError("no hypothesis for '" + ex->id + "'");
        items.push_back({it->second, ex->report, match_values(*ex).extract});
      }
      const auto report = evaluate_corpus(items);
      if (report.vacuous_recall) {
        std::cerr << "warning: " << report.vacuous_recall << " samples have an empty extract (recall counted as 1)\n";
      }
      std::cout << metric_report_to_json(report) << '\n';
    } else if (*correct) {
      const Corpus c = load_corpus(co_corpus);
      const CorrectionMemory memory = co_memory.empty() ? CorrectionMemory{} : read_memory_file(co_memory);
      Output out(co_out);
      for (const auto& [id, text] : read_hypotheses(co_hyp)) {
        const auto* ex = c.find(id);
        if (!ex) throw NotFoundError("hypothesis for unknown example '" + id + "'");
        const auto r = correct_values(text, ex->tables, memory);
        ojson edits = ojson::array();
        for (const auto& e : r.edits) {
          edits.push_back({{"token", e.token_index}, {"from", e.from}, {"to", e.to}, {"reason", to_string(e.reason)}});
        }
        out.stream() << ojson{{"id", id}, {"text", r.text}, {"edits", std::move(edits)}}.dump() << '\n';
      }
    } else if (*sweep) {
      const Corpus c = load_corpus(sw_corpus);
      const auto fractions = parse_fractions(sw_fractions);
      const HilSession session(c);
      const auto strategy = *strategy_from_string(sw_strategy);
      HilRun run;
      if (sw_simulate) {
        OracleAnnotator annotator(session.corpus());
        run = sweep_fractions(session, strategy, fractions, sw_seed, annotator, !sw_independent);
      } else {
        if (sw_port <= 0) throw std::invalid_argument("pass --simulate-annotator or --queue-port");
        ReviewStore store(sw_store);
        ReviewServer server(store);
        std::thread serving([&] { server.listen("0.0.0.0", sw_port); });
        QueueAnnotator annotator(store, store.add_corpus(c), std::chrono::seconds(sw_timeout));
        std::cerr << "review queue on port " << sw_port << "\n";
        try {
          run = sweep_fractions(session, strategy, fractions, sw_seed, annotator, !sw_independent);
        } catch (...) {
          server.stop();
          serving.join();
          throw;
        }
        server.stop();
        serving.join();
      }
      std::printf("%-9s %-9s %-12s %-8s %-8s\n", "fraction", "annotated", "table_recall", "rouge1", "bleu");
      for (const auto& st : run.stage_metrics) {
        std::printf("%-9.2f %-9zu %-12.4f %-8.4f %-8.2f\n", st.fraction, st.annotated, st.report.table_recall,
                    st.report.rouge1, st.report.bleu);
      }
    } else if (*serve) {
      ReviewStore store(sv_store);
      ReviewServer server(store, sv_token);
      std::cerr << "serving on " << sv_host << ":" << sv_port << "\n";
      if (!server.listen(sv_host, sv_port)) throw Error("cannot listen on port " + std::to_string(sv_port));
    }
  } catch (const std::exception& e) {
    std::cerr << "forge: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
