#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "desk.hpp"
#include "forge/corpus.hpp"

using nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
};

Run forge_cli(const std::string& args) {
  const std::string cmd = std::string(FORGE_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

struct Workdir {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("forge-cli-" + std::to_string(::getpid()));
  Workdir() {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
  }
  ~Workdir() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("cli pipeline: ingest, split, extract, synth, generate, evaluate, correct") {
  Workdir w;
  forge::write_corpus_file(w.path("desk.jsonl"), desk::make_corpus({.examples = 20, .seed = 2}));

  auto r = forge_cli("ingest " + w.path("desk.jsonl"));
  CHECK(r.status == 0);
  CHECK(json::parse(r.out).at("examples") == 20);

  r = forge_cli("split --seed 3 --test-fraction 0.25 --in " + w.path("desk.jsonl") + " --out " + w.path("split.jsonl"));
  CHECK(r.status == 0);
  r = forge_cli("ingest " + w.path("split.jsonl"));
  CHECK(json::parse(r.out).at("test") == 5);

  r = forge_cli("extract " + w.path("split.jsonl") + " --out " + w.path("extract.jsonl"));
  CHECK(r.status == 0);
  const auto extracts = lines_of(w.path("extract.jsonl"));
  REQUIRE(extracts.size() == 20);
  CHECK_FALSE(json::parse(extracts[0]).at("extract").empty());

  r = forge_cli("synth --per-example 3 --seed 1 --in " + w.path("split.jsonl") + " --out " + w.path("syn.jsonl"));
  CHECK(r.status == 0);
  CHECK(lines_of(w.path("syn.jsonl")).size() == 45);

  r = forge_cli("generate --corpus " + w.path("split.jsonl") + " --split test --out " + w.path("hyp.jsonl"));
  CHECK(r.status == 0);
  CHECK(lines_of(w.path("hyp.jsonl")).size() == 5);

  r = forge_cli("evaluate --hyp " + w.path("hyp.jsonl") + " --corpus " + w.path("split.jsonl") + " --split test");
  CHECK(r.status == 0);
  const auto report = json::parse(r.out);
  CHECK(report.at("samples") == 5);
  CHECK(report.at("table_recall").get<double>() > 0.0);

  r = forge_cli("correct --corpus " + w.path("split.jsonl") + " --hyp " + w.path("hyp.jsonl") + " --out " + w.path("fixed.jsonl"));
  CHECK(r.status == 0);
  for (const auto& line : lines_of(w.path("fixed.jsonl"))) CHECK(json::parse(line).contains("edits"));
}

TEST_CASE("cli preprocess, calibrate and pair") {
  Workdir w;
  forge::write_corpus_file(w.path("limit.jsonl"), desk::make_limit_corpus(1));
  auto r = forge_cli("preprocess --calibrate 0.85 --corpus " + w.path("limit.jsonl"));
  CHECK(r.status == 0);
  const auto j = json::parse(r.out);
  CHECK(j.at("max_rows") == desk::kLimitRows);
  CHECK(j.at("max_tokens_per_row") == desk::kLimitTokens);

  r = forge_cli("preprocess --max-rows 2 --max-tokens-per-row 3 --corpus " + w.path("limit.jsonl") + " --out " + w.path("flat.jsonl"));
  CHECK(r.status == 0);
  const auto flat = lines_of(w.path("flat.jsonl"));
  REQUIRE(flat.size() == 10);
  // title (2) + header (8) + 2 rows of 3
  CHECK(json::parse(flat[0]).at("tokens").size() == 16);

  {
    std::ofstream tables(w.path("tables.jsonl"));
    tables << forge::table_to_json(forge::Table{"Table1", "Table1 recovery", {"Sample", "Mean"}, {}, {{{"Plasma", 0}, {"12", 0}}}}) << "\n";
    std::ofstream text(w.path("doc.txt"));
    text << "Intro mentions Table1.\n\nIn Table1 Plasma reached 12.\n";
  }
  r = forge_cli("pair " + w.path("tables.jsonl") + " " + w.path("doc.txt") + " --split test --out " + w.path("paired.jsonl"));
  CHECK(r.status == 0);
  const auto paired = forge::ingest_corpus(w.path("paired.jsonl"));
  REQUIRE(paired.size() == 1);
  CHECK(paired.examples[0].report == "In Table1 Plasma reached 12.");
  CHECK(paired.examples[0].split == forge::Split::Test);
}

TEST_CASE("cli hil sweep with the simulated annotator") {
  Workdir w;
  forge::write_corpus_file(w.path("desk.jsonl"), desk::make_corpus({.examples = 20, .seed = 7, .test_fraction = 0.25}));
  const auto r = forge_cli("hil sweep --strategy uncertainty --fractions 0,0.5,1 --seed 2 --simulate-annotator --corpus " +
                           w.path("desk.jsonl"));
  CHECK(r.status == 0);
  CHECK(r.out.find("table_recall") != std::string::npos);
  std::istringstream in(r.out);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) rows += line.rfind("0.", 0) == 0 || line.rfind("1.", 0) == 0;
  CHECK(rows == 3);
}

TEST_CASE("cli errors exit nonzero with a message") {
  Workdir w;
  {
    std::ofstream bad(w.path("bad.jsonl"));
    bad << "{\"id\": \"x\"}\n";
  }
  auto r = forge_cli("ingest " + w.path("bad.jsonl"));
  CHECK(r.status == 1);
  CHECK(r.out.find("line 1") != std::string::npos);
  r = forge_cli("ingest " + w.path("missing.jsonl"));
  CHECK(r.status == 1);
  r = forge_cli("hil sweep --corpus " + w.path("missing.jsonl") + " --fractions 0.5,0.2 --simulate-annotator");
  CHECK(r.status == 1);
  r = forge_cli("frobnicate");
  CHECK(r.status != 0);
}
