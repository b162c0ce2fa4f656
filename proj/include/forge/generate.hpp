#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/align.hpp"
#include "forge/corpus.hpp"
#include "forge/errors.hpp"

namespace forge {

// Characters matched by recursive longest-common-substring decomposition:
// take a longest common substring, recurse on both sides of it and sum the
// lengths. Among equally long substrings the choice with the largest total
// wins, which keeps the measure symmetric. Past kRoExactSubproblems memoized
// sub-problems only the leftmost tie is followed, so highly repetitive long
// strings stay polynomial.
inline constexpr std::size_t kRoExactSubproblems = 1 << 12;
std::size_t ro_matching_characters(std::string_view a, std::string_view b);

// 2 K_m / (|a| + |b|); 1 for two empty strings.
double ro_similarity(std::string_view a, std::string_view b);

struct SlotSource {
  ValueSource position;
  ValueKind kind = ValueKind::StringValue;

  bool operator==(const SlotSource&) const = default;
};

// A train report with its matched values replaced by "{{<Kind>#<i>}}" markers.
struct Template {
  std::string source_example_id;
  std::string title_key;
  std::string text;  // space-joined tokens
  std::vector<SlotSource> slot_sources;

  bool operator==(const Template&) const = default;
};

struct GenerationResult {
  std::string text;
  std::vector<double> token_confidences;  // one per token of `text`

  bool operator==(const GenerationResult&) const = default;
};

// Floor for slot confidences so entropy stays defined for dissimilar titles.
inline constexpr double kMinSlotConfidence = 0.01;

Template build_template(const PairedExample& example, const Alignment& alignment);
std::vector<Template> build_templates(const Corpus& corpus);  // train split, corpus order

// argmax of ro_similarity(title, title_key); earliest template on ties.
std::size_t select_template(const Table& table, std::span<const Template> templates);

// Slots take the tokens found at their recorded position, "[N/A]" when the
// position does not exist. Slot tokens get the title similarity as confidence
// (halved on a kind mismatch or a missing position), fixed tokens 1.0.
GenerationResult fill_template(const Template& tmpl, std::span<const Table> tables);
GenerationResult fill_template(const Template& tmpl, const Table& table);

inline constexpr std::string_view kSectionSeparator = "[SEP]";

// titles of all tables, [SEP], extract tokens, [SEP], last min(3, rows) rows of each table.
std::vector<std::string> assemble_generator_input(std::span<const TableExtract> extracts,
                                                  std::span<const Table> tables);

struct GenerationRequest {
  std::string sample_id;
  std::vector<std::string> tokens;
  std::vector<Table> tables;
};

class GenerationError : public Error {
 public:
  GenerationError(std::string sample_id, const std::string& what)
      : Error("generation failed for sample '" + sample_id + "': " + what), sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResult generate(const GenerationRequest& request) const = 0;
  // false when the adapter cannot take concurrent calls
  virtual bool concurrent() const { return true; }
};

// Template baseline. With exclude_own set, a request never uses the template
// built from the example with the same id (leave-one-out drafting).
class TemplateGenerator final : public Generator {
 public:
  explicit TemplateGenerator(std::vector<Template> templates, bool exclude_own = false);
  GenerationResult generate(const GenerationRequest& request) const override;
  const std::vector<Template>& templates() const { return templates_; }

 private:
  std::vector<Template> templates_;
  bool exclude_own_;
};

// POSTs {"sample_id", "tokens"} as JSON to an http:// endpoint and expects
// {"text", "token_confidences"} back.
class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(std::string endpoint);
  GenerationResult generate(const GenerationRequest& request) const override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
};

struct GeneratorOptions {
  std::string endpoint;
  std::vector<Template> templates;
  bool exclude_own = false;
};

class GeneratorRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Generator>(const GeneratorOptions&)>;

  // Holds "template" and "http".
  static GeneratorRegistry with_builtins();

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  std::unique_ptr<Generator> create(std::string_view name, const GeneratorOptions& options) const;

 private:
  std::map<std::string, Factory, std::less<>> factories_;
};

// Runs the generator and enforces the output contract (one confidence in
// [0, 1] per token). Failures surface as GenerationError.
GenerationResult generate(const GenerationRequest& request, const Generator& generator);

}  // namespace forge
