#pragma once

#include <compare>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctrlsimp/corpus.hpp"

namespace ctrlsimp::syntax {

inline constexpr std::string_view kRootLabel = "ROOT";

// Recursive "LABEL( headword dependents... )" rendering of a parse.
struct LinearizedParse {
  std::string text;
  friend bool operator==(const LinearizedParse&, const LinearizedParse&) = default;
};

struct TemplateChild {
  std::string label;
  int depth = 0;  // rendered as d<depth>
  friend auto operator<=>(const TemplateChild&, const TemplateChild&) = default;
};

struct TemplateUnit {
  std::string label;
  std::vector<TemplateChild> children;
  friend auto operator<=>(const TemplateUnit&, const TemplateUnit&) = default;
};

// Top two levels of a parse below the root, deeper structure abbreviated
// by depth tokens. Siblings are sorted by label (stable on surface order).
struct Template {
  std::vector<TemplateUnit> units;

  bool empty() const { return units.empty(); }
  // Model input/output form: a unit with children closes with "LABEL)".
  std::string render() const;
  // Display form with unlabeled closing brackets.
  std::string render_display() const;
  std::vector<std::string> tokens() const;
  // Number of tokens each unit contributes to tokens(), in order.
  std::vector<size_t> unit_token_counts() const;

  // Strict parser for the render() form. Throws FormatError.
  static Template parse(std::string_view text);
  static Template parse_tokens(std::span<const std::string> tokens);

  friend auto operator<=>(const Template&, const Template&) = default;
};

struct SyntaxRule {
  std::string parent;                 // uppercase label or ROOT
  std::vector<std::string> children;  // uppercase labels, template order

  // "ROOT(OBJ, PUNCT)"
  std::string to_string() const;
  // Rule-list form: "Root(obj, punct)".
  std::string to_list_string() const;
  // Accepts either form; case-insensitive; spaces after commas optional.
  // Children are put in template (label) order.
  static SyntaxRule parse(std::string_view text);

  friend auto operator<=>(const SyntaxRule&, const SyntaxRule&) = default;
};

struct SynchronousRule {
  SyntaxRule complex_side;
  SyntaxRule simple_side;
  friend auto operator<=>(const SynchronousRule&, const SynchronousRule&) = default;
};

struct RuleComplexityEntry {
  SyntaxRule rule;
  double ratio = 0.0;
};

// Rules with ratio > 1, descending, plus the size of the full rule
// inventory the fractions are taken from.
struct RuleRanking {
  std::vector<RuleComplexityEntry> entries;
  size_t inventory_size = 0;

  // First ceil(fraction * inventory_size) entries, clipped to entries.size().
  std::vector<SyntaxRule> top(double fraction) const;
};

using SynchronousCounts = std::map<SynchronousRule, long>;

LinearizedParse linearize_parse(const DependencyTree& tree);
Template extract_template(const LinearizedParse& linear);
Template template_of(const DependencyTree& tree);
// Sorted token indices covered by each template unit (the unit's subtree).
std::vector<std::vector<int>> unit_spans(const DependencyTree& tree);
// Label-only linearization whose extract_template() is `t` again.
LinearizedParse template_as_linearized(const Template& t);

// ROOT rule first, then one rule per level-1 unit in template order.
std::vector<SyntaxRule> extract_rules(const Template& t);

struct SynchronousExtraction {
  SynchronousCounts counts;
  size_t skipped_pairs = 0;  // pairs lacking a parse on either side
};
SynchronousExtraction extract_synchronous_rules(std::span<const ParallelPair> pairs);

double rule_complexity(long complex_count, long complex_total, long simple_count, long simple_total,
                       size_t inventory_size);
RuleRanking rank_rules_by_complexity(std::span<const ParallelPair> pairs, double top_fraction = 1.0);

std::string join_template_and_tokens(const Template& t, const Sentence& sentence);
// Inverse of join_template_and_tokens: (template text, tokens). Splits on
// the first "|||". Throws FormatError if absent.
std::pair<std::string, Sentence> split_generated(std::string_view line);

// Bracket tokens for the universal-dependency labels, ")" and d0..d9.
std::vector<std::string> base_template_symbols();
bool looks_like_template_symbol(std::string_view surface);
std::vector<std::string> template_symbols_of(const Template& t);
std::string upper_label(std::string_view label);

// Rule-list files: one rule per line; "# inventory=N" header optional.
void write_rule_ranking(std::ostream& out, const RuleRanking& ranking);
RuleRanking read_rule_ranking(std::istream& in);
void write_rule_list(std::ostream& out, std::span<const SyntaxRule> rules);
std::vector<SyntaxRule> read_rule_list(std::istream& in);
// "complex<TAB>simple" per line, most frequent first.
void write_synchronous(std::ostream& out, const SynchronousCounts& counts);
std::vector<SynchronousRule> read_synchronous(std::istream& in);

}  // namespace ctrlsimp::syntax
