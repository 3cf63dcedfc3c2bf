#pragma once

#include <set>
#include <string>
#include <vector>

#include "ctrlsimp/markers.hpp"
#include "ctrlsimp/model.hpp"
#include "ctrlsimp/syntax.hpp"

namespace ctrlsimp::decoder {

struct DecodeSettings {
  int beam_size = 5;
  int max_template_len = 40;
  // 0 selects 2 * source words + 8.
  int max_token_len = 0;
  double length_penalty = 1.0;
  int nbest = 5;
  // Restrict the template phase to bracket-balanced prefixes that can still
  // be closed within max_template_len. When off, malformed templates are
  // only pruned at the separator.
  bool template_grammar = true;

  void validate() const;
};

enum class Phase { kTemplate, kTokens };

// Constraint view resolved against one source and vocabulary.
struct PreparedConstraints {
  std::vector<bool> banned;                  // over extended ids
  std::vector<std::vector<int>> positive;    // any id of a group satisfies it
  std::vector<std::string> positive_names;   // display form, aligned with positive
  std::set<syntax::SyntaxRule> banned_rules;
  std::vector<syntax::SyntaxRule> rule_targets;  // simple sides of matched synchronous rules

  size_t constraint_count() const { return positive.size() + rule_targets.size(); }
};

PreparedConstraints prepare_constraints(const model::Model& model, const model::SourceInput& source,
                                        const MarkedSentence& marked, const ConstraintSet& constraints);

struct Candidate {
  std::vector<int> ids;  // template ids, SEP, token ids, EOS
  double logprob = 0.0;
  double score = 0.0;    // logprob / len^length_penalty
  int satisfied = 0;
};

struct DecodeResult {
  std::vector<std::string> template_tokens;
  std::string template_text;
  Sentence output;
  std::vector<syntax::SyntaxRule> rules;
  std::vector<int> ids;
  double logprob = 0.0;
  double score = 0.0;
  int satisfied = 0;
  size_t constraint_count = 0;
  std::vector<Candidate> nbest;
};

// Template-first constrained beam search over a prepared source.
DecodeResult beam_search(const model::Model& model, const model::SourceInput& source,
                         const PreparedConstraints& constraints, const DecodeSettings& settings,
                         size_t source_words);

DecodeResult beam_search(const model::Model& model, const MarkedSentence& marked, const ConstraintSet& constraints,
                         const DecodeSettings& settings);

// Greedy unconstrained decode (beam 1, empty constraint set).
DecodeResult greedy(const model::Model& model, const MarkedSentence& marked);

}  // namespace ctrlsimp::decoder
