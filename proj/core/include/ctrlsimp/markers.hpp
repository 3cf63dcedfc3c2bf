#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ctrlsimp/corpus.hpp"
#include "ctrlsimp/lexicon.hpp"
#include "ctrlsimp/syntax.hpp"

namespace ctrlsimp {

// Indicator value attached to a token or a rule. The numeric value is the
// row of the indicator embedding table.
enum class Marker : uint8_t { kReplace = 0, kKeep = 1, kIndifferent = 2 };

std::string_view marker_name(Marker m);  // "REPLACE" / "KEEP" / "INDIFFERENT"
// Accepts full names (any case) and the single letters R, K, I.
Marker parse_marker(std::string_view text);

enum class Level { kSimple, kXSimple };
enum class Profile { kWikiLarge, kNewsela };
enum class MarkMode { kKeepSimple, kIndifferentSimple };

std::string_view level_name(Level l);
Level parse_level(std::string_view text);
std::string_view profile_name(Profile p);
Profile parse_profile(std::string_view text);
MarkMode mode_for(Profile p);

struct MarkedSentence {
  Sentence sentence;
  std::vector<Marker> lexical;  // one per token
  std::optional<syntax::Template> tmpl;
  std::optional<DependencyTree> parse;
  // Aligned with syntax::extract_rules(*tmpl); empty without a template.
  std::vector<std::pair<syntax::SyntaxRule, Marker>> rule_markers;

  // "token/MARKER" space-joined.
  std::string serialize() const;
};

struct ConstraintSet {
  std::set<std::string> banned_words;
  lexicon::SimplificationDictionary substitutions;
  std::set<syntax::SyntaxRule> banned_rules;
  std::vector<syntax::SynchronousRule> synchronous;
  Level level = Level::kSimple;

  // Stems of banned words and of every dictionary complex word.
  std::set<std::string> banned_stems() const;

  std::string to_json() const;
  static ConstraintSet from_json(std::string_view text);
};

// One sequence as seen by the encoder: template tokens, "|||", words.
struct EncoderSequence {
  std::vector<std::string> tokens;
  std::vector<Marker> lexical;
  std::optional<std::vector<Marker>> syntactic;
  size_t word_offset = 0;  // index of the first sentence token
};

struct LevelBudget {
  size_t words = 0;
  double rule_fraction = 0.0;
};

enum class BudgetScale {
  kAbsolute,   // word counts as configured, clipped to the list
  kInventory,  // word counts relative to the profile's XSIMPLE count
};

namespace markers {

inline constexpr double kDefaultIndifferentFraction = 0.5;

MarkedSentence mark_training_pair(const ParallelPair& pair, double indifferent_fraction, uint64_t seed);

// Per-token overrides; std::nullopt leaves the computed marker.
using MarkerOverrides = std::vector<std::optional<Marker>>;

MarkedSentence mark_test_sentence(const Sentence& sentence, const std::optional<DependencyTree>& parse,
                                  const ConstraintSet& constraints, MarkMode mode,
                                  const std::unordered_set<std::string>& function_words,
                                  const MarkerOverrides& overrides = {});

// Folds per-token overrides into a constraint set: KEEP lifts every ban
// on the token's stem, REPLACE bans the token.
ConstraintSet apply_overrides(const ConstraintSet& constraints, const Sentence& sentence,
                              const MarkerOverrides& overrides);

LevelBudget budget_for(Profile profile, Level level);

ConstraintSet build_constraint_set(const lexicon::ComplexWordList& list,
                                   const lexicon::SimplificationDictionary* dictionary,
                                   const syntax::RuleRanking& rules, Level level, Profile profile,
                                   const std::vector<syntax::SynchronousRule>& synchronous = {},
                                   BudgetScale scale = BudgetScale::kAbsolute);

// Token layout and indicator values fed to the encoder. Syntactic markers
// are projected from rule markers: a position is REPLACE when any
// REPLACE rule's span covers it, else KEEP when a KEEP rule does.
EncoderSequence encoder_sequence(const MarkedSentence& marked);

}  // namespace markers
}  // namespace ctrlsimp
