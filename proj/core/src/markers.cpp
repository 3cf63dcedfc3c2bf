#include "ctrlsimp/markers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "ctrlsimp/errors.hpp"
#include "json.hpp"

namespace ctrlsimp {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view marker_name(Marker m) {
  switch (m) {
    case Marker::kReplace: return "REPLACE";
    case Marker::kKeep: return "KEEP";
    case Marker::kIndifferent: return "INDIFFERENT";
  }
  return "INDIFFERENT";
}

Marker parse_marker(std::string_view text) {
  std::string s = lower(text);
  if (s == "replace" || s == "r") return Marker::kReplace;
  if (s == "keep" || s == "k") return Marker::kKeep;
  if (s == "indifferent" || s == "i") return Marker::kIndifferent;
  throw ValidationError("unknown marker '" + std::string(text) + "'");
}

std::string_view level_name(Level l) { return l == Level::kSimple ? "SIMPLE" : "XSIMPLE"; }

Level parse_level(std::string_view text) {
  std::string s = lower(text);
  if (s == "simple") return Level::kSimple;
  if (s == "xsimple") return Level::kXSimple;
  throw ValidationError("unknown level '" + std::string(text) + "'");
}

std::string_view profile_name(Profile p) { return p == Profile::kWikiLarge ? "WIKILARGE" : "NEWSELA"; }

Profile parse_profile(std::string_view text) {
  std::string s = lower(text);
  if (s == "wikilarge") return Profile::kWikiLarge;
  if (s == "newsela") return Profile::kNewsela;
  throw ValidationError("unknown profile '" + std::string(text) + "'");
}

MarkMode mode_for(Profile p) {
  return p == Profile::kWikiLarge ? MarkMode::kKeepSimple : MarkMode::kIndifferentSimple;
}

std::string MarkedSentence::serialize() const {
  std::string out;
  for (size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    out += sentence.tokens[i].surface;
    out += '/';
    out += marker_name(lexical.at(i));
  }
  return out;
}

std::set<std::string> ConstraintSet::banned_stems() const {
  std::set<std::string> out;
  for (const auto& w : banned_words) out.insert(lexicon::stem(w));
  for (const auto& [c, targets] : substitutions.entries()) out.insert(lexicon::stem(c));
  return out;
}

std::string ConstraintSet::to_json() const {
  nlohmann::ordered_json j;
  j["banned_words"] = nlohmann::json::array();
  for (const auto& w : banned_words) j["banned_words"].push_back(w);
  j["substitutions"] = nlohmann::json::object();
  for (const auto& [c, targets] : substitutions.entries()) {
    auto arr = nlohmann::json::array();
    for (const auto& t : targets) arr.push_back({{"word", t.word}, {"weight", t.weight}});
    j["substitutions"][c] = arr;
  }
  j["banned_rules"] = nlohmann::json::array();
  for (const auto& r : banned_rules) j["banned_rules"].push_back(r.to_list_string());
  j["synchronous_rules"] = nlohmann::json::array();
  for (const auto& r : synchronous)
    j["synchronous_rules"].push_back(
        {{"complex", r.complex_side.to_list_string()}, {"simple", r.simple_side.to_list_string()}});
  j["level"] = std::string(level_name(level));
  return j.dump(2);
}

ConstraintSet ConstraintSet::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("constraint set: ") + e.what());
  }
  ConstraintSet cs;
  try {
    if (j.contains("banned_words"))
      for (const auto& w : j.at("banned_words")) cs.banned_words.insert(w.get<std::string>());
    if (j.contains("substitutions"))
      for (const auto& [c, arr] : j.at("substitutions").items())
        for (const auto& t : arr) {
          if (t.is_string())
            cs.substitutions.add(c, t.get<std::string>(), 1.0);
          else
            cs.substitutions.add(c, t.at("word").get<std::string>(), t.value("weight", 1.0));
        }
    if (j.contains("banned_rules"))
      for (const auto& r : j.at("banned_rules")) cs.banned_rules.insert(syntax::SyntaxRule::parse(r.get<std::string>()));
    if (j.contains("synchronous_rules"))
      for (const auto& r : j.at("synchronous_rules"))
        cs.synchronous.push_back({syntax::SyntaxRule::parse(r.at("complex").get<std::string>()),
                                  syntax::SyntaxRule::parse(r.at("simple").get<std::string>())});
    if (j.contains("level")) cs.level = parse_level(j.at("level").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("constraint set: ") + e.what());
  }
  return cs;
}

namespace markers {
namespace {

std::vector<std::pair<syntax::SyntaxRule, Marker>> training_rule_markers(const ParallelPair& pair,
                                                                         const syntax::Template& source) {
  std::vector<std::pair<syntax::SyntaxRule, Marker>> out;
  std::multiset<syntax::SyntaxRule> target_rules;
  if (pair.target_parse)
    for (auto& r : syntax::extract_rules(syntax::template_of(*pair.target_parse))) target_rules.insert(std::move(r));
  for (auto& r : syntax::extract_rules(source)) {
    Marker m = !pair.target_parse ? Marker::kIndifferent
                                  : (target_rules.count(r) ? Marker::kKeep : Marker::kReplace);
    out.emplace_back(std::move(r), m);
  }
  return out;
}

}  // namespace

MarkedSentence mark_training_pair(const ParallelPair& pair, double indifferent_fraction, uint64_t seed) {
  if (indifferent_fraction < 0.0 || indifferent_fraction > 1.0)
    throw ValidationError("indifferent_fraction must be in [0, 1]");
  MarkedSentence m;
  m.sentence = pair.source;
  std::unordered_set<std::string> target_stems;
  for (const auto& t : pair.target.tokens) target_stems.insert(t.stem);
  for (const auto& t : pair.source.tokens)
    m.lexical.push_back(target_stems.count(t.stem) ? Marker::kKeep : Marker::kReplace);

  const size_t n = m.lexical.size();
  const size_t k = static_cast<size_t>(std::floor(indifferent_fraction * static_cast<double>(n) + 1e-12));
  if (k > 0) {
    std::mt19937_64 rng(seed);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    // Partial Fisher-Yates; modulo keeps the draw sequence library-independent.
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(rng() % (n - i));
      std::swap(idx[i], idx[j]);
      m.lexical[idx[i]] = Marker::kIndifferent;
    }
  }
  if (pair.source_parse) {
    m.parse = pair.source_parse;
    m.tmpl = syntax::template_of(*pair.source_parse);
    m.rule_markers = training_rule_markers(pair, *m.tmpl);
  }
  return m;
}

MarkedSentence mark_test_sentence(const Sentence& sentence, const std::optional<DependencyTree>& parse,
                                  const ConstraintSet& constraints, MarkMode mode,
                                  const std::unordered_set<std::string>& function_words,
                                  const MarkerOverrides& overrides) {
  if (!overrides.empty() && overrides.size() != sentence.size())
    throw ValidationError("marker override count " + std::to_string(overrides.size()) +
                          " != token count " + std::to_string(sentence.size()));
  MarkedSentence m;
  m.sentence = sentence;
  const auto banned = constraints.banned_stems();
  const Marker fallback = mode == MarkMode::kKeepSimple ? Marker::kKeep : Marker::kIndifferent;
  for (size_t i = 0; i < sentence.size(); ++i) {
    const Token& t = sentence.tokens[i];
    Marker mk = banned.count(t.stem) ? Marker::kReplace : fallback;
    if (function_words.count(lower(t.surface))) mk = Marker::kIndifferent;
    if (!overrides.empty() && overrides[i]) mk = *overrides[i];
    m.lexical.push_back(mk);
  }
  if (parse) {
    m.parse = parse;
    m.tmpl = syntax::template_of(*parse);
    std::set<syntax::SyntaxRule> complex_rules = constraints.banned_rules;
    for (const auto& s : constraints.synchronous) complex_rules.insert(s.complex_side);
    for (auto& r : syntax::extract_rules(*m.tmpl)) {
      Marker mk = complex_rules.count(r) ? Marker::kReplace : Marker::kKeep;
      m.rule_markers.emplace_back(std::move(r), mk);
    }
  }
  return m;
}

ConstraintSet apply_overrides(const ConstraintSet& constraints, const Sentence& sentence,
                              const MarkerOverrides& overrides) {
  if (overrides.empty()) return constraints;
  if (overrides.size() != sentence.size())
    throw ValidationError("marker override count " + std::to_string(overrides.size()) +
                          " != token count " + std::to_string(sentence.size()));
  ConstraintSet cs = constraints;
  std::set<std::string> lifted;
  for (size_t i = 0; i < sentence.size(); ++i)
    if (overrides[i] == Marker::kKeep) lifted.insert(sentence.tokens[i].stem);
  for (auto it = cs.banned_words.begin(); it != cs.banned_words.end();)
    it = lifted.count(lexicon::stem(*it)) ? cs.banned_words.erase(it) : std::next(it);
  std::vector<std::string> drop;
  for (const auto& [c, targets] : cs.substitutions.entries())
    if (lifted.count(lexicon::stem(c))) drop.push_back(c);
  for (const auto& c : drop) cs.substitutions.erase(c);
  for (size_t i = 0; i < sentence.size(); ++i)
    if (overrides[i] == Marker::kReplace && !lifted.count(sentence.tokens[i].stem))
      cs.banned_words.insert(sentence.tokens[i].surface);
  return cs;
}

LevelBudget budget_for(Profile profile, Level level) {
  if (profile == Profile::kWikiLarge)
    return level == Level::kSimple ? LevelBudget{12000, 0.13} : LevelBudget{18000, 0.25};
  return level == Level::kSimple ? LevelBudget{7000, 0.29} : LevelBudget{12000, 0.40};
}

ConstraintSet build_constraint_set(const lexicon::ComplexWordList& list,
                                   const lexicon::SimplificationDictionary* dictionary,
                                   const syntax::RuleRanking& rules, Level level, Profile profile,
                                   const std::vector<syntax::SynchronousRule>& synchronous,
                                   BudgetScale scale) {
  LevelBudget budget = budget_for(profile, level);
  size_t words = budget.words;
  if (scale == BudgetScale::kInventory) {
    const double top = static_cast<double>(budget_for(profile, Level::kXSimple).words);
    words = static_cast<size_t>(std::llround(static_cast<double>(budget.words) / top *
                                             static_cast<double>(list.size())));
  }
  ConstraintSet cs;
  cs.level = level;
  for (auto& w : list.head(words)) cs.banned_words.insert(std::move(w));
  if (dictionary) cs.substitutions = *dictionary;
  // Keep banned words and substitution targets disjoint.
  std::set<std::string> banned_stems;
  for (const auto& w : cs.banned_words) banned_stems.insert(lexicon::stem(w));
  for (const auto& [c, targets] : cs.substitutions.entries())
    banned_stems.insert(lexicon::stem(c));
  std::vector<std::pair<std::string, std::string>> drop;
  for (const auto& [c, targets] : cs.substitutions.entries())
    for (const auto& t : targets)
      if (banned_stems.count(lexicon::stem(t.word))) drop.emplace_back(c, t.word);
  for (const auto& [c, t] : drop) cs.substitutions.remove_target_if(c, t);

  if (rules.inventory_size > 0 && budget.rule_fraction > 0.0)
    for (auto& r : rules.top(budget.rule_fraction)) cs.banned_rules.insert(std::move(r));
  for (const auto& s : synchronous)
    if (cs.banned_rules.count(s.complex_side)) cs.synchronous.push_back(s);
  return cs;
}

EncoderSequence encoder_sequence(const MarkedSentence& marked) {
  if (marked.lexical.size() != marked.sentence.size())
    throw ValidationError("lexical marker count does not match sentence length");
  EncoderSequence seq;
  std::vector<std::string> tmpl_tokens;
  if (marked.tmpl) tmpl_tokens = marked.tmpl->tokens();
  seq.tokens = tmpl_tokens;
  seq.tokens.emplace_back(Vocabulary::kSepSurface);
  seq.word_offset = seq.tokens.size();
  for (const auto& t : marked.sentence.tokens) seq.tokens.push_back(t.surface);
  seq.lexical.assign(seq.word_offset, Marker::kIndifferent);
  seq.lexical.insert(seq.lexical.end(), marked.lexical.begin(), marked.lexical.end());

  if (!marked.tmpl || marked.rule_markers.empty()) return seq;
  const auto& units = marked.tmpl->units;
  if (marked.rule_markers.size() != units.size() + 1)
    throw ValidationError("rule markers do not align with the template");

  // Per-position coverage flags: bit 0 = some REPLACE rule, bit 1 = some KEEP rule.
  std::vector<int> cover(seq.tokens.size(), 0);
  auto apply = [&](size_t pos, Marker m) {
    if (m == Marker::kReplace) cover[pos] |= 1;
    if (m == Marker::kKeep) cover[pos] |= 2;
  };
  const Marker root_marker = marked.rule_markers[0].second;
  for (size_t p = 0; p < seq.tokens.size(); ++p) apply(p, root_marker);
  auto counts = marked.tmpl->unit_token_counts();
  size_t pos = 0;
  for (size_t u = 0; u < units.size(); ++u) {
    for (size_t k = 0; k < counts[u]; ++k) apply(pos + k, marked.rule_markers[u + 1].second);
    pos += counts[u];
  }
  if (marked.parse) {
    auto spans = syntax::unit_spans(*marked.parse);
    for (size_t u = 0; u < spans.size() && u < units.size(); ++u)
      for (int idx : spans[u]) apply(seq.word_offset + static_cast<size_t>(idx - 1), marked.rule_markers[u + 1].second);
  }
  std::vector<Marker> syn(seq.tokens.size(), Marker::kIndifferent);
  for (size_t p = 0; p < syn.size(); ++p) {
    if (cover[p] & 1)
      syn[p] = Marker::kReplace;
    else if (cover[p] & 2)
      syn[p] = Marker::kKeep;
  }
  seq.syntactic = std::move(syn);
  return seq;
}

}  // namespace markers
}  // namespace ctrlsimp
