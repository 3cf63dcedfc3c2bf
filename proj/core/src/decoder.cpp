#include "ctrlsimp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/stem.hpp"

namespace ctrlsimp::decoder {

void DecodeSettings::validate() const {
  if (beam_size < 1) throw ValidationError("beam_size must be >= 1");
  if (max_template_len < 0) throw ValidationError("max_template_len must be >= 0");
  if (max_token_len < 0) throw ValidationError("max_token_len must be >= 0");
  if (length_penalty < 0.0) throw ValidationError("length_penalty must be >= 0");
}

PreparedConstraints prepare_constraints(const model::Model& m, const model::SourceInput& source,
                                        const MarkedSentence& marked, const ConstraintSet& constraints) {
  const Vocabulary& vocab = m.vocab;
  PreparedConstraints pc;
  const int ext = source.extended_size(vocab.size());
  pc.banned.assign(static_cast<size_t>(ext), false);
  const auto stems = constraints.banned_stems();
  if (!stems.empty()) {
    for (int id = Vocabulary::kReservedCount; id < vocab.size(); ++id)
      if (vocab.is_word(id) && stems.count(lexicon::stem(vocab.surface_of(id)))) pc.banned[static_cast<size_t>(id)] = true;
    for (size_t k = 0; k < source.oov_surfaces.size(); ++k)
      if (stems.count(lexicon::stem(source.oov_surfaces[k]))) pc.banned[static_cast<size_t>(vocab.size()) + k] = true;
  }

  if (!constraints.substitutions.empty()) {
    std::set<std::string> seen;
    for (size_t i = 0; i < marked.sentence.size(); ++i) {
      if (marked.lexical[i] != Marker::kReplace) continue;
      const Token& tok = marked.sentence.tokens[i];
      if (!seen.insert(tok.stem).second) continue;
      auto targets = constraints.substitutions.lookup_stem(tok.stem);
      if (targets.empty()) continue;
      std::vector<int> group;
      std::string name = tok.surface + "->";
      for (const auto& t : targets) {
        int id = vocab.id_of(t.word);
        if (id == Vocabulary::kUnk)
          for (size_t k = 0; k < source.oov_surfaces.size(); ++k)
            if (source.oov_surfaces[k] == t.word) id = vocab.size() + static_cast<int>(k);
        if (id != Vocabulary::kUnk && !pc.banned[static_cast<size_t>(id)]) group.push_back(id);
        name += (name.back() == '>' ? "" : "|") + t.word;
      }
      std::sort(group.begin(), group.end());
      group.erase(std::unique(group.begin(), group.end()), group.end());
      pc.positive.push_back(std::move(group));
      pc.positive_names.push_back(std::move(name));
    }
  }

  pc.banned_rules = constraints.banned_rules;
  if (marked.tmpl && !constraints.synchronous.empty()) {
    auto source_rules = syntax::extract_rules(*marked.tmpl);
    std::set<syntax::SyntaxRule> present(source_rules.begin(), source_rules.end());
    std::set<syntax::SyntaxRule> targets;
    for (const auto& s : constraints.synchronous)
      if (present.count(s.complex_side) && !pc.banned_rules.count(s.simple_side)) targets.insert(s.simple_side);
    pc.rule_targets.assign(targets.begin(), targets.end());
  }
  return pc;
}

namespace {

// Template grammar: units "L( )" or "L( C( d<k> ) ... L)".
enum class GState : uint8_t { kBetween, kOpened, kChildOpen, kChildDepth, kChildDone };

struct SymbolClass {
  enum Kind : uint8_t { kOther, kOpener, kCloser, kBareClose, kDepth } kind = kOther;
  std::string label;
};

SymbolClass classify(const std::string& s) {
  SymbolClass c;
  if (s == ")") {
    c.kind = SymbolClass::kBareClose;
  } else if (s.size() >= 2 && s[0] == 'd' && std::all_of(s.begin() + 1, s.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    c.kind = SymbolClass::kDepth;
  } else if (s.size() > 1 && s.back() == '(') {
    c.kind = SymbolClass::kOpener;
    c.label = s.substr(0, s.size() - 1);
  } else if (s.size() > 1 && s.back() == ')') {
    c.kind = SymbolClass::kCloser;
    c.label = s.substr(0, s.size() - 1);
  }
  return c;
}

size_t min_to_close(GState g) {
  switch (g) {
    case GState::kBetween: return 0;
    case GState::kOpened: return 1;
    case GState::kChildOpen: return 3;
    case GState::kChildDepth: return 2;
    case GState::kChildDone: return 1;
  }
  return 0;
}

// Next grammar state, or false when `c` cannot follow.
bool advance(GState g, const std::string& unit, const SymbolClass& c, GState& next) {
  switch (g) {
    case GState::kBetween:
      if (c.kind != SymbolClass::kOpener) return false;
      next = GState::kOpened;
      return true;
    case GState::kOpened:
      if (c.kind == SymbolClass::kBareClose) next = GState::kBetween;
      else if (c.kind == SymbolClass::kOpener) next = GState::kChildOpen;
      else return false;
      return true;
    case GState::kChildOpen:
      if (c.kind != SymbolClass::kDepth) return false;
      next = GState::kChildDepth;
      return true;
    case GState::kChildDepth:
      if (c.kind != SymbolClass::kBareClose) return false;
      next = GState::kChildDone;
      return true;
    case GState::kChildDone:
      if (c.kind == SymbolClass::kCloser && c.label == unit) next = GState::kBetween;
      else if (c.kind == SymbolClass::kOpener) next = GState::kChildOpen;
      else return false;
      return true;
  }
  return false;
}

struct Hyp {
  std::vector<int> ids;
  GState grammar = GState::kBetween;
  std::string unit;  // label of the open unit
  double logprob = 0.0;
  Phase phase = Phase::kTemplate;
  size_t template_len = 0;
  size_t token_len = 0;
  std::vector<bool> satisfied;
  int satisfied_count = 0;
  std::vector<syntax::SyntaxRule> rules;
  std::shared_ptr<const model::IncrementalDecoder::State> state;
  std::shared_ptr<const std::vector<double>> next;
};

struct Expansion {
  size_t parent;
  int token;
  double logprob;
  int bucket;
  int rules_slot = -1;
};

bool ids_less(const std::vector<int>& a, int ta, const std::vector<int>& b, int tb) {
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  if (a.size() != b.size()) return a.size() < b.size();
  return ta < tb;
}

double normalized(double logprob, size_t len, double lp) {
  return logprob / std::pow(static_cast<double>(len), lp);
}

}  // namespace

DecodeResult beam_search(const model::Model& m, const model::SourceInput& source, const PreparedConstraints& pc,
                         const DecodeSettings& settings, size_t source_words) {
  settings.validate();
  const Vocabulary& vocab = m.vocab;
  const int V = vocab.size();
  const int ext = source.extended_size(V);
  if (static_cast<int>(pc.banned.size()) != ext) throw ValidationError("constraint mask does not match source");

  // BOS, template, SEP, tokens and EOS must fit the positional table.
  const size_t position_room = static_cast<size_t>(m.config.max_positions) - 1;
  if (position_room < 3) throw LengthError("max_positions leaves no room for output tokens");
  const size_t max_template = std::min(static_cast<size_t>(settings.max_template_len), (position_room - 3) / 2);
  size_t max_tokens = settings.max_token_len > 0 ? static_cast<size_t>(settings.max_token_len) : 2 * source_words + 8;
  max_tokens = std::min(max_tokens, position_room - max_template - 2);

  std::vector<int> template_ids, token_ids;
  std::vector<SymbolClass> classes(static_cast<size_t>(V));
  for (int id = Vocabulary::kReservedCount; id < V; ++id) {
    if (vocab.is_template_symbol(id)) {
      template_ids.push_back(id);
      classes[static_cast<size_t>(id)] = classify(vocab.surface_of(id));
    }
    if (vocab.is_word(id) && !pc.banned[static_cast<size_t>(id)]) token_ids.push_back(id);
  }
  for (int id = V; id < ext; ++id)
    if (!pc.banned[static_cast<size_t>(id)]) token_ids.push_back(id);

  // Group membership per extended id.
  std::vector<std::vector<size_t>> groups_of(static_cast<size_t>(ext));
  for (size_t g = 0; g < pc.positive.size(); ++g)
    for (int id : pc.positive[g]) groups_of[static_cast<size_t>(id)].push_back(g);

  const std::vector<Marker>* syn = source.syntactic ? &*source.syntactic : nullptr;
  model::Matrix h0 = model::embed_input(m.params, m.config, source.ids, source.lexical, syn);
  model::Matrix enc = model::encoder_forward(h0, m.params, m.config).output;
  model::IncrementalDecoder dec(m.params, m.config, enc, source);

  Hyp init;
  init.satisfied.assign(pc.positive.size(), false);
  {
    auto st = std::make_shared<model::IncrementalDecoder::State>(dec.initial_state());
    init.next = std::make_shared<std::vector<double>>(dec.step(*st, Vocabulary::kBos));
    init.state = std::move(st);
  }
  std::vector<Hyp> beam{std::move(init)};
  std::vector<Candidate> finished;
  size_t pruned_malformed = 0;
  std::map<std::string, size_t> pruned_rules;

  auto log_of = [](double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); };

  while (!beam.empty()) {
    std::vector<Expansion> cands;
    std::vector<std::vector<syntax::SyntaxRule>> rule_sets;
    for (size_t h = 0; h < beam.size(); ++h) {
      const Hyp& hyp = beam[h];
      const auto& dist = *hyp.next;
      auto push = [&](int token) {
        const double lp = log_of(dist[static_cast<size_t>(token)]);
        if (!std::isfinite(lp)) return;
        int bucket = hyp.satisfied_count;
        int slot = -1;
        if (token == Vocabulary::kSep) {
          std::vector<std::string> toks;
          for (int id : hyp.ids) toks.push_back(vocab.surface_of(id));
          syntax::Template t;
          try {
            t = syntax::Template::parse_tokens(toks);
          } catch (const FormatError&) {
            ++pruned_malformed;
            return;
          }
          auto rules = syntax::extract_rules(t);
          bool blocked = false;
          for (const auto& r : rules)
            if (pc.banned_rules.count(r)) {
              ++pruned_rules[r.to_string()];
              blocked = true;
            }
          if (blocked) return;
          for (const auto& target : pc.rule_targets)
            if (std::find(rules.begin(), rules.end(), target) != rules.end()) ++bucket;
          slot = static_cast<int>(rule_sets.size());
          rule_sets.push_back(std::move(rules));
        } else if (hyp.phase == Phase::kTokens) {
          for (size_t g : groups_of[static_cast<size_t>(token)])
            if (!hyp.satisfied[g]) ++bucket;
        }
        cands.push_back({h, token, hyp.logprob + lp, bucket, slot});
      };
      if (hyp.phase == Phase::kTemplate) {
        if (hyp.template_len < max_template)
          for (int id : template_ids) {
            if (settings.template_grammar) {
              GState next;
              if (!advance(hyp.grammar, hyp.unit, classes[static_cast<size_t>(id)], next)) continue;
              if (hyp.template_len + 1 + min_to_close(next) > max_template) continue;
            }
            push(id);
          }
        if (!settings.template_grammar || hyp.grammar == GState::kBetween) push(Vocabulary::kSep);
      } else {
        if (hyp.token_len < max_tokens)
          for (int id : token_ids) push(id);
        if (hyp.token_len >= 1) push(Vocabulary::kEos);
      }
    }
    if (cands.empty()) break;

    auto better = [&](const Expansion& a, const Expansion& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      return ids_less(beam[a.parent].ids, a.token, beam[b.parent].ids, b.token);
    };
    std::map<int, std::vector<Expansion>, std::greater<int>> banks;
    for (const auto& c : cands) banks[c.bucket].push_back(c);
    for (auto& [b, v] : banks) std::sort(v.begin(), v.end(), better);

    // Round-robin over banks, highest satisfied count first.
    std::vector<Expansion> chosen;
    std::vector<size_t> cursor(banks.size(), 0);
    const size_t want = static_cast<size_t>(settings.beam_size);
    bool progress = true;
    while (chosen.size() < want && progress) {
      progress = false;
      size_t bi = 0;
      for (auto& [b, v] : banks) {
        if (chosen.size() >= want) break;
        if (cursor[bi] < v.size()) {
          chosen.push_back(v[cursor[bi]++]);
          progress = true;
        }
        ++bi;
      }
    }

    std::vector<Hyp> next_beam;
    for (const auto& c : chosen) {
      const Hyp& parent = beam[c.parent];
      Hyp h;
      h.ids = parent.ids;
      h.ids.push_back(c.token);
      h.logprob = c.logprob;
      h.phase = parent.phase;
      h.grammar = parent.grammar;
      h.unit = parent.unit;
      h.template_len = parent.template_len;
      h.token_len = parent.token_len;
      h.satisfied = parent.satisfied;
      h.satisfied_count = parent.satisfied_count;
      h.rules = parent.rules;
      if (c.token == Vocabulary::kEos) {
        finished.push_back({h.ids, h.logprob, normalized(h.logprob, h.ids.size(), settings.length_penalty),
                            h.satisfied_count});
        continue;
      }
      if (c.token == Vocabulary::kSep) {
        h.rules = rule_sets[static_cast<size_t>(c.rules_slot)];
        h.satisfied_count = c.bucket;
        h.phase = Phase::kTokens;
      } else if (h.phase == Phase::kTemplate) {
        ++h.template_len;
        const SymbolClass& sc = classes[static_cast<size_t>(c.token)];
        GState next = GState::kBetween;
        if (advance(parent.grammar, parent.unit, sc, next)) {
          if (parent.grammar == GState::kBetween) h.unit = sc.label;
          h.grammar = next;
        }
      } else {
        ++h.token_len;
        for (size_t g : groups_of[static_cast<size_t>(c.token)])
          if (!h.satisfied[g]) {
            h.satisfied[g] = true;
            ++h.satisfied_count;
          }
      }
      auto st = std::make_shared<model::IncrementalDecoder::State>(*parent.state);
      h.next = std::make_shared<std::vector<double>>(dec.step(*st, c.token));
      h.state = std::move(st);
      next_beam.push_back(std::move(h));
    }
    beam = std::move(next_beam);
  }

  if (finished.empty()) {
    std::vector<std::string> blocking;
    for (const auto& [rule, n] : pruned_rules) blocking.push_back("banned rule " + rule);
    if (pruned_malformed > 0) blocking.push_back("no well-formed template");
    if (token_ids.empty()) blocking.push_back("every output word is banned");
    if (blocking.empty()) blocking.push_back("no hypothesis reached EOS");
    throw ConstraintInfeasible(blocking);
  }
  std::sort(finished.begin(), finished.end(), [](const Candidate& a, const Candidate& b) {
    if (a.satisfied != b.satisfied) return a.satisfied > b.satisfied;
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
  });

  const Candidate& best = finished.front();
  DecodeResult r;
  r.ids = best.ids;
  r.logprob = best.logprob;
  r.score = best.score;
  r.satisfied = best.satisfied;
  r.constraint_count = pc.constraint_count();
  auto surface = [&](int id) {
    return id >= V ? source.oov_surfaces[static_cast<size_t>(id - V)] : vocab.surface_of(id);
  };
  size_t i = 0;
  for (; i < best.ids.size() && best.ids[i] != Vocabulary::kSep; ++i) r.template_tokens.push_back(surface(best.ids[i]));
  std::vector<std::string> words;
  for (++i; i < best.ids.size() && best.ids[i] != Vocabulary::kEos; ++i) words.push_back(surface(best.ids[i]));
  r.output = Sentence::from_words(words);
  syntax::Template t = syntax::Template::parse_tokens(r.template_tokens);
  r.template_text = t.render();
  r.rules = syntax::extract_rules(t);
  const size_t keep = std::min(finished.size(), static_cast<size_t>(std::max(settings.nbest, 1)));
  r.nbest.assign(finished.begin(), finished.begin() + static_cast<std::ptrdiff_t>(keep));
  return r;
}

DecodeResult beam_search(const model::Model& m, const MarkedSentence& marked, const ConstraintSet& constraints,
                         const DecodeSettings& settings) {
  model::SourceInput source = model::make_source_input(markers::encoder_sequence(marked), m.vocab);
  PreparedConstraints pc = prepare_constraints(m, source, marked, constraints);
  return beam_search(m, source, pc, settings, marked.sentence.size());
}

DecodeResult greedy(const model::Model& m, const MarkedSentence& marked) {
  DecodeSettings s;
  s.beam_size = 1;
  return beam_search(m, marked, ConstraintSet{}, s);
}

}  // namespace ctrlsimp::decoder
