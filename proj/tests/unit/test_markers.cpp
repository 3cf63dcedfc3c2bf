#include <random>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/markers.hpp"
#include "doctest.h"
#include "synthetic.hpp"

using namespace ctrlsimp;
using M = Marker;

namespace {

ParallelPair plain(const char* c, const char* s) { return {Sentence::parse(c), Sentence::parse(s), {}, {}}; }

ConstraintSet banning(std::initializer_list<const char*> words) {
  ConstraintSet cs;
  for (auto w : words) cs.banned_words.insert(w);
  return cs;
}

}  // namespace

TEST_SUITE("markers") {
  TEST_CASE("training markers") {
    auto m = markers::mark_training_pair(plain("the big dog", "the dog"), 0.0, 1);
    CHECK(m.lexical == std::vector<M>{M::kKeep, M::kReplace, M::kKeep});
    auto r = markers::mark_training_pair(plain("running fast", "runs fast"), 0.0, 1);
    CHECK(r.lexical[0] == M::kKeep);
    CHECK_THROWS_AS(markers::mark_training_pair(plain("a", "a"), 1.5, 1), ValidationError);
  }

  TEST_CASE("indifferent fraction") {
    auto pair = plain("a b c d e f g h i j", "a c e");
    auto base = markers::mark_training_pair(pair, 0.0, 0);
    for (uint64_t seed = 0; seed < 50; ++seed) {
      auto m = markers::mark_training_pair(pair, 0.5, seed);
      int ind = 0;
      for (size_t i = 0; i < m.lexical.size(); ++i) {
        if (m.lexical[i] == M::kIndifferent)
          ++ind;
        else
          CHECK(m.lexical[i] == base.lexical[i]);
      }
      CHECK(ind == 5);
      CHECK(markers::mark_training_pair(pair, 0.5, seed).lexical == m.lexical);
    }
    auto all = markers::mark_training_pair(pair, 1.0, 3);
    CHECK(std::all_of(all.lexical.begin(), all.lexical.end(), [](M x) { return x == M::kIndifferent; }));
  }

  TEST_CASE("training rule markers") {
    auto pairs = synth::corpus();
    for (const auto& p : pairs) {
      auto m = markers::mark_training_pair(p, 0.0, 0);
      REQUIRE(m.tmpl.has_value());
      auto rules = syntax::extract_rules(*m.tmpl);
      REQUIRE(m.rule_markers.size() == rules.size());
      auto target = syntax::extract_rules(syntax::template_of(*p.target_parse));
      for (size_t i = 0; i < rules.size(); ++i) {
        CHECK(m.rule_markers[i].first == rules[i]);
        bool in_target = std::find(target.begin(), target.end(), rules[i]) != target.end();
        CHECK(m.rule_markers[i].second == (in_target ? M::kKeep : M::kReplace));
      }
    }
  }

  TEST_CASE("test marking") {
    auto s = Sentence::parse("Dextromethorphan occurs as a white powder");
    auto m = markers::mark_test_sentence(s, std::nullopt, banning({"occurs"}), MarkMode::kKeepSimple,
                                         corpus::function_words());
    CHECK(m.lexical == std::vector<M>{M::kKeep, M::kReplace, M::kIndifferent, M::kIndifferent, M::kKeep, M::kKeep});

    auto e = markers::mark_test_sentence(s, std::nullopt, ConstraintSet{}, MarkMode::kIndifferentSimple,
                                         corpus::function_words());
    CHECK(std::all_of(e.lexical.begin(), e.lexical.end(), [](M x) { return x == M::kIndifferent; }));

    markers::MarkerOverrides ov(s.size());
    ov[1] = M::kKeep;
    ov[4] = M::kReplace;
    auto o = markers::mark_test_sentence(s, std::nullopt, banning({"occurs"}), MarkMode::kKeepSimple,
                                         corpus::function_words(), ov);
    CHECK(o.lexical[1] == M::kKeep);
    CHECK(o.lexical[4] == M::kReplace);
    CHECK(o.serialize() ==
          "Dextromethorphan/KEEP occurs/KEEP as/INDIFFERENT a/INDIFFERENT white/REPLACE powder/KEEP");
    CHECK_THROWS_AS(markers::mark_test_sentence(s, std::nullopt, {}, MarkMode::kKeepSimple, corpus::function_words(),
                                                markers::MarkerOverrides(2)),
                    ValidationError);

    ConstraintSet dict;
    dict.substitutions.add("occurs", "is");
    auto d = markers::mark_test_sentence(Sentence::parse("it occurred"), std::nullopt, dict, MarkMode::kKeepSimple,
                                         corpus::function_words());
    CHECK(d.lexical[1] == M::kReplace);
  }

  TEST_CASE("budgets") {
    CHECK(markers::budget_for(Profile::kNewsela, Level::kXSimple).words == 12000);
    CHECK(markers::budget_for(Profile::kWikiLarge, Level::kXSimple).words == 18000);
    CHECK(markers::budget_for(Profile::kWikiLarge, Level::kXSimple).rule_fraction == 0.25);
    CHECK(markers::budget_for(Profile::kWikiLarge, Level::kSimple).words == 12000);
    CHECK(markers::budget_for(Profile::kNewsela, Level::kSimple).words == 7000);

    lexicon::ComplexWordList list;
    for (int i = 0; i < 100; ++i) list.entries.push_back({"w" + std::to_string(i), "w" + std::to_string(i), 200.0 - i});
    syntax::RuleRanking rules;
    auto cs = markers::build_constraint_set(list, nullptr, rules, Level::kXSimple, Profile::kNewsela);
    CHECK(cs.banned_words.size() == 100);

    auto simple = markers::build_constraint_set(list, nullptr, rules, Level::kSimple, Profile::kWikiLarge, {},
                                                BudgetScale::kInventory);
    auto xsimple = markers::build_constraint_set(list, nullptr, rules, Level::kXSimple, Profile::kWikiLarge, {},
                                                 BudgetScale::kInventory);
    CHECK(simple.banned_words.size() == 67);
    CHECK(xsimple.banned_words.size() == 100);
    for (const auto& w : simple.banned_words) CHECK(xsimple.banned_words.count(w) == 1);
  }

  TEST_CASE("xsimple is a superset") {
    auto pairs = synth::corpus();
    auto ranking = syntax::rank_rules_by_complexity(pairs);
    auto list = lexicon::build_complex_list(pairs, 1000);
    auto dict = lexicon::bundled_manual_dictionary();
    for (Profile p : {Profile::kWikiLarge, Profile::kNewsela}) {
      auto s = markers::build_constraint_set(list, &dict, ranking, Level::kSimple, p, {}, BudgetScale::kInventory);
      auto x = markers::build_constraint_set(list, &dict, ranking, Level::kXSimple, p, {}, BudgetScale::kInventory);
      for (const auto& w : s.banned_words) CHECK(x.banned_words.count(w) == 1);
      for (const auto& r : s.banned_rules) CHECK(x.banned_rules.count(r) == 1);
      CHECK(x.banned_words.size() >= s.banned_words.size());
      for (const auto& [c, targets] : x.substitutions.entries())
        for (const auto& t : targets) CHECK(x.banned_stems().count(lexicon::stem(t.word)) == 0);
    }
  }

  TEST_CASE("constraint json round trip") {
    ConstraintSet cs = banning({"occurs", "enormous"});
    cs.substitutions.add("commence", "start", 0.5);
    cs.banned_rules.insert(syntax::SyntaxRule::parse("Root(conj, punct)"));
    cs.synchronous.push_back({syntax::SyntaxRule::parse("Root(conj, punct)"), syntax::SyntaxRule::parse("Root(punct)")});
    cs.level = Level::kXSimple;
    auto back = ConstraintSet::from_json(cs.to_json());
    CHECK(back.banned_words == cs.banned_words);
    CHECK(back.substitutions == cs.substitutions);
    CHECK(back.banned_rules == cs.banned_rules);
    CHECK(back.synchronous == cs.synchronous);
    CHECK(back.level == Level::kXSimple);
    CHECK_THROWS_AS(ConstraintSet::from_json("{"), FormatError);
    CHECK_THROWS_AS(ConstraintSet::from_json(R"({"banned_words": 3})"), FormatError);
  }

  TEST_CASE("marker names") {
    for (M m : {M::kReplace, M::kKeep, M::kIndifferent}) CHECK(parse_marker(marker_name(m)) == m);
    CHECK(parse_marker("r") == M::kReplace);
    CHECK_THROWS_AS(parse_marker("x"), ValidationError);
    CHECK(parse_level("xsimple") == Level::kXSimple);
    CHECK(mode_for(Profile::kNewsela) == MarkMode::kIndifferentSimple);
  }

  TEST_CASE("encoder sequence projection") {
    auto pairs = synth::corpus();
    std::mt19937_64 rng(9);
    for (const auto& p : pairs) {
      auto m = markers::mark_training_pair(p, 0.5, rng());
      for (auto& rm : m.rule_markers) rm.second = static_cast<M>(rng() % 3);
      auto seq = markers::encoder_sequence(m);
      const auto tt = m.tmpl->tokens();
      REQUIRE(seq.word_offset == tt.size() + 1);
      CHECK(seq.tokens[tt.size()] == "|||");
      REQUIRE(seq.syntactic.has_value());
      REQUIRE(seq.tokens.size() == seq.lexical.size());
      for (size_t i = 0; i < m.sentence.size(); ++i) CHECK(seq.lexical[seq.word_offset + i] == m.lexical[i]);
      // Oracle: each position takes the strongest marker among rules covering it.
      auto spans = syntax::unit_spans(*m.parse);
      auto counts = m.tmpl->unit_token_counts();
      for (size_t pos = 0; pos < seq.tokens.size(); ++pos) {
        std::vector<M> cover{m.rule_markers[0].second};
        size_t start = 0;
        for (size_t u = 0; u < counts.size(); ++u) {
          if (pos >= start && pos < start + counts[u]) cover.push_back(m.rule_markers[u + 1].second);
          start += counts[u];
        }
        if (pos >= seq.word_offset)
          for (size_t u = 0; u < spans.size(); ++u)
            if (std::find(spans[u].begin(), spans[u].end(), static_cast<int>(pos - seq.word_offset + 1)) !=
                spans[u].end())
              cover.push_back(m.rule_markers[u + 1].second);
        M expect = M::kIndifferent;
        if (std::count(cover.begin(), cover.end(), M::kReplace))
          expect = M::kReplace;
        else if (std::count(cover.begin(), cover.end(), M::kKeep))
          expect = M::kKeep;
        CHECK((*seq.syntactic)[pos] == expect);
      }
    }
    MarkedSentence bare{Sentence::parse("hi there"), {M::kKeep, M::kKeep}, {}, {}, {}};
    auto seq = markers::encoder_sequence(bare);
    CHECK(seq.tokens == std::vector<std::string>{"|||", "hi", "there"});
    CHECK_FALSE(seq.syntactic.has_value());
  }
}
