#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/syntax.hpp"
#include "doctest.h"
#include "synthetic.hpp"

using namespace ctrlsimp;
using namespace ctrlsimp::syntax;

namespace {

DependencyTree square_root() {
  return synth::tree({"take", "the", "square", "root", "of", "the", "variance", "."}, {0, 4, 4, 1, 7, 7, 4, 1},
                     {"root", "det", "amod", "obj", "case", "det", "nmod", "punct"});
}

ParallelPair parsed(const std::string& src, std::vector<int> sh, std::vector<std::string> sl, const std::string& tgt,
                    std::vector<int> th, std::vector<std::string> tl) {
  ParallelPair p{Sentence::parse(src), Sentence::parse(tgt), {}, {}};
  p.source_parse = synth::tree(p.source.surfaces(), sh, sl);
  p.target_parse = synth::tree(p.target.surfaces(), th, tl);
  return p;
}

int height_of(const DependencyTree& t, int i) {
  int h = 0;
  for (int c : t.children(i)) h = std::max(h, 1 + height_of(t, c));
  return h;
}

}  // namespace

TEST_SUITE("syntax") {
  TEST_CASE("square root linearization") {
    auto lin = linearize_parse(square_root());
    CHECK(lin.text ==
          "ROOT( take OBJ( root DET( the ) AMOD( square ) NMOD( variance CASE( of ) DET( the ) ) ) PUNCT( . ) )");
    std::string without_obj_head = lin.text;
    without_obj_head.erase(without_obj_head.find("root "), 5);
    CHECK(without_obj_head ==
          "ROOT( take OBJ( DET( the ) AMOD( square ) NMOD( variance CASE( of ) DET( the ) ) ) PUNCT( . ) )");
  }

  TEST_CASE("square root template and rules") {
    auto t = template_of(square_root());
    CHECK(t.render_display() == "OBJ( AMOD( d0 ) DET( d0 ) NMOD( d1 ) ) PUNCT( )");
    CHECK(t.render() == "OBJ( AMOD( d0 ) DET( d0 ) NMOD( d1 ) OBJ) PUNCT( )");
    auto rules = extract_rules(t);
    REQUIRE(rules.size() == 3);
    CHECK(rules[0].to_string() == "ROOT(OBJ, PUNCT)");
    CHECK(rules[1].to_string() == "OBJ(AMOD, DET, NMOD)");
    CHECK(rules[2].to_string() == "PUNCT()");
    CHECK(join_template_and_tokens(t, Sentence::parse("take the square root of the variance .")) ==
          "OBJ( AMOD( d0 ) DET( d0 ) NMOD( d1 ) OBJ) PUNCT( ) ||| take the square root of the variance .");
  }

  TEST_CASE("small trees") {
    auto hi = synth::tree({"hi"}, {0}, {"root"});
    CHECK(linearize_parse(hi).text == "ROOT( hi )");
    CHECK(template_of(hi).empty());
    auto rules = extract_rules(template_of(hi));
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].to_string() == "ROOT()");
    CHECK(join_template_and_tokens(Template{}, Sentence::parse("hi")) == "||| hi");

    auto ran = synth::tree({"she", "ran"}, {2, 0}, {"nsubj", "root"});
    CHECK(linearize_parse(ran).text == "ROOT( ran NSUBJ( she ) )");

    auto nsubj = Template::parse("NSUBJ( ) PUNCT( )");
    (void)nsubj;
    auto deep = synth::tree({"a", "b", "c", "d", "e"}, {0, 1, 2, 3, 4}, {"root", "obj", "nmod", "amod", "advmod"});
    auto dt = template_of(deep);
    REQUIRE(dt.units.size() == 1);
    REQUIRE(dt.units[0].children.size() == 1);
    CHECK(dt.units[0].children[0].depth == 2);
  }

  TEST_CASE("rules of a hand template") {
    auto t = Template::parse("NSUBJ( ) PUNCT( )");
    auto rules = extract_rules(t);
    REQUIRE(rules.size() == 3);
    CHECK(rules[0].to_string() == "ROOT(NSUBJ, PUNCT)");
    CHECK(rules[1].to_string() == "NSUBJ()");
    CHECK(rules[2].to_string() == "PUNCT()");
  }

  TEST_CASE("template parsing") {
    auto t = template_of(square_root());
    CHECK(Template::parse(t.render()) == t);
    CHECK_THROWS_AS(Template::parse("OBJ( AMOD( d0 ) DET( d0 )"), FormatError);
    CHECK_THROWS_AS(Template::parse("OBJ( AMOD( d0 ) PUNCT)"), FormatError);
    CHECK_THROWS_AS(Template::parse("OBJ( AMOD( x ) OBJ)"), FormatError);
    CHECK_THROWS_AS(Template::parse(")"), FormatError);
    CHECK(Template::parse("").empty());
  }

  TEST_CASE("depth tokens equal subtree height") {
    std::mt19937_64 rng(11);
    const char* labels[] = {"nsubj", "obj", "amod", "det", "nmod", "case", "advmod", "punct"};
    for (int trial = 0; trial < 300; ++trial) {
      int n = 1 + static_cast<int>(rng() % 14);
      std::vector<std::string> words;
      std::vector<int> heads(n), order(n);
      std::vector<std::string> labs(n);
      for (int i = 0; i < n; ++i) {
        words.push_back("w" + std::to_string(i));
        order[i] = i + 1;
      }
      std::shuffle(order.begin(), order.end(), rng);
      for (int k = 0; k < n; ++k) {
        heads[order[k] - 1] = k == 0 ? 0 : order[rng() % k];
        labs[order[k] - 1] = k == 0 ? "root" : labels[rng() % 8];
      }
      auto tree = synth::tree(words, heads, labs);
      auto t = template_of(tree);
      std::multiset<std::pair<std::string, int>> expect, got;
      for (int l1 : tree.children(tree.root()))
        for (int l2 : tree.children(l1)) expect.insert({upper_label(tree.node(l2).label), height_of(tree, l2)});
      for (const auto& u : t.units)
        for (const auto& c : u.children) got.insert({c.label, c.depth});
      CHECK(got == expect);
      CHECK(t.units.size() == tree.children(tree.root()).size());
      for (const auto& u : t.units)
        CHECK(std::is_sorted(u.children.begin(), u.children.end(),
                             [](const auto& a, const auto& b) { return a.label < b.label; }));
      CHECK(Template::parse(t.render()) == t);
      CHECK(extract_template(template_as_linearized(t)) == t);
      auto spans = unit_spans(tree);
      CHECK(spans.size() == t.units.size());
    }
  }

  TEST_CASE("synchronous extraction") {
    std::vector<ParallelPair> pairs;
    pairs.push_back(parsed("eat and rest .", {0, 3, 1, 1}, {"root", "cc", "conj", "punct"}, "eat .", {0, 1},
                           {"root", "punct"}));
    pairs.push_back(parsed("eat food and rest .", {0, 1, 4, 1, 1}, {"root", "obj", "cc", "conj", "punct"},
                           "eat food .", {0, 1, 1}, {"root", "obj", "punct"}));
    pairs.push_back(parsed("eat .", {0, 1}, {"root", "punct"}, "eat .", {0, 1}, {"root", "punct"}));
    pairs.push_back(ParallelPair{Sentence::parse("x"), Sentence::parse("x"), {}, {}});
    auto ex = extract_synchronous_rules(pairs);
    CHECK(ex.skipped_pairs == 1);
    REQUIRE(ex.counts.size() == 2);
    SynchronousRule a{SyntaxRule::parse("Root(conj, punct)"), SyntaxRule::parse("Root(punct)")};
    SynchronousRule b{SyntaxRule::parse("Root(obj,conj,punct)"), SyntaxRule::parse("Root(obj,punct)")};
    CHECK(ex.counts.at(a) == 1);
    CHECK(ex.counts.at(b) == 1);
    CHECK(a.complex_side.to_list_string() == "Root(conj, punct)");
    CHECK(b.complex_side.to_list_string() == "Root(conj, obj, punct)");

    std::stringstream ss;
    write_synchronous(ss, ex.counts);
    auto back = read_synchronous(ss);
    CHECK(std::set<SynchronousRule>(back.begin(), back.end()) == std::set<SynchronousRule>{a, b});
  }

  TEST_CASE("rule complexity count") {
    CHECK(rule_complexity(2, 2, 0, 2, 3) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rule_complexity(1, 4, 1, 4, 5) == 1.0);
  }

  TEST_CASE("rule ranking matches brute force") {
    auto pairs = synth::corpus();
    pairs.resize(20);
    pairs.push_back(parsed("eat and rest .", {0, 3, 1, 1}, {"root", "cc", "conj", "punct"}, "eat .", {0, 1},
                           {"root", "punct"}));
    auto ranking = rank_rules_by_complexity(pairs);
    std::map<std::string, std::pair<long, long>> counts;
    long tc = 0, ts = 0;
    for (const auto& p : pairs) {
      for (const auto& r : extract_rules(template_of(*p.source_parse))) {
        ++counts[r.to_string()].first;
        ++tc;
      }
      for (const auto& r : extract_rules(template_of(*p.target_parse))) {
        ++counts[r.to_string()].second;
        ++ts;
      }
    }
    const double v = static_cast<double>(counts.size());
    std::map<std::string, double> expect;
    for (const auto& [r, c] : counts) {
      double ratio = ((c.first + 1.0) / (tc + v)) / ((c.second + 1.0) / (ts + v));
      if (ratio > 1.0) expect[r] = ratio;
    }
    CHECK(ranking.inventory_size == counts.size());
    REQUIRE(ranking.entries.size() == expect.size());
    for (size_t i = 0; i < ranking.entries.size(); ++i) {
      const auto key = ranking.entries[i].rule.to_string();
      REQUIRE(expect.count(key) == 1);
      CHECK(ranking.entries[i].ratio == expect[key]);
      if (i > 0) CHECK(ranking.entries[i - 1].ratio >= ranking.entries[i].ratio);
    }
    auto top = ranking.top(0.25);
    CHECK(top.size() == std::min(ranking.entries.size(), static_cast<size_t>(std::ceil(0.25 * v))));

    std::stringstream ss;
    write_rule_ranking(ss, ranking);
    auto back = read_rule_ranking(ss);
    CHECK(back.inventory_size == ranking.inventory_size);
    REQUIRE(back.entries.size() == ranking.entries.size());
    for (size_t i = 0; i < back.entries.size(); ++i) CHECK(back.entries[i].rule == ranking.entries[i].rule);

    std::vector<ParallelPair> unparsed{{Sentence::parse("a"), Sentence::parse("a"), {}, {}}};
    CHECK_THROWS_AS(rank_rules_by_complexity(unparsed), ValidationError);
  }

  TEST_CASE("rule parsing and split") {
    auto r = SyntaxRule::parse("root(nsubj,PUNCT)");
    CHECK(SyntaxRule::parse("Root(obj,conj,punct)").to_string() == "ROOT(CONJ, OBJ, PUNCT)");
    CHECK(r.to_string() == "ROOT(NSUBJ, PUNCT)");
    CHECK(SyntaxRule::parse(r.to_list_string()) == r);
    CHECK(SyntaxRule::parse("PUNCT()").children.empty());
    CHECK_THROWS(SyntaxRule::parse("ROOT(NSUBJ"));

    auto [tmpl, words] = split_generated("OBJ( AMOD( d0 ) OBJ) ||| take it");
    CHECK(tmpl == "OBJ( AMOD( d0 ) OBJ)");
    CHECK(words.text() == "take it");
    CHECK(split_generated("||| hi").first.empty());
    CHECK_THROWS_AS(split_generated("no separator"), FormatError);
    CHECK(looks_like_template_symbol("NMOD("));
    CHECK(looks_like_template_symbol("d3"));
    CHECK_FALSE(looks_like_template_symbol("dog"));
  }
}
