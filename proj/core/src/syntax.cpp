#include "ctrlsimp/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "ctrlsimp/errors.hpp"

namespace ctrlsimp::syntax {
namespace {

const std::vector<std::string>& universal_labels() {
  static const std::vector<std::string> labels = {
      "acl",     "advcl",      "advmod", "amod",     "appos",     "aux",     "case",   "cc",
      "ccomp",   "clf",        "compound", "conj",   "cop",       "csubj",   "dep",    "det",
      "discourse", "dislocated", "expl",  "fixed",    "flat",      "goeswith", "iobj",  "list",
      "mark",    "nmod",       "nsubj",  "nummod",   "obj",       "obl",     "orphan", "parataxis",
      "punct",   "reparandum", "root",   "vocative", "xcomp"};
  return labels;
}

std::vector<std::string> split_spaces(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_opener(std::string_view tok) { return tok.size() > 1 && tok.back() == '('; }

std::string depth_token(int depth) { return "d" + std::to_string(depth); }

bool parse_depth_token(std::string_view tok, int& depth) {
  if (tok.size() < 2 || tok[0] != 'd') return false;
  int v = 0;
  for (size_t i = 1; i < tok.size(); ++i) {
    if (tok[i] < '0' || tok[i] > '9') return false;
    v = v * 10 + (tok[i] - '0');
  }
  depth = v;
  return true;
}

// Label tree recovered from a linearization.
struct LNode {
  std::string label;
  std::string head;
  std::vector<std::unique_ptr<LNode>> children;
};

int height(const LNode& n) {
  int h = 0;
  for (const auto& c : n.children) h = std::max(h, 1 + height(*c));
  return h;
}

std::unique_ptr<LNode> parse_linearized(const std::vector<std::string>& toks, size_t& pos) {
  if (pos >= toks.size() || !is_opener(toks[pos]))
    throw FormatError("linearization: expected LABEL( at token " + std::to_string(pos));
  auto node = std::make_unique<LNode>();
  node->label = toks[pos].substr(0, toks[pos].size() - 1);
  ++pos;
  if (pos >= toks.size()) throw FormatError("linearization: missing head word");
  node->head = toks[pos++];
  while (true) {
    if (pos >= toks.size()) throw FormatError("linearization: unbalanced brackets");
    if (toks[pos] == ")") {
      ++pos;
      return node;
    }
    node->children.push_back(parse_linearized(toks, pos));
  }
}

template <class T, class Key>
void stable_sort_by(std::vector<T>& v, Key key) {
  std::stable_sort(v.begin(), v.end(), [&](const T& a, const T& b) { return key(a) < key(b); });
}

void linearize_into(const DependencyTree& tree, int index, std::string& out) {
  const auto& nd = tree.node(index);
  out += (nd.head == 0 ? std::string(kRootLabel) : upper_label(nd.label)) + "( " + nd.surface + " ";
  for (int c : tree.children(index)) linearize_into(tree, c, out);
  out += ") ";
}

}  // namespace

std::string upper_label(std::string_view label) {
  std::string s(label);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

LinearizedParse linearize_parse(const DependencyTree& tree) {
  std::string out;
  linearize_into(tree, tree.root(), out);
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return {out};
}

Template extract_template(const LinearizedParse& linear) {
  auto toks = split_spaces(linear.text);
  size_t pos = 0;
  auto root = parse_linearized(toks, pos);
  if (pos != toks.size()) throw FormatError("linearization: trailing tokens after root");
  Template t;
  std::vector<const LNode*> level1;
  for (const auto& c : root->children) level1.push_back(c.get());
  stable_sort_by(level1, [](const LNode* n) { return n->label; });
  for (const LNode* l1 : level1) {
    TemplateUnit unit{l1->label, {}};
    std::vector<const LNode*> level2;
    for (const auto& c : l1->children) level2.push_back(c.get());
    stable_sort_by(level2, [](const LNode* n) { return n->label; });
    for (const LNode* l2 : level2) unit.children.push_back({l2->label, height(*l2)});
    t.units.push_back(std::move(unit));
  }
  return t;
}

Template template_of(const DependencyTree& tree) { return extract_template(linearize_parse(tree)); }

std::vector<std::vector<int>> unit_spans(const DependencyTree& tree) {
  std::vector<int> level1 = tree.children(tree.root());
  stable_sort_by(level1, [&](int i) { return upper_label(tree.node(i).label); });
  std::vector<std::vector<int>> spans;
  for (int i : level1) spans.push_back(tree.subtree(i));
  return spans;
}

LinearizedParse template_as_linearized(const Template& t) {
  std::string out = std::string(kRootLabel) + "( _ ";
  for (const auto& u : t.units) {
    out += u.label + "( _ ";
    for (const auto& c : u.children) {
      out += c.label + "( _ ";
      for (int d = 0; d < c.depth; ++d) out += "DEP( _ ";
      for (int d = 0; d < c.depth; ++d) out += ") ";
      out += ") ";
    }
    out += ") ";
  }
  out += ")";
  return {out};
}

std::string Template::render() const {
  std::string out;
  for (const auto& tok : tokens()) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::string Template::render_display() const {
  std::string out;
  for (const auto& tok : tokens()) {
    if (!out.empty()) out += ' ';
    out += (tok.size() > 1 && tok.back() == ')') ? std::string(")") : tok;
  }
  return out;
}

std::vector<std::string> Template::tokens() const {
  std::vector<std::string> out;
  for (const auto& u : units) {
    out.push_back(u.label + "(");
    if (u.children.empty()) {
      out.push_back(")");
      continue;
    }
    for (const auto& c : u.children) {
      out.push_back(c.label + "(");
      out.push_back(depth_token(c.depth));
      out.push_back(")");
    }
    out.push_back(u.label + ")");
  }
  return out;
}

std::vector<size_t> Template::unit_token_counts() const {
  std::vector<size_t> out;
  for (const auto& u : units) out.push_back(u.children.empty() ? 2 : 2 + 3 * u.children.size());
  return out;
}

Template Template::parse(std::string_view text) {
  auto toks = split_spaces(text);
  return parse_tokens(toks);
}

Template Template::parse_tokens(std::span<const std::string> toks) {
  Template t;
  size_t pos = 0;
  auto fail = [&](const std::string& why) -> Template {
    throw FormatError("template: " + why + " at token " + std::to_string(pos));
  };
  while (pos < toks.size()) {
    if (!is_opener(toks[pos])) return fail("expected LABEL(");
    TemplateUnit unit{toks[pos].substr(0, toks[pos].size() - 1), {}};
    ++pos;
    if (pos >= toks.size()) return fail("unterminated unit");
    if (toks[pos] == ")") {
      ++pos;
      t.units.push_back(std::move(unit));
      continue;
    }
    const std::string close = unit.label + ")";
    while (true) {
      if (pos >= toks.size()) return fail("unterminated unit");
      if (toks[pos] == close) {
        ++pos;
        break;
      }
      if (!is_opener(toks[pos])) return fail("expected child LABEL( or " + close);
      TemplateChild child{toks[pos].substr(0, toks[pos].size() - 1), 0};
      ++pos;
      if (pos >= toks.size() || !parse_depth_token(toks[pos], child.depth)) return fail("expected d<k>");
      ++pos;
      if (pos >= toks.size() || toks[pos] != ")") return fail("expected )");
      ++pos;
      unit.children.push_back(std::move(child));
    }
    t.units.push_back(std::move(unit));
  }
  return t;
}

std::vector<SyntaxRule> extract_rules(const Template& t) {
  std::vector<SyntaxRule> rules;
  SyntaxRule root{std::string(kRootLabel), {}};
  for (const auto& u : t.units) root.children.push_back(u.label);
  rules.push_back(std::move(root));
  for (const auto& u : t.units) {
    SyntaxRule r{u.label, {}};
    for (const auto& c : u.children) r.children.push_back(c.label);
    rules.push_back(std::move(r));
  }
  return rules;
}

std::string SyntaxRule::to_string() const {
  std::string out = parent + "(";
  for (size_t i = 0; i < children.size(); ++i) {
    if (i) out += ", ";
    out += children[i];
  }
  return out + ")";
}

std::string SyntaxRule::to_list_string() const {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  std::string out = parent == kRootLabel ? std::string("Root") : lower(parent);
  out += "(";
  for (size_t i = 0; i < children.size(); ++i) {
    if (i) out += ", ";
    out += lower(children[i]);
  }
  return out + ")";
}

SyntaxRule SyntaxRule::parse(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  auto open = text.find('(');
  if (open == std::string_view::npos || open == 0 || text.back() != ')')
    throw FormatError("rule '" + std::string(text) + "' is not of the form Parent(children)");
  SyntaxRule r;
  r.parent = upper_label(trim(text.substr(0, open)));
  std::string_view inner = text.substr(open + 1, text.size() - open - 2);
  if (!trim(inner).empty()) {
    // Children may be separated by commas and/or spaces.
    std::string cur;
    auto push = [&]() {
      if (!cur.empty()) r.children.push_back(upper_label(cur));
      cur.clear();
    };
    for (char c : inner) {
      if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
        push();
      else
        cur += c;
    }
    push();
  }
  std::stable_sort(r.children.begin(), r.children.end());
  return r;
}

std::vector<SyntaxRule> RuleRanking::top(double fraction) const {
  if (!(fraction > 0.0) || fraction > 1.0) throw ValidationError("rule fraction must be in (0, 1]");
  size_t want = static_cast<size_t>(std::ceil(fraction * static_cast<double>(inventory_size) - 1e-9));
  want = std::min(want, entries.size());
  std::vector<SyntaxRule> out;
  for (size_t i = 0; i < want; ++i) out.push_back(entries[i].rule);
  return out;
}

SynchronousExtraction extract_synchronous_rules(std::span<const ParallelPair> pairs) {
  SynchronousExtraction result;
  for (const auto& p : pairs) {
    if (!p.source_parse || !p.target_parse) {
      ++result.skipped_pairs;
      continue;
    }
    auto complex_rules = extract_rules(template_of(*p.source_parse));
    auto simple_rules = extract_rules(template_of(*p.target_parse));
    std::map<std::string, std::vector<const SyntaxRule*>> by_parent;
    for (const auto& r : simple_rules) by_parent[r.parent].push_back(&r);
    std::map<std::string, size_t> used;
    for (const auto& cr : complex_rules) {
      auto it = by_parent.find(cr.parent);
      if (it == by_parent.end()) continue;
      size_t& k = used[cr.parent];
      if (k >= it->second.size()) continue;
      const SyntaxRule& sr = *it->second[k++];
      if (sr == cr) continue;
      ++result.counts[SynchronousRule{cr, sr}];
    }
  }
  return result;
}

double rule_complexity(long complex_count, long complex_total, long simple_count, long simple_total,
                       size_t inventory_size) {
  const double v = static_cast<double>(inventory_size);
  const double pc = (static_cast<double>(complex_count) + 1.0) / (static_cast<double>(complex_total) + v);
  const double ps = (static_cast<double>(simple_count) + 1.0) / (static_cast<double>(simple_total) + v);
  return pc / ps;
}

RuleRanking rank_rules_by_complexity(std::span<const ParallelPair> pairs, double top_fraction) {
  if (!(top_fraction > 0.0) || top_fraction > 1.0)
    throw ValidationError("top_fraction must be in (0, 1]");
  std::map<SyntaxRule, long> complex_counts, simple_counts;
  long complex_total = 0, simple_total = 0;
  std::set<SyntaxRule> inventory;
  for (const auto& p : pairs) {
    if (p.source_parse)
      for (auto& r : extract_rules(template_of(*p.source_parse))) {
        ++complex_counts[r];
        ++complex_total;
        inventory.insert(std::move(r));
      }
    if (p.target_parse)
      for (auto& r : extract_rules(template_of(*p.target_parse))) {
        ++simple_counts[r];
        ++simple_total;
        inventory.insert(std::move(r));
      }
  }
  if (inventory.empty()) throw ValidationError("empty rule inventory (no parses)");
  RuleRanking ranking;
  ranking.inventory_size = inventory.size();
  for (const auto& r : inventory) {
    auto c = complex_counts.count(r) ? complex_counts[r] : 0;
    auto s = simple_counts.count(r) ? simple_counts[r] : 0;
    double ratio = rule_complexity(c, complex_total, s, simple_total, inventory.size());
    if (ratio > 1.0) ranking.entries.push_back({r, ratio});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RuleComplexityEntry& a, const RuleComplexityEntry& b) {
              if (a.ratio != b.ratio) return a.ratio > b.ratio;
              return a.rule < b.rule;
            });
  if (top_fraction < 1.0) {
    auto head = ranking.top(top_fraction);
    ranking.entries.resize(head.size());
  }
  return ranking;
}

std::string join_template_and_tokens(const Template& t, const Sentence& sentence) {
  std::string rendered = t.render();
  std::string out = rendered.empty() ? std::string(Vocabulary::kSepSurface)
                                     : rendered + " " + std::string(Vocabulary::kSepSurface);
  out += " " + sentence.text();
  return out;
}

std::pair<std::string, Sentence> split_generated(std::string_view line) {
  auto at = line.find(Vocabulary::kSepSurface);
  if (at == std::string_view::npos) throw FormatError("generated line lacks the ||| separator");
  std::string_view left = line.substr(0, at);
  std::string_view right = line.substr(at + Vocabulary::kSepSurface.size());
  while (!left.empty() && left.back() == ' ') left.remove_suffix(1);
  while (!right.empty() && right.front() == ' ') right.remove_prefix(1);
  return {std::string(left), Sentence::parse(right)};
}

std::vector<std::string> base_template_symbols() {
  std::vector<std::string> out;
  for (const auto& l : universal_labels()) {
    if (l == "root") continue;
    out.push_back(upper_label(l) + "(");
    out.push_back(upper_label(l) + ")");
  }
  out.push_back(")");
  for (int d = 0; d < 10; ++d) out.push_back(depth_token(d));
  return out;
}

bool looks_like_template_symbol(std::string_view s) {
  if (s == ")") return true;
  int depth = 0;
  if (parse_depth_token(s, depth)) return true;
  if (s.size() < 2 || (s.back() != '(' && s.back() != ')')) return false;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    char c = s[i];
    if (!((c >= 'A' && c <= 'Z') || c == ':' || c == '_')) return false;
  }
  return true;
}

std::vector<std::string> template_symbols_of(const Template& t) { return t.tokens(); }

void write_rule_ranking(std::ostream& out, const RuleRanking& ranking) {
  out << "# inventory=" << ranking.inventory_size << '\n';
  for (const auto& e : ranking.entries) out << e.rule.to_list_string() << '\n';
}

RuleRanking read_rule_ranking(std::istream& in) {
  RuleRanking ranking;
  bool have_inventory = false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto at = line.find("inventory=");
      if (at != std::string::npos) {
        ranking.inventory_size = std::stoul(line.substr(at + 10));
        have_inventory = true;
      }
      continue;
    }
    ranking.entries.push_back({SyntaxRule::parse(line), 0.0});
  }
  if (!have_inventory) ranking.inventory_size = ranking.entries.size();
  return ranking;
}

void write_rule_list(std::ostream& out, std::span<const SyntaxRule> rules) {
  for (const auto& r : rules) out << r.to_list_string() << '\n';
}

std::vector<SyntaxRule> read_rule_list(std::istream& in) {
  auto ranking = read_rule_ranking(in);
  std::vector<SyntaxRule> out;
  for (auto& e : ranking.entries) out.push_back(std::move(e.rule));
  return out;
}

void write_synchronous(std::ostream& out, const SynchronousCounts& counts) {
  std::vector<std::pair<SynchronousRule, long>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [rule, n] : v)
    out << rule.complex_side.to_list_string() << '\t' << rule.simple_side.to_list_string() << '\n';
}

std::vector<SynchronousRule> read_synchronous(std::istream& in) {
  std::vector<SynchronousRule> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("synchronous rule line " + std::to_string(lineno) + " lacks a tab");
    SynchronousRule r{SyntaxRule::parse(line.substr(0, tab)), SyntaxRule::parse(line.substr(tab + 1))};
    if (r.complex_side.parent != r.simple_side.parent)
      throw FormatError("synchronous rule line " + std::to_string(lineno) + ": parents differ");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ctrlsimp::syntax
