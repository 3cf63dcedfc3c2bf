#include "ctrlsimp/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "ctrlsimp/errors.hpp"

namespace ctrlsimp::lexicon {

std::vector<std::string> ComplexWordList::head(size_t n) const {
  std::vector<std::string> out;
  for (size_t i = 0; i < std::min(n, entries.size()); ++i) out.push_back(entries[i].word);
  return out;
}

void ComplexWordList::save(std::ostream& out) const {
  for (const auto& e : entries) out << e.word << '\n';
}

ComplexWordList ComplexWordList::load(std::istream& in) {
  ComplexWordList list;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    // Ratios are not serialized; keep the order with a decreasing placeholder.
    list.entries.push_back({line, stem(line), 0.0});
  }
  double r = static_cast<double>(list.entries.size()) + 1.0;
  for (auto& e : list.entries) e.ratio = r--;
  return list;
}

bool SimplificationDictionary::add(const std::string& complex, const std::string& simple, double weight) {
  if (complex.empty() || simple.empty()) throw ValidationError("empty dictionary word");
  if (!(weight > 0.0) || weight > 1.0) throw ValidationError("dictionary weight must be in (0, 1]");
  if (complex == simple || stem(complex) == stem(simple)) return false;
  auto& targets = entries_[complex];
  for (auto& t : targets)
    if (t.word == simple) {
      t.weight = std::max(t.weight, weight);
      return true;
    }
  targets.push_back({simple, weight});
  return true;
}

void SimplificationDictionary::merge_over(const SimplificationDictionary& other) {
  for (const auto& [c, targets] : other.entries_) entries_[c] = targets;
}

std::vector<DictionaryTarget> SimplificationDictionary::lookup_stem(std::string_view s) const {
  std::vector<DictionaryTarget> out;
  for (const auto& [c, targets] : entries_)
    if (stem(c) == s) out.insert(out.end(), targets.begin(), targets.end());
  return out;
}

bool SimplificationDictionary::has_stem(std::string_view s) const {
  for (const auto& [c, targets] : entries_)
    if (stem(c) == s) return true;
  return false;
}

void SimplificationDictionary::remove_target_if(const std::string& complex, const std::string& target) {
  auto it = entries_.find(complex);
  if (it == entries_.end()) return;
  auto& v = it->second;
  v.erase(std::remove_if(v.begin(), v.end(), [&](const DictionaryTarget& t) { return t.word == target; }),
          v.end());
  if (v.empty()) entries_.erase(it);
}

void SimplificationDictionary::save(std::ostream& out) const {
  for (const auto& [c, targets] : entries_) {
    out << c << '\t';
    for (size_t i = 0; i < targets.size(); ++i) {
      if (i) out << ',';
      out << targets[i].word;
    }
    out << '\n';
  }
}

SimplificationDictionary SimplificationDictionary::load(std::istream& in) {
  SimplificationDictionary d;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("dictionary line " + std::to_string(lineno) + " lacks a tab");
    std::string complex = line.substr(0, tab);
    std::string rest = line.substr(tab + 1);
    size_t start = 0;
    while (start <= rest.size()) {
      size_t comma = rest.find(',', start);
      if (comma == std::string::npos) comma = rest.size();
      std::string w = rest.substr(start, comma - start);
      if (!w.empty()) d.add(complex, w, 1.0);
      start = comma + 1;
    }
  }
  return d;
}

double TranslationTable::prob(std::string_view simple, std::string_view complex) const {
  auto it = rows.find(std::string(complex));
  if (it == rows.end()) return 0.0;
  auto jt = it->second.find(std::string(simple));
  return jt == it->second.end() ? 0.0 : jt->second;
}

namespace {

struct Totals {
  long complex_total = 0;
  long simple_total = 0;
  size_t vocab = 0;
};

Totals totals_of(const WordCounts& c, const WordCounts& s) {
  Totals t;
  std::set<std::string_view> vocab;
  for (const auto& [w, n] : c) {
    t.complex_total += n;
    vocab.insert(w);
  }
  for (const auto& [w, n] : s) {
    t.simple_total += n;
    vocab.insert(w);
  }
  t.vocab = vocab.size();
  return t;
}

double ratio_with(const Totals& t, long cc, long cs, double k) {
  const double v = static_cast<double>(t.vocab);
  const double pc = (static_cast<double>(cc) + k) / (static_cast<double>(t.complex_total) + k * v);
  const double ps = (static_cast<double>(cs) + k) / (static_cast<double>(t.simple_total) + k * v);
  return pc / ps;
}

long count_of(const WordCounts& m, std::string_view w) {
  auto it = m.find(std::string(w));
  return it == m.end() ? 0 : it->second;
}

}  // namespace

double word_complexity(std::string_view word, const WordCounts& complex_counts,
                       const WordCounts& simple_counts, double smoothing) {
  if (!(smoothing > 0.0)) throw ValidationError("smoothing must be > 0");
  Totals t = totals_of(complex_counts, simple_counts);
  return ratio_with(t, count_of(complex_counts, word), count_of(simple_counts, word), smoothing);
}

void count_corpus(std::span<const ParallelPair> pairs, WordCounts& complex_counts, WordCounts& simple_counts) {
  for (const auto& p : pairs) {
    for (const auto& t : p.source.tokens) ++complex_counts[t.surface];
    for (const auto& t : p.target.tokens) ++simple_counts[t.surface];
  }
}

ComplexWordList build_complex_list(std::span<const ParallelPair> pairs, size_t n, double smoothing) {
  if (n < 1) throw ValidationError("complex list size must be >= 1");
  if (pairs.empty()) throw ValidationError("cannot build a complex list from an empty corpus");
  WordCounts cc, sc;
  count_corpus(pairs, cc, sc);
  Totals t = totals_of(cc, sc);
  ComplexWordList list;
  for (const auto& [w, c] : cc) {
    double r = ratio_with(t, c, count_of(sc, w), smoothing);
    if (r > 1.0) list.entries.push_back({w, stem(w), r});
  }
  std::sort(list.entries.begin(), list.entries.end(), [](const ComplexityScore& a, const ComplexityScore& b) {
    if (a.ratio != b.ratio) return a.ratio > b.ratio;
    return a.word < b.word;
  });
  if (list.entries.size() > n) list.entries.resize(n);
  return list;
}

TranslationTable train_ibm1(std::span<const ParallelPair> pairs, int iterations) {
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (pairs.empty()) throw ValidationError("cannot align an empty corpus");
  const std::string null_word(TranslationTable::kNull);
  std::set<std::string> simple_vocab;
  for (const auto& p : pairs)
    for (const auto& t : p.target.tokens) simple_vocab.insert(t.surface);
  const double uniform = 1.0 / static_cast<double>(simple_vocab.size());

  TranslationTable table;
  for (const auto& p : pairs) {
    for (const auto& s : p.target.tokens) {
      table.rows[null_word][s.surface] = uniform;
      for (const auto& c : p.source.tokens) table.rows[c.surface][s.surface] = uniform;
    }
  }

  auto e_step = [&](std::map<std::string, std::map<std::string, double>>* expected) {
    double ll = 0.0;
    for (const auto& p : pairs) {
      std::vector<const std::string*> src{&null_word};
      for (const auto& c : p.source.tokens) src.push_back(&c.surface);
      const double inv_len = 1.0 / static_cast<double>(src.size());
      for (const auto& s : p.target.tokens) {
        double denom = 0.0;
        for (const auto* c : src) denom += table.rows[*c][s.surface];
        ll += std::log(denom * inv_len);
        if (!expected) continue;
        for (const auto* c : src) (*expected)[*c][s.surface] += table.rows[*c][s.surface] / denom;
      }
    }
    return ll;
  };

  for (int it = 0; it < iterations; ++it) {
    std::map<std::string, std::map<std::string, double>> expected;
    table.log_likelihood.push_back(e_step(&expected));
    for (auto& [c, row] : expected) {
      double total = 0.0;
      for (const auto& [s, v] : row) total += v;
      auto& out = table.rows[c];
      for (auto& [s, v] : out) v = 0.0;
      for (const auto& [s, v] : row) out[s] = v / total;
    }
  }
  table.log_likelihood.push_back(e_step(nullptr));
  // Drop pairs that fell to zero so rows only hold supported entries.
  for (auto& [c, row] : table.rows)
    for (auto it = row.begin(); it != row.end();) it = it->second == 0.0 ? row.erase(it) : std::next(it);
  return table;
}

SimplificationDictionary build_dictionary(const TranslationTable& table, const ComplexWordList& list,
                                          const SimplificationDictionary* manual, double prob_threshold) {
  if (!(prob_threshold > 0.0) || prob_threshold > 1.0)
    throw ValidationError("prob_threshold must be in (0, 1]");
  SimplificationDictionary learned;
  for (const auto& entry : list.entries) {
    auto it = table.rows.find(entry.word);
    if (it == table.rows.end()) continue;
    for (const auto& [s, p] : it->second)
      if (p >= prob_threshold) learned.add(entry.word, s, std::min(1.0, p));
  }
  if (manual) learned.merge_over(*manual);
  return learned;
}

SimplificationDictionary bundled_manual_dictionary() {
  static const std::pair<const char*, const char*> kEntries[] = {
      {"abandon", "leave"},      {"assembled", "built"},  {"cherishing", "loving"},
      {"customary", "normal"},   {"educating", "teaching"}, {"fraudulent", "fake"},
      {"initiated", "started"},  {"iterated", "repeated"}, {"replenished", "refilled"},
      {"shove", "push"},         {"commence", "start"},   {"purchase", "buy"},
      {"reside", "live"},        {"assist", "help"},      {"utilize", "use"},
      {"demonstrate", "show"},   {"occurs", "is"},        {"approximately", "about"},
      {"numerous", "many"},      {"sufficient", "enough"}, {"terminate", "end"},
      {"obtain", "get"},         {"require", "need"},     {"inform", "tell"},
  };
  SimplificationDictionary d;
  for (const auto& [c, s] : kEntries) d.add(c, s, 1.0);
  return d;
}

}  // namespace ctrlsimp::lexicon
