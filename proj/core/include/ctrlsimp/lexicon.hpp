#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctrlsimp/corpus.hpp"
#include "ctrlsimp/stem.hpp"

namespace ctrlsimp::lexicon {

using WordCounts = std::unordered_map<std::string, long>;

struct ComplexityScore {
  std::string word;
  std::string stem;
  double ratio = 0.0;
};

// Descending by ratio; every ratio > 1.
struct ComplexWordList {
  std::vector<ComplexityScore> entries;

  size_t size() const { return entries.size(); }
  std::vector<std::string> head(size_t n) const;

  void save(std::ostream& out) const;  // one word per line
  static ComplexWordList load(std::istream& in);
};

struct DictionaryTarget {
  std::string word;
  double weight = 1.0;  // in (0, 1]
  friend bool operator==(const DictionaryTarget&, const DictionaryTarget&) = default;
};

// complex surface -> simple alternatives. Identity and same-stem pairs are
// never stored.
class SimplificationDictionary {
 public:
  // Returns false (and stores nothing) for identity / same-stem pairs.
  bool add(const std::string& complex, const std::string& simple, double weight = 1.0);
  void merge_over(const SimplificationDictionary& other);

  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<DictionaryTarget>>& entries() const { return entries_; }
  // Targets of every complex entry sharing `stem`.
  std::vector<DictionaryTarget> lookup_stem(std::string_view stem) const;
  bool has_stem(std::string_view stem) const;
  void erase(const std::string& complex) { entries_.erase(complex); }
  void remove_target_if(const std::string& complex, const std::string& target);

  // "complex<TAB>simple1,simple2"
  void save(std::ostream& out) const;
  static SimplificationDictionary load(std::istream& in);

  friend bool operator==(const SimplificationDictionary& a, const SimplificationDictionary& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::map<std::string, std::vector<DictionaryTarget>> entries_;
};

// t(simple | complex); the complex side carries a NULL word.
struct TranslationTable {
  static constexpr std::string_view kNull = "<null>";
  std::map<std::string, std::map<std::string, double>> rows;  // complex -> simple -> prob
  std::vector<double> log_likelihood;  // before each EM update, then after the last

  double prob(std::string_view simple, std::string_view complex) const;
};

// [(c_complex + k) / (T_complex + k V)] / [(c_simple + k) / (T_simple + k V)]
// with V the size of the union vocabulary.
double word_complexity(std::string_view word, const WordCounts& complex_counts,
                       const WordCounts& simple_counts, double smoothing = 1.0);

void count_corpus(std::span<const ParallelPair> pairs, WordCounts& complex_counts,
                  WordCounts& simple_counts);

inline constexpr size_t kWikiLargeListSize = 12000;
inline constexpr size_t kNewselaListSize = 7000;

// Words with ratio > 1, descending (ties lexicographic), first n.
ComplexWordList build_complex_list(std::span<const ParallelPair> pairs, size_t n,
                                   double smoothing = 1.0);

inline constexpr int kDefaultIbmIterations = 5;
TranslationTable train_ibm1(std::span<const ParallelPair> pairs, int iterations = kDefaultIbmIterations);

inline constexpr double kDefaultProbThreshold = 0.5;
SimplificationDictionary build_dictionary(const TranslationTable& table, const ComplexWordList& list,
                                          const SimplificationDictionary* manual = nullptr,
                                          double prob_threshold = kDefaultProbThreshold);

// Small bundled manual dictionary.
SimplificationDictionary bundled_manual_dictionary();

}  // namespace ctrlsimp::lexicon
