#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctrlsimp/corpus.hpp"
#include "ctrlsimp/metrics.hpp"
#include "ctrlsimp/model.hpp"

// Reference implementations that the library is compared against. They
// favour directness over speed.
namespace oracle {

ctrlsimp::metrics::SariComponents sari(const ctrlsimp::metrics::Tokens& source,
                                       const ctrlsimp::metrics::Tokens& output,
                                       const std::vector<ctrlsimp::metrics::Tokens>& references);

double bleu(const std::vector<ctrlsimp::metrics::Tokens>& outputs,
            const std::vector<std::vector<ctrlsimp::metrics::Tokens>>& references);

// Grade level with a regex vowel-group syllable count; one sentence per
// entry, tokens without letters or digits skipped.
double fkgl(const std::vector<ctrlsimp::metrics::Tokens>& sentences);

struct ReportInput {
  std::vector<ctrlsimp::metrics::Tokens> sources, outputs;
  std::vector<std::vector<ctrlsimp::metrics::Tokens>> references;  // per instance
};
// Every report field from the oracles above, rendered like MetricReport's
// JSON (4 decimals, same key order).
std::string report_json(const ReportInput& input);

struct WordRatio {
  std::string word;
  double ratio;
};
// Add-one ratios for every word of the complex side, recounted from scratch.
std::vector<WordRatio> word_ratios(const std::vector<ctrlsimp::ParallelPair>& pairs);
// Words with ratio > 1, descending, ties by word.
std::vector<WordRatio> complex_list(const std::vector<ctrlsimp::ParallelPair>& pairs);
std::vector<ctrlsimp::ParallelPair> random_word_corpus(uint64_t seed, size_t max_pairs);

struct GroupError {
  std::string name;
  double relative_error;
  double analytic_norm;
};
// Analytic vs central-difference gradients on a 2-layer hidden-16 model.
std::vector<GroupError> gradient_check(uint64_t seed);

struct EnumerationOutcome {
  bool equal = false;
  size_t sequences = 0;
  std::vector<int> beam_ids;
  std::vector<int> oracle_ids;
};
// Beam search with a beam wider than the sequence space vs exhaustive argmax.
EnumerationOutcome enumeration_case(uint64_t seed, bool template_grammar = true);

struct SweepCounts {
  size_t cases = 0;
  size_t decoded = 0;
  size_t infeasible = 0;
  size_t word_violations = 0;
  size_t rule_violations = 0;
};
// Random (input, constraint-set) pairs drawn from `pairs`; each decode is
// checked for banned stems in the output and banned rules in the template.
SweepCounts constraint_sweep(const ctrlsimp::model::Model& model, const std::vector<ctrlsimp::ParallelPair>& pairs,
                             size_t cases, uint64_t seed, int beam_size = 3, int max_template_len = 12);

}  // namespace oracle
