#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlsimp/corpus.hpp"

namespace ctrlsimp::metrics {

using Tokens = std::vector<std::string>;

struct EvalInstance {
  Sentence source;
  Sentence output;
  std::vector<Sentence> references;  // at least one
};

struct SariComponents {
  double add = 0.0;     // F1, averaged over n = 1..4, in [0, 1]
  double keep = 0.0;    // F1
  double del = 0.0;     // precision
  double score() const { return 100.0 * (add + keep + del) / 3.0; }
};

struct MetricReport {
  double sari = 0.0;
  double sari_add = 0.0;
  double sari_keep = 0.0;
  double sari_delete = 0.0;
  double bleu = 0.0;
  double fkgl = 0.0;
  double s_bleu = 0.0;
  double copy_rate = 0.0;
  size_t instances = 0;

  std::string to_json() const;
  std::string to_table() const;
};

inline constexpr int kMaxOrder = 4;

// Corpus BLEU with per-n-gram max clipping over references and the
// closest-reference brevity penalty, in [0, 100]. Orders for which the
// candidates contain no n-grams at all are left out of the geometric mean.
double bleu(std::span<const Tokens> outputs, std::span<const std::vector<Tokens>> references, int max_n = kMaxOrder);
double bleu(std::span<const Sentence> outputs, std::span<const std::vector<Sentence>> references,
            int max_n = kMaxOrder);

SariComponents sari_sentence(const Tokens& source, const Tokens& output, std::span<const Tokens> references);
// Mean of sentence-level components.
SariComponents sari_components(std::span<const EvalInstance> instances);
double sari(std::span<const EvalInstance> instances);

int syllables(std::string_view word);
// One sentence per non-empty line.
double fkgl(std::string_view text);
double fkgl(std::span<const Sentence> sentences);

double self_bleu(std::span<const Sentence> outputs, std::span<const Sentence> sources);
double copy_rate(std::span<const Sentence> outputs, std::span<const Sentence> sources);

MetricReport evaluate_all(std::span<const EvalInstance> instances);

}  // namespace ctrlsimp::metrics
