#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ctrlsimp {

struct Token {
  std::string surface;
  std::string stem;
  bool is_function_word = false;

  static Token make(std::string_view surface);
  friend bool operator==(const Token& a, const Token& b) { return a.surface == b.surface; }
};

struct Sentence {
  std::vector<Token> tokens;

  // Splits on single spaces. Throws ValidationError on empty input or
  // empty fields (double spaces).
  static Sentence parse(std::string_view line);
  static Sentence from_words(std::span<const std::string> words);

  size_t size() const { return tokens.size(); }
  std::vector<std::string> surfaces() const;
  std::string text() const;
  friend bool operator==(const Sentence& a, const Sentence& b) = default;
};

struct DependencyNode {
  int index = 0;  // 1-based
  std::string surface;
  int head = 0;  // 0 for the root
  std::string label;
};

// A validated dependency tree. Construction checks the single-root,
// acyclic and spanning invariants and throws TreeError otherwise.
class DependencyTree {
 public:
  DependencyTree() = default;
  explicit DependencyTree(std::vector<DependencyNode> nodes);

  const std::vector<DependencyNode>& nodes() const { return nodes_; }
  size_t size() const { return nodes_.size(); }
  int root() const { return root_; }
  // Dependents of `index` (0 = virtual root) in surface order.
  const std::vector<int>& children(int index) const { return children_[static_cast<size_t>(index)]; }
  const DependencyNode& node(int index) const { return nodes_[static_cast<size_t>(index - 1)]; }
  // Token indices (1-based) in the subtree rooted at `index`, sorted.
  std::vector<int> subtree(int index) const;
  std::vector<std::string> surfaces() const;

 private:
  std::vector<DependencyNode> nodes_;
  std::vector<std::vector<int>> children_;
  int root_ = 0;
};

struct ParallelPair {
  Sentence source;  // complex
  Sentence target;  // simple
  std::optional<DependencyTree> source_parse;
  std::optional<DependencyTree> target_parse;
};

namespace corpus {

// Closed-class English words marked as function words.
const std::unordered_set<std::string>& function_words();

std::vector<ParallelPair> load_parallel_corpus(const std::filesystem::path& complex_path,
                                               const std::filesystem::path& simple_path);
std::vector<Sentence> load_sentences(const std::filesystem::path& path);
std::vector<Sentence> read_sentences(std::istream& in, const std::string& name);

std::vector<DependencyTree> load_conllu(std::string_view text);
std::vector<DependencyTree> load_conllu_file(const std::filesystem::path& path);
std::string write_conllu(std::span<const DependencyTree> trees);

// Attaches parses to pairs in order. Throws ValidationError on count or
// surface mismatch.
void attach_parses(std::vector<ParallelPair>& pairs, std::span<const DependencyTree> source_parses,
                   std::span<const DependencyTree> target_parses);

}  // namespace corpus

// Role of an id in the shared vocabulary.
enum class SymbolKind : uint8_t { kReserved, kWord, kTemplate, kBoth };

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr int kReservedCount = 5;
  static constexpr std::string_view kSepSurface = "|||";

  Vocabulary();

  // Builds from explicit word and template-symbol lists, in that order.
  static Vocabulary from_lists(std::span<const std::string> words,
                               std::span<const std::string> template_symbols);

  int id_of(std::string_view surface) const;  // unk_id when absent
  bool contains(std::string_view surface) const;
  const std::string& surface_of(int id) const;
  SymbolKind kind(int id) const { return kinds_.at(static_cast<size_t>(id)); }
  bool is_word(int id) const;
  bool is_template_symbol(int id) const;
  int size() const { return static_cast<int>(surfaces_.size()); }
  int word_count() const { return word_count_; }

  std::vector<int> encode(const Sentence& sentence) const;
  Sentence decode(std::span<const int> ids) const;

  // One "surface<TAB>id" line per entry.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.surfaces_ == b.surfaces_ && a.kinds_ == b.kinds_;
  }

 private:
  int add(std::string surface, SymbolKind kind);

  std::vector<std::string> surfaces_;
  std::vector<SymbolKind> kinds_;
  std::unordered_map<std::string, int> ids_;
  int word_count_ = 0;
};

namespace corpus {

inline constexpr int kDefaultVocabCap = 50000;

// Frequency-ranked vocabulary over both sides of the corpus. Template
// symbols (dependency-label brackets, depth tokens) from `template_symbols`
// and the universal-dependency inventory are always present.
Vocabulary build_vocabulary(std::span<const ParallelPair> pairs, int max_size,
                            std::span<const std::string> template_symbols = {});

}  // namespace corpus
}  // namespace ctrlsimp
