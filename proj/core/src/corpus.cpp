#include "ctrlsimp/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/stem.hpp"
#include "ctrlsimp/syntax.hpp"

namespace ctrlsimp {

Token Token::make(std::string_view surface) {
  if (surface.empty()) throw ValidationError("empty token");
  for (char c : surface)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
      throw ValidationError("token contains whitespace: '" + std::string(surface) + "'");
  Token t;
  t.surface = std::string(surface);
  t.stem = lexicon::stem(surface);
  if (t.stem.empty()) t.stem = t.surface;
  std::string low_surface(surface);
  std::transform(low_surface.begin(), low_surface.end(), low_surface.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  t.is_function_word = corpus::function_words().count(low_surface) > 0;
  return t;
}

Sentence Sentence::parse(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  if (line.empty()) throw ValidationError("empty sentence");
  Sentence s;
  size_t start = 0;
  while (start <= line.size()) {
    size_t end = line.find(' ', start);
    if (end == std::string_view::npos) end = line.size();
    std::string_view field = line.substr(start, end - start);
    if (field.empty()) throw ValidationError("empty token (repeated or edge space)");
    s.tokens.push_back(Token::make(field));
    start = end + 1;
  }
  return s;
}

Sentence Sentence::from_words(std::span<const std::string> words) {
  if (words.empty()) throw ValidationError("empty sentence");
  Sentence s;
  for (const auto& w : words) s.tokens.push_back(Token::make(w));
  return s;
}

std::vector<std::string> Sentence::surfaces() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

std::string Sentence::text() const {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].surface;
  }
  return out;
}

DependencyTree::DependencyTree(std::vector<DependencyNode> nodes) : nodes_(std::move(nodes)) {
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw TreeError("empty dependency tree");
  children_.assign(static_cast<size_t>(n + 1), {});
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const auto& nd = nodes_[static_cast<size_t>(i)];
    if (nd.index != i + 1)
      throw TreeError("node ids must be consecutive from 1; got " + std::to_string(nd.index) +
                      " at position " + std::to_string(i + 1));
    if (nd.head < 0 || nd.head > n)
      throw TreeError("head " + std::to_string(nd.head) + " out of range for node " +
                      std::to_string(nd.index));
    if (nd.head == nd.index) throw TreeError("node " + std::to_string(nd.index) + " is its own head (cycle)");
    if (nd.head == 0) {
      ++roots;
      root_ = nd.index;
    }
    children_[static_cast<size_t>(nd.head)].push_back(nd.index);
  }
  if (roots != 1) throw TreeError("tree must have exactly one root; found " + std::to_string(roots));
  // Every node must reach the root without revisiting a node.
  std::vector<int> state(static_cast<size_t>(n + 1), 0);  // 0 unseen, 1 on path, 2 done
  for (int start = 1; start <= n; ++start) {
    std::vector<int> path;
    int cur = start;
    while (cur != 0 && state[static_cast<size_t>(cur)] == 0) {
      state[static_cast<size_t>(cur)] = 1;
      path.push_back(cur);
      cur = nodes_[static_cast<size_t>(cur - 1)].head;
    }
    if (cur != 0 && state[static_cast<size_t>(cur)] == 1)
      throw TreeError("cyclic head links through node " + std::to_string(cur));
    for (int p : path) state[static_cast<size_t>(p)] = 2;
  }
}

std::vector<int> DependencyTree::subtree(int index) const {
  std::vector<int> out;
  std::vector<int> stack{index};
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    out.push_back(cur);
    for (int c : children(cur)) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> DependencyTree::surfaces() const {
  std::vector<std::string> out;
  for (const auto& nd : nodes_) out.push_back(nd.surface);
  return out;
}

namespace corpus {

const std::unordered_set<std::string>& function_words() {
  static const std::unordered_set<std::string> words = {
      // determiners
      "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no",
      "another", "such", "all", "both", "either", "neither",
      // prepositions
      "about", "above", "across", "after", "against", "along", "among", "around", "as", "at",
      "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "down",
      "during", "except", "for", "from", "in", "inside", "into", "like", "near", "of", "off",
      "on", "onto", "out", "outside", "over", "past", "since", "through", "throughout", "to",
      "toward", "towards", "under", "until", "up", "upon", "with", "within", "without",
      // conjunctions
      "and", "or", "but", "nor", "so", "yet", "because", "although", "though", "if", "unless",
      "while", "whereas", "whether", "than", "when", "where",
      // pronouns
      "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers",
      "it", "its", "we", "us", "our", "ours", "they", "them", "their", "theirs", "who", "whom",
      "whose", "which", "what", "myself", "yourself", "himself", "herself", "itself",
      "ourselves", "themselves",
      // auxiliaries
      "be", "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having",
      "do", "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might",
      "must",
      // particles
      "not", "'s", "n't"};
  return words;
}

std::vector<Sentence> read_sentences(std::istream& in, const std::string& name) {
  std::vector<Sentence> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty())
      throw ValidationError(name + ": empty line at line " + std::to_string(lineno));
    try {
      out.push_back(Sentence::parse(line));
    } catch (const ValidationError& e) {
      throw ValidationError(name + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Sentence> load_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_sentences(in, path.string());
}

std::vector<ParallelPair> load_parallel_corpus(const std::filesystem::path& complex_path,
                                               const std::filesystem::path& simple_path) {
  auto src = load_sentences(complex_path);
  auto tgt = load_sentences(simple_path);
  if (src.size() != tgt.size())
    throw FormatError("line-count mismatch: " + complex_path.string() + " has " +
                      std::to_string(src.size()) + " lines, " + simple_path.string() + " has " +
                      std::to_string(tgt.size()));
  std::vector<ParallelPair> pairs;
  pairs.reserve(src.size());
  for (size_t i = 0; i < src.size(); ++i)
    pairs.push_back(ParallelPair{std::move(src[i]), std::move(tgt[i]), std::nullopt, std::nullopt});
  return pairs;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  size_t start = 0;
  while (true) {
    size_t end = line.find('\t', start);
    if (end == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return cols;
}

int parse_int(std::string_view s, size_t lineno) {
  if (s.empty()) throw FormatError("empty integer field at line " + std::to_string(lineno));
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9')
      throw FormatError("bad integer '" + std::string(s) + "' at line " + std::to_string(lineno));
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

std::vector<DependencyTree> load_conllu(std::string_view text) {
  std::vector<DependencyTree> trees;
  std::vector<DependencyNode> current;
  size_t block_start = 1;
  auto flush = [&]() {
    if (current.empty()) return;
    try {
      trees.emplace_back(std::move(current));
    } catch (const TreeError& e) {
      throw TreeError(std::string(e.what()) + " (sentence starting at line " +
                      std::to_string(block_start) + ")");
    }
    current.clear();
  };
  size_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      flush();
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '#') continue;
    if (current.empty()) block_start = lineno;
    auto cols = split_tabs(line);
    if (cols.size() != 10)
      throw FormatError("CoNLL-U line " + std::to_string(lineno) + " has " +
                        std::to_string(cols.size()) + " columns, expected 10");
    std::string_view id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) continue;
    DependencyNode nd;
    nd.index = parse_int(id, lineno);
    nd.surface = std::string(cols[1]);
    nd.head = parse_int(cols[6], lineno);
    nd.label = std::string(cols[7]);
    current.push_back(std::move(nd));
    if (end == text.size()) break;
  }
  flush();
  return trees;
}

std::vector<DependencyTree> load_conllu_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_conllu(ss.str());
}

std::string write_conllu(std::span<const DependencyTree> trees) {
  std::string out;
  for (const auto& t : trees) {
    for (const auto& nd : t.nodes()) {
      out += std::to_string(nd.index) + "\t" + nd.surface + "\t_\t_\t_\t_\t" +
             std::to_string(nd.head) + "\t" + nd.label + "\t_\t_\n";
    }
    out += "\n";
  }
  return out;
}

void attach_parses(std::vector<ParallelPair>& pairs, std::span<const DependencyTree> source_parses,
                   std::span<const DependencyTree> target_parses) {
  auto check = [](const Sentence& s, const DependencyTree& t, size_t i, const char* side) {
    if (s.surfaces() != t.surfaces())
      throw ValidationError(std::string(side) + " parse " + std::to_string(i + 1) +
                            " does not match its sentence tokens");
  };
  if (!source_parses.empty()) {
    if (source_parses.size() != pairs.size())
      throw ValidationError("source parse count " + std::to_string(source_parses.size()) +
                            " != pair count " + std::to_string(pairs.size()));
    for (size_t i = 0; i < pairs.size(); ++i) {
      check(pairs[i].source, source_parses[i], i, "source");
      pairs[i].source_parse = source_parses[i];
    }
  }
  if (!target_parses.empty()) {
    if (target_parses.size() != pairs.size())
      throw ValidationError("target parse count " + std::to_string(target_parses.size()) +
                            " != pair count " + std::to_string(pairs.size()));
    for (size_t i = 0; i < pairs.size(); ++i) {
      check(pairs[i].target, target_parses[i], i, "target");
      pairs[i].target_parse = target_parses[i];
    }
  }
}

Vocabulary build_vocabulary(std::span<const ParallelPair> pairs, int max_size,
                            std::span<const std::string> template_symbols) {
  if (max_size < 1) throw ValidationError("max_size must be >= 1");
  if (pairs.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::pair<long, long>> stats;  // count, first occurrence
  long order = 0;
  auto count = [&](const Sentence& s) {
    for (const auto& t : s.tokens) {
      if (t.surface == Vocabulary::kSepSurface) continue;
      auto [it, inserted] = stats.try_emplace(t.surface, 0, order);
      ++it->second.first;
      ++order;
    }
  };
  for (const auto& p : pairs) {
    count(p.source);
    count(p.target);
  }
  std::vector<std::pair<std::string, std::pair<long, long>>> ranked(stats.begin(), stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  if (static_cast<int>(ranked.size()) > max_size) ranked.resize(static_cast<size_t>(max_size));
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& r : ranked) words.push_back(r.first);

  std::vector<std::string> symbols = syntax::base_template_symbols();
  symbols.insert(symbols.end(), template_symbols.begin(), template_symbols.end());
  return Vocabulary::from_lists(words, symbols);
}

}  // namespace corpus

Vocabulary::Vocabulary() {
  add("<pad>", SymbolKind::kReserved);
  add("<unk>", SymbolKind::kReserved);
  add("<s>", SymbolKind::kReserved);
  add("</s>", SymbolKind::kReserved);
  add(std::string(kSepSurface), SymbolKind::kReserved);
}

int Vocabulary::add(std::string surface, SymbolKind kind) {
  auto it = ids_.find(surface);
  if (it != ids_.end()) {
    SymbolKind& k = kinds_[static_cast<size_t>(it->second)];
    if (k == SymbolKind::kReserved) return it->second;
    if (k != kind) k = SymbolKind::kBoth;
    return it->second;
  }
  int id = static_cast<int>(surfaces_.size());
  ids_.emplace(surface, id);
  surfaces_.push_back(std::move(surface));
  kinds_.push_back(kind);
  return id;
}

Vocabulary Vocabulary::from_lists(std::span<const std::string> words,
                                  std::span<const std::string> template_symbols) {
  Vocabulary v;
  for (const auto& w : words) {
    if (w.empty()) throw ValidationError("empty vocabulary entry");
    v.add(w, SymbolKind::kWord);
  }
  v.word_count_ = v.size() - kReservedCount;
  for (const auto& s : template_symbols) v.add(s, SymbolKind::kTemplate);
  return v;
}

int Vocabulary::id_of(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view surface) const {
  return ids_.count(std::string(surface)) > 0;
}

const std::string& Vocabulary::surface_of(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("vocabulary id out of range: " + std::to_string(id));
  return surfaces_[static_cast<size_t>(id)];
}

bool Vocabulary::is_word(int id) const {
  auto k = kind(id);
  return k == SymbolKind::kWord || k == SymbolKind::kBoth;
}

bool Vocabulary::is_template_symbol(int id) const {
  auto k = kind(id);
  return k == SymbolKind::kTemplate || k == SymbolKind::kBoth;
}

std::vector<int> Vocabulary::encode(const Sentence& sentence) const {
  std::vector<int> ids;
  ids.reserve(sentence.size());
  for (const auto& t : sentence.tokens) ids.push_back(id_of(t.surface));
  return ids;
}

Sentence Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int id : ids) words.push_back(surface_of(id));
  return Sentence::from_words(words);
}

void Vocabulary::save(std::ostream& out) const {
  for (int i = 0; i < size(); ++i) out << surfaces_[static_cast<size_t>(i)] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  size_t lineno = 0;
  std::vector<std::pair<int, std::string>> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("vocabulary line " + std::to_string(lineno) + " lacks a tab");
    int id = std::stoi(line.substr(tab + 1));
    entries.emplace_back(id, line.substr(0, tab));
  }
  std::sort(entries.begin(), entries.end());
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != static_cast<int>(i))
      throw FormatError("vocabulary ids must be dense from 0");
    if (i < kReservedCount) {
      if (entries[i].second != v.surfaces_[i]) throw FormatError("reserved vocabulary entry mismatch");
      continue;
    }
    bool tmpl = syntax::looks_like_template_symbol(entries[i].second);
    v.add(entries[i].second, tmpl ? SymbolKind::kTemplate : SymbolKind::kWord);
    if (!tmpl) v.word_count_ = v.size() - kReservedCount;
  }
  return v;
}

}  // namespace ctrlsimp
