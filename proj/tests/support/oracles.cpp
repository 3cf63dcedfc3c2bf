#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>

#include "ctrlsimp/decoder.hpp"
#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/markers.hpp"
#include "ctrlsimp/model.hpp"
#include "json.hpp"
#include "synthetic.hpp"

using namespace ctrlsimp;
using metrics::Tokens;

namespace oracle {
namespace {

using Gram = std::vector<std::string>;

std::vector<Gram> grams(const Tokens& t, size_t n) {
  std::vector<Gram> out;
  for (size_t i = 0; i + n <= t.size(); ++i)
    out.emplace_back(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n));
  return out;
}

double occurrences(const std::vector<Gram>& v, const Gram& g) {
  return static_cast<double>(std::count(v.begin(), v.end(), g));
}

}  // namespace

metrics::SariComponents sari(const Tokens& src, const Tokens& out, const std::vector<Tokens>& refs) {
  const double R = static_cast<double>(refs.size());
  auto conv = [](double num, size_t den, size_t other) {
    return den == 0 ? (other == 0 ? 1.0 : 0.0) : num / static_cast<double>(den);
  };
  auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  double add = 0, keep = 0, del = 0;
  for (size_t n = 1; n <= 4; ++n) {
    auto s = grams(src, n), o = grams(out, n);
    std::vector<Gram> r;
    for (const auto& ref : refs)
      for (auto& g : grams(ref, n)) r.push_back(g);
    std::set<Gram> all(s.begin(), s.end());
    all.insert(o.begin(), o.end());
    all.insert(r.begin(), r.end());
    double kp = 0, kr = 0, dp = 0;
    size_t nkeep = 0, nkeep_all = 0, ndel = 0, ndel_all = 0;
    for (const auto& g : all) {
      const double cs = R * occurrences(s, g), co = R * occurrences(o, g), cr = occurrences(r, g);
      const double kept = std::min(cs, co);
      const double kept_good = std::min(kept, cr);
      const double keep_all = std::min(cs, cr);
      if (kept > 0) {
        ++nkeep;
        kp += kept_good / kept;
      }
      if (keep_all > 0) {
        ++nkeep_all;
        kr += kept_good / keep_all;
      }
      const double deleted = std::max(0.0, cs - co);
      if (deleted > 0) {
        ++ndel;
        dp += std::max(0.0, deleted - cr) / deleted;
      }
      if (cs - cr > 0) ++ndel_all;
    }
    keep += f1(conv(kp, nkeep, nkeep_all), conv(kr, nkeep_all, nkeep));
    del += conv(dp, ndel, ndel_all);
    std::set<Gram> ds(s.begin(), s.end()), dout(o.begin(), o.end()), dr(r.begin(), r.end());
    size_t nadd = 0, nadd_all = 0;
    double good = 0;
    for (const auto& g : dout)
      if (!ds.count(g)) {
        ++nadd;
        good += static_cast<double>(dr.count(g));
      }
    for (const auto& g : dr)
      if (!ds.count(g)) ++nadd_all;
    add += f1(conv(good, nadd, nadd_all), conv(good, nadd_all, nadd));
  }
  return {add / 4, keep / 4, del / 4};
}

double bleu(const std::vector<Tokens>& outs, const std::vector<std::vector<Tokens>>& refs) {
  long c = 0, r = 0;
  for (size_t i = 0; i < outs.size(); ++i) {
    const long len = static_cast<long>(outs[i].size());
    c += len;
    std::vector<long> lens;
    for (const auto& ref : refs[i]) lens.push_back(static_cast<long>(ref.size()));
    std::sort(lens.begin(), lens.end());
    long best = lens[0];
    for (long l : lens)
      if (std::labs(l - len) < std::labs(best - len)) best = l;
    r += best;
  }
  if (c == 0) return 0.0;
  double logp = 0;
  int used = 0;
  for (size_t n = 1; n <= 4; ++n) {
    double match = 0, total = 0;
    for (size_t i = 0; i < outs.size(); ++i) {
      auto o = grams(outs[i], n);
      total += static_cast<double>(o.size());
      for (const auto& g : std::set<Gram>(o.begin(), o.end())) {
        double clip = 0;
        for (const auto& ref : refs[i]) clip = std::max(clip, occurrences(grams(ref, n), g));
        match += std::min(occurrences(o, g), clip);
      }
    }
    if (total == 0) continue;
    if (match == 0) return 0.0;
    logp += std::log(match / total);
    ++used;
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return 100.0 * bp * std::exp(logp / used);
}

double fkgl(const std::vector<Tokens>& sentences) {
  static const std::regex group("[aeiouy]+");
  static const std::regex wordlike("[A-Za-z0-9]");
  double words = 0, syl = 0, lines = 0;
  for (const auto& s : sentences) {
    bool any = false;
    for (const auto& tok : s) {
      if (!std::regex_search(tok, wordlike)) continue;
      any = true;
      words += 1;
      std::string w;
      for (char c : tok)
        if (std::isalpha(static_cast<unsigned char>(c))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      auto n = std::distance(std::sregex_iterator(w.begin(), w.end(), group), std::sregex_iterator());
      if (n > 1 && w.size() >= 2 && w.back() == 'e' && std::string("aeiouy").find(w[w.size() - 2]) == std::string::npos)
        --n;
      syl += static_cast<double>(std::max<long>(n, 1));
    }
    if (any) lines += 1;
  }
  return 0.39 * words / lines + 11.8 * syl / words - 15.59;
}

std::string report_json(const ReportInput& in) {
  const size_t n = in.sources.size();
  double add = 0, keep = 0, del = 0, same = 0;
  for (size_t i = 0; i < n; ++i) {
    auto c = sari(in.sources[i], in.outputs[i], in.references[i]);
    add += c.add;
    keep += c.keep;
    del += c.del;
    same += in.outputs[i] == in.sources[i] ? 1 : 0;
  }
  const double k = static_cast<double>(n);
  std::vector<std::vector<Tokens>> self_refs;
  for (const auto& s : in.sources) self_refs.push_back({s});
  auto round4 = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::stod(buf);
  };
  nlohmann::ordered_json j;
  j["sari"] = round4(100.0 * (add + keep + del) / (3.0 * k));
  j["sari_add"] = round4(100.0 * add / k);
  j["sari_keep"] = round4(100.0 * keep / k);
  j["sari_delete"] = round4(100.0 * del / k);
  j["bleu"] = round4(bleu(in.outputs, in.references));
  j["fkgl"] = round4(fkgl(in.outputs));
  j["s_bleu"] = round4(bleu(in.outputs, self_refs));
  j["copy_rate"] = round4(100.0 * same / k);
  j["instances"] = n;
  return j.dump(2) + "\n";
}

std::vector<WordRatio> word_ratios(const std::vector<ParallelPair>& pairs) {
  std::vector<std::string> complex_words, simple_words;
  for (const auto& p : pairs) {
    for (const auto& t : p.source.tokens) complex_words.push_back(t.surface);
    for (const auto& t : p.target.tokens) simple_words.push_back(t.surface);
  }
  std::set<std::string> vocab(complex_words.begin(), complex_words.end());
  vocab.insert(simple_words.begin(), simple_words.end());
  const double v = static_cast<double>(vocab.size());
  const double tc = static_cast<double>(complex_words.size()), ts = static_cast<double>(simple_words.size());
  std::vector<WordRatio> out;
  for (const auto& w : std::set<std::string>(complex_words.begin(), complex_words.end())) {
    const double c = static_cast<double>(std::count(complex_words.begin(), complex_words.end(), w));
    const double s = static_cast<double>(std::count(simple_words.begin(), simple_words.end(), w));
    out.push_back({w, ((c + 1.0) / (tc + v)) / ((s + 1.0) / (ts + v))});
  }
  return out;
}

std::vector<WordRatio> complex_list(const std::vector<ParallelPair>& pairs) {
  std::vector<WordRatio> out;
  for (auto& wr : word_ratios(pairs))
    if (wr.ratio > 1.0) out.push_back(wr);
  std::sort(out.begin(), out.end(), [](const WordRatio& a, const WordRatio& b) {
    return a.ratio != b.ratio ? a.ratio > b.ratio : a.word < b.word;
  });
  return out;
}

std::vector<ParallelPair> random_word_corpus(uint64_t seed, size_t max_pairs) {
  static const char* words[] = {"the", "task", "arduous", "hard", "big", "enormous", "is", "a"};
  std::mt19937_64 rng(seed);
  std::vector<ParallelPair> pairs;
  for (size_t n = 1 + rng() % max_pairs; n > 0; --n) {
    std::vector<std::string> c, s;
    for (size_t k = 1 + rng() % 6; k > 0; --k) c.push_back(words[rng() % 8]);
    for (size_t k = 1 + rng() % 6; k > 0; --k) s.push_back(words[rng() % 8]);
    pairs.push_back({Sentence::from_words(c), Sentence::from_words(s), {}, {}});
  }
  return pairs;
}

std::vector<GroupError> gradient_check(uint64_t seed) {
  std::vector<ParallelPair> pairs = synth::corpus();
  ParallelPair pair = pairs[0];
  Vocabulary vocab = synth::vocabulary(pairs);

  model::ModelConfig config;
  config.layers = 2;
  config.hidden_dim = 16;
  config.heads = 2;
  config.feedforward_dim = 24;
  config.max_positions = 40;
  config.dropout = 0.0;

  // An out-of-vocabulary source word exercises the copy path.
  std::vector<std::string> words = pair.source.surfaces();
  words[1] = "zebra";
  pair.source = Sentence::from_words(words);
  words = pair.target.surfaces();
  words[1] = "zebra";
  pair.target = Sentence::from_words(words);
  std::vector<DependencyNode> nodes = pair.source_parse->nodes();
  nodes[1].surface = "zebra";
  pair.source_parse = DependencyTree(nodes);
  nodes = pair.target_parse->nodes();
  nodes[1].surface = "zebra";
  pair.target_parse = DependencyTree(nodes);

  MarkedSentence marked = markers::mark_training_pair(pair, 0.0, 0);
  marked.lexical = {Marker::kKeep, Marker::kReplace, Marker::kIndifferent, Marker::kKeep, Marker::kReplace};
  marked.rule_markers[0].second = Marker::kKeep;
  for (size_t i = 1; i < marked.rule_markers.size(); ++i)
    marked.rule_markers[i].second = static_cast<Marker>(i % 3);
  auto example = model::make_training_example(marked, syntax::template_of(*pair.target_parse), pair.target, vocab);

  auto params = model::ModelParameters::initialize(config, vocab.size(), seed);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  std::uniform_real_distribution<double> noise(-0.3, 0.3);
  params.for_each([&](const std::string&, model::Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise(rng);
  });

  auto grads = model::ModelParameters::zeros(config, vocab.size());
  model::loss_and_gradients(params, config, example, &grads);
  std::map<std::string, const model::Matrix*> analytic;
  grads.for_each([&](const std::string& name, const model::Matrix& m) { analytic[name] = &m; });

  std::vector<GroupError> out;
  const double h = 1e-4;
  std::vector<std::pair<std::string, model::Matrix*>> slots;
  params.for_each([&](const std::string& name, model::Matrix& m) { slots.emplace_back(name, &m); });
  for (auto& [name, m] : slots) {
    model::Matrix numeric(m->rows(), m->cols());
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      double& x = m->data()[i];
      const double keep = x;
      x = keep + h;
      const double up = model::loss_and_gradients(params, config, example, nullptr);
      x = keep - h;
      const double down = model::loss_and_gradients(params, config, example, nullptr);
      x = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const model::Matrix& a = *analytic.at(name);
    // Key biases have an identically zero gradient; the floor turns their check into an absolute one.
    const double denom = std::max({a.norm(), numeric.norm(), 1e-4});
    out.push_back({name, (a - numeric).norm() / denom, a.norm()});
  }
  return out;
}

EnumerationOutcome enumeration_case(uint64_t seed, bool template_grammar) {
  std::vector<std::string> words{"cat", "sat"};
  std::vector<std::string> symbols{"PUNCT(", ")"};
  model::Model m{model::ModelConfig{}, Vocabulary::from_lists(words, symbols), {}};
  m.config.layers = 1;
  m.config.hidden_dim = 8;
  m.config.heads = 2;
  m.config.feedforward_dim = 16;
  m.config.max_positions = 16;
  m.config.dropout = 0.0;
  m.params = model::ModelParameters::initialize(m.config, m.vocab.size(), seed);
  std::mt19937_64 rng(seed * 31 + 7);
  std::normal_distribution<double> noise(0.0, 1.0);
  m.params.for_each([&](const std::string&, model::Matrix& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += noise(rng);
  });

  MarkedSentence marked{Sentence::parse("cat mat"), {Marker::kKeep, Marker::kIndifferent}, {}, {}, {}};
  auto source = model::make_source_input(markers::encoder_sequence(marked), m.vocab);
  auto pc = decoder::prepare_constraints(m, source, marked, ConstraintSet{});
  decoder::DecodeSettings settings;
  settings.beam_size = 300;
  settings.max_template_len = 2;
  settings.max_token_len = 3;
  settings.length_penalty = 1.0;
  settings.template_grammar = template_grammar;

  const int V = m.vocab.size();
  const std::vector<int> template_ids{m.vocab.id_of("PUNCT("), m.vocab.id_of(")")};
  const std::vector<int> token_ids{m.vocab.id_of("cat"), m.vocab.id_of("sat"), V};

  model::Matrix enc =
      model::encoder_forward(model::embed_input(m.params, m.config, source.ids, source.lexical, nullptr), m.params,
                             m.config)
          .output;
  auto sequence_logprob = [&](const std::vector<int>& ids) {
    std::vector<int> prefix{Vocabulary::kBos};
    double lp = 0.0;
    for (int id : ids) {
      auto dist = model::decoder_step(prefix, enc, source, m.params, m.config);
      lp += std::log(dist[static_cast<size_t>(id)]);
      prefix.push_back(id);
    }
    return lp;
  };

  EnumerationOutcome outcome;
  double best_score = -std::numeric_limits<double>::infinity();
  std::function<void(std::vector<int>&, size_t)> tokens = [&](std::vector<int>& ids, size_t depth) {
    if (depth >= 1) {
      ids.push_back(Vocabulary::kEos);
      ++outcome.sequences;
      const double score = sequence_logprob(ids) / static_cast<double>(ids.size());
      if (score > best_score || (score == best_score && ids < outcome.oracle_ids)) {
        best_score = score;
        outcome.oracle_ids = ids;
      }
      ids.pop_back();
    }
    if (depth == 3) return;
    for (int t : token_ids) {
      ids.push_back(t);
      tokens(ids, depth + 1);
      ids.pop_back();
    }
  };
  std::function<void(std::vector<int>&, size_t)> templates = [&](std::vector<int>& ids, size_t depth) {
    std::vector<std::string> surf;
    for (int id : ids) surf.push_back(m.vocab.surface_of(id));
    bool well_formed = true;
    try {
      syntax::Template::parse_tokens(surf);
    } catch (const FormatError&) {
      well_formed = false;
    }
    if (well_formed) {
      ids.push_back(Vocabulary::kSep);
      tokens(ids, 0);
      ids.pop_back();
    }
    if (depth == 2) return;
    for (int t : template_ids) {
      ids.push_back(t);
      templates(ids, depth + 1);
      ids.pop_back();
    }
  };
  std::vector<int> ids;
  templates(ids, 0);

  auto result = decoder::beam_search(m, source, pc, settings, marked.sentence.size());
  outcome.beam_ids = result.ids;
  outcome.equal = result.ids == outcome.oracle_ids;
  return outcome;
}

SweepCounts constraint_sweep(const model::Model& m, const std::vector<ParallelPair>& pairs, size_t cases,
                             uint64_t seed, int beam_size, int max_template_len) {
  SweepCounts counts;
  std::mt19937_64 rng(seed);
  decoder::DecodeSettings settings;
  settings.beam_size = beam_size;
  settings.max_template_len = max_template_len;
  std::vector<std::string> words;
  for (int id = Vocabulary::kReservedCount; id < m.vocab.size(); ++id)
    if (m.vocab.is_word(id)) words.push_back(m.vocab.surface_of(id));
  for (size_t c = 0; c < cases; ++c) {
    const ParallelPair& pair = pairs[rng() % pairs.size()];
    ConstraintSet cs;
    for (const auto& t : pair.source.tokens)
      if (rng() % 3 == 0) cs.banned_words.insert(t.surface);
    for (int k = static_cast<int>(rng() % 3); k > 0; --k) cs.banned_words.insert(words[rng() % words.size()]);
    const auto tmpl = syntax::template_of(*pair.source_parse);
    for (const auto& r : syntax::extract_rules(tmpl))
      if (rng() % 4 == 0) cs.banned_rules.insert(r);
    for (const auto& sub : synth::substitutions())
      if (rng() % 2 == 0) cs.substitutions.add(sub.complex, sub.simple);
    const auto banned = cs.banned_stems();
    // Substitution targets that are themselves banned cannot be offered.
    for (const auto& sub : synth::substitutions())
      if (banned.count(lexicon::stem(sub.simple))) cs.substitutions.remove_target_if(sub.complex, sub.simple);
    MarkedSentence marked = markers::mark_test_sentence(pair.source, pair.source_parse, cs, MarkMode::kKeepSimple,
                                                        corpus::function_words());
    ++counts.cases;
    try {
      auto result = decoder::beam_search(m, marked, cs, settings);
      ++counts.decoded;
      const auto stems = cs.banned_stems();
      for (const auto& t : result.output.tokens)
        if (stems.count(lexicon::stem(t.surface))) {
          ++counts.word_violations;
          break;
        }
      for (const auto& r : result.rules)
        if (cs.banned_rules.count(r)) {
          ++counts.rule_violations;
          break;
        }
    } catch (const ConstraintInfeasible&) {
      ++counts.infeasible;
    }
  }
  return counts;
}

}  // namespace oracle
