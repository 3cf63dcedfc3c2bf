#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/metrics.hpp"
#include "ctrlsimp/training.hpp"
#include "service.hpp"

namespace ctrlsimp::app {
namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::vector<Sentence> load_nonempty(const std::string& path) {
  auto s = corpus::load_sentences(path);
  if (s.empty()) throw ValidationError("input file " + path + " is empty");
  return s;
}

std::vector<ParallelPair> load_pairs(const std::string& complex, const std::string& simple,
                                     const std::string& complex_parses, const std::string& simple_parses) {
  auto pairs = corpus::load_parallel_corpus(complex, simple);
  if (pairs.empty()) throw ValidationError("corpus " + complex + " is empty");
  if (complex_parses.empty() != simple_parses.empty())
    throw ValidationError("parses must be given for both sides or neither");
  if (!complex_parses.empty())
    corpus::attach_parses(pairs, corpus::load_conllu_file(complex_parses), corpus::load_conllu_file(simple_parses));
  return pairs;
}

// ---- train

struct TrainOptions {
  std::string complex, simple, complex_parses, simple_parses;
  std::string valid_complex, valid_simple, valid_complex_parses, valid_simple_parses;
  std::string config, out, log;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
};

int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) rc.train.seed = *o.seed;
  if (o.threads) rc.train.threads = *o.threads;
  rc.train.validate();
  auto train = load_pairs(o.complex, o.simple, o.complex_parses, o.simple_parses);
  std::vector<ParallelPair> valid;
  if (!o.valid_complex.empty() || !o.valid_simple.empty()) {
    valid = load_pairs(o.valid_complex, o.valid_simple, o.valid_complex_parses, o.valid_simple_parses);
  } else {
    err << "no validation corpus given; validating on the training corpus\n";
    valid = train;
  }

  std::vector<std::string> symbols = syntax::base_template_symbols();
  for (const auto& p : train)
    for (const auto* t : {&p.source_parse, &p.target_parse})
      if (*t)
        for (auto& s : syntax::template_symbols_of(syntax::template_of(**t))) symbols.push_back(std::move(s));
  Vocabulary vocab = corpus::build_vocabulary(train, rc.model.vocab_cap, symbols);

  model::TrainingLog log;
  auto on_epoch = [&err](const model::EpochRecord& r) {
    err << "epoch " << r.epoch << " loss " << r.loss;
    if (r.validation_sari) err << " validation SARI " << *r.validation_sari;
    err << '\n';
  };
  model::Model m = model::train_model(train, valid, vocab, rc.model, rc.train, &log, on_epoch);
  model::save_checkpoint(m, o.out);
  if (!o.log.empty()) open_out(o.log) << log.to_json();
  out << "saved " << o.out << " (best epoch " << log.best_epoch << ", stop: " << log.stop_reason << ")\n";
  return kExitOk;
}

// ---- inventories shared by simplify and serve

struct InventoryOptions {
  std::string complex_list, dictionary, ranking, synchronous;
  std::string scale = "absolute";
};

void add_inventory_options(CLI::App* cmd, InventoryOptions& o) {
  cmd->add_option("--complex-list", o.complex_list, "Complex word list, one word per line, most complex first")
      ->check(CLI::ExistingFile);
  cmd->add_option("--dictionary", o.dictionary, "Simplification dictionary (complex<TAB>simple,...)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--rules", o.ranking, "Ranked syntax rule list")->check(CLI::ExistingFile);
  cmd->add_option("--synchronous", o.synchronous, "Synchronous rules (complex<TAB>simple)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--scale", o.scale, "Word budget scale")->check(CLI::IsMember({"absolute", "inventory"}));
}

service::Inventories load_inventories(const InventoryOptions& o) {
  service::Inventories inv;
  if (!o.complex_list.empty()) {
    auto in = open_in(o.complex_list);
    inv.complex_list = lexicon::ComplexWordList::load(in);
  }
  if (!o.dictionary.empty()) {
    auto in = open_in(o.dictionary);
    inv.dictionary = lexicon::SimplificationDictionary::load(in);
  }
  if (!o.ranking.empty()) {
    auto in = open_in(o.ranking);
    inv.ranking = syntax::read_rule_ranking(in);
  }
  if (!o.synchronous.empty()) {
    auto in = open_in(o.synchronous);
    inv.synchronous = syntax::read_synchronous(in);
  }
  inv.scale = o.scale == "inventory" ? BudgetScale::kInventory : BudgetScale::kAbsolute;
  return inv;
}

decoder::DecodeSettings decode_settings(const std::string& config, std::optional<int> beam) {
  decoder::DecodeSettings d = config.empty() ? decoder::DecodeSettings{} : RunConfig::load(config).decode;
  if (beam) {
    d.beam_size = *beam;
    d.nbest = std::min(d.nbest, d.beam_size);
  }
  d.validate();
  return d;
}

// ---- simplify

struct SimplifyOptions {
  std::string model, input, parses, markers, config, output;
  std::string level = "simple";
  std::string profile = "wikilarge";
  std::string format = "text";
  std::optional<int> beam;
  InventoryOptions inventory;
};

std::vector<markers::MarkerOverrides> read_markers(const std::string& path, const std::vector<Sentence>& input) {
  auto in = open_in(path);
  std::vector<markers::MarkerOverrides> all;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t lineno = all.size() + 1;
    if (lineno > input.size()) throw ValidationError(path + ": more lines than the input");
    markers::MarkerOverrides row;
    std::istringstream fields(line);
    std::string f;
    while (fields >> f) {
      if (f == "-" || f == "_") row.emplace_back();
      else row.emplace_back(parse_marker(f));
    }
    if (!row.empty() && row.size() != input[lineno - 1].size())
      throw ValidationError(path + ": line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                            " markers for " + std::to_string(input[lineno - 1].size()) + " tokens");
    all.push_back(std::move(row));
  }
  if (all.size() != input.size())
    throw ValidationError(path + ": " + std::to_string(all.size()) + " lines for " + std::to_string(input.size()) +
                          " input sentences");
  return all;
}

int run_simplify(const SimplifyOptions& o, std::ostream& out) {
  const auto input = load_nonempty(o.input);
  std::vector<DependencyTree> parses;
  if (!o.parses.empty()) {
    parses = corpus::load_conllu_file(o.parses);
    if (parses.size() != input.size())
      throw ValidationError(o.parses + ": " + std::to_string(parses.size()) + " parses for " +
                            std::to_string(input.size()) + " sentences");
    for (size_t i = 0; i < input.size(); ++i)
      if (parses[i].surfaces() != input[i].surfaces())
        throw ValidationError(o.parses + ": parse " + std::to_string(i + 1) + " does not match the input words");
  }
  std::vector<markers::MarkerOverrides> overrides(input.size());
  if (!o.markers.empty()) overrides = read_markers(o.markers, input);

  service::Session session(model::load_checkpoint(o.model), load_inventories(o.inventory),
                           decode_settings(o.config, o.beam));
  const Profile profile = parse_profile(o.profile);
  const Level level = parse_level(o.level);

  std::ostringstream buf;
  for (size_t i = 0; i < input.size(); ++i) {
    std::optional<DependencyTree> parse;
    if (!parses.empty()) parse = parses[i];
    service::SimplifyResponse r;
    try {
      r = service::simplify_sentence(session, input[i], parse, overrides[i], profile, level);
    } catch (const ConstraintInfeasible& e) {
      throw ValidationError(o.input + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
    std::string tokens;
    for (const auto& t : r.output_tokens) tokens += (tokens.empty() ? "" : " ") + t;
    if (o.format == "text") {
      buf << tokens << '\n';
    } else if (o.format == "joint") {
      buf << r.template_text << ' ' << Vocabulary::kSepSurface << ' ' << tokens << '\n';
    } else {
      std::string j = r.to_json(false);
      buf << j;
    }
  }
  if (o.output.empty()) out << buf.str();
  else open_out(o.output) << buf.str();
  return kExitOk;
}

// ---- evaluate

struct EvaluateOptions {
  std::string source, output;
  std::vector<std::string> refs;
  std::string format = "json";
};

int run_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const auto sources = load_nonempty(o.source);
  const auto outputs = corpus::load_sentences(o.output);
  if (outputs.size() != sources.size())
    throw ValidationError(o.output + " has " + std::to_string(outputs.size()) + " lines, " + o.source + " has " +
                          std::to_string(sources.size()));
  std::vector<metrics::EvalInstance> instances;
  for (size_t i = 0; i < sources.size(); ++i) instances.push_back({sources[i], outputs[i], {}});
  for (const auto& path : o.refs) {
    const auto refs = corpus::load_sentences(path);
    if (refs.size() != sources.size())
      throw ValidationError(path + " has " + std::to_string(refs.size()) + " lines, " + o.source + " has " +
                            std::to_string(sources.size()));
    for (size_t i = 0; i < refs.size(); ++i) instances[i].references.push_back(refs[i]);
  }
  const auto report = metrics::evaluate_all(instances);
  out << (o.format == "json" ? report.to_json() : report.to_table());
  return kExitOk;
}

// ---- build-lexicon

struct LexiconOptions {
  std::string complex, simple, out_list, out_dictionary, manual;
  bool bundled_manual = false;
  size_t size = lexicon::kWikiLargeListSize;
  int iterations = lexicon::kDefaultIbmIterations;
  double threshold = lexicon::kDefaultProbThreshold;
  double smoothing = 1.0;
};

int run_build_lexicon(const LexiconOptions& o, std::ostream& out) {
  const auto pairs = load_pairs(o.complex, o.simple, "", "");
  const auto list = lexicon::build_complex_list(pairs, o.size, o.smoothing);
  std::optional<lexicon::SimplificationDictionary> manual;
  if (o.bundled_manual) manual = lexicon::bundled_manual_dictionary();
  if (!o.manual.empty()) {
    auto in = open_in(o.manual);
    auto loaded = lexicon::SimplificationDictionary::load(in);
    if (manual) loaded.merge_over(*manual);
    manual = std::move(loaded);
  }
  const auto table = lexicon::train_ibm1(pairs, o.iterations);
  const auto dict = lexicon::build_dictionary(table, list, manual ? &*manual : nullptr, o.threshold);
  {
    auto f = open_out(o.out_list);
    list.save(f);
  }
  if (!o.out_dictionary.empty()) {
    auto f = open_out(o.out_dictionary);
    dict.save(f);
  }
  out << "complex words: " << list.size() << "\ndictionary entries: " << dict.size() << '\n';
  return kExitOk;
}

// ---- extract-templates

struct ExtractOptions {
  std::string conllu, simple_conllu, templates, ranking, synchronous;
  double top_fraction = 1.0;
};

std::string rule_line(const std::vector<syntax::SyntaxRule>& rules) {
  std::string s;
  for (const auto& r : rules) s += (s.empty() ? "" : ", ") + r.to_string();
  return s;
}

int run_extract(const ExtractOptions& o, std::ostream& out) {
  const auto trees = corpus::load_conllu_file(o.conllu);
  if (trees.empty()) throw ValidationError("input file " + o.conllu + " is empty");
  if ((!o.ranking.empty() || !o.synchronous.empty()) && o.simple_conllu.empty())
    throw ValidationError("--ranking and --synchronous need --simple-conllu");

  std::ostringstream report, joint;
  for (size_t i = 0; i < trees.size(); ++i) {
    const auto lin = syntax::linearize_parse(trees[i]);
    const auto t = syntax::extract_template(lin);
    const auto sentence = Sentence::from_words(trees[i].surfaces());
    if (i) report << '\n';
    report << "sentence: " << sentence.text() << '\n'
           << "linearized: " << lin.text << '\n'
           << "template: " << t.render_display() << '\n'
           << "joint: " << syntax::join_template_and_tokens(t, sentence) << '\n'
           << "rules: " << rule_line(syntax::extract_rules(t)) << '\n';
    joint << syntax::join_template_and_tokens(t, sentence) << '\n';
  }
  if (!o.templates.empty()) open_out(o.templates) << joint.str();

  if (!o.simple_conllu.empty()) {
    const auto simple = corpus::load_conllu_file(o.simple_conllu);
    if (simple.size() != trees.size())
      throw ValidationError(o.simple_conllu + " has " + std::to_string(simple.size()) + " sentences, " + o.conllu +
                            " has " + std::to_string(trees.size()));
    std::vector<ParallelPair> pairs;
    for (size_t i = 0; i < trees.size(); ++i)
      pairs.push_back({Sentence::from_words(trees[i].surfaces()), Sentence::from_words(simple[i].surfaces()), trees[i],
                       simple[i]});
    if (!o.ranking.empty()) {
      auto f = open_out(o.ranking);
      syntax::write_rule_ranking(f, syntax::rank_rules_by_complexity(pairs, o.top_fraction));
    }
    const auto sync = syntax::extract_synchronous_rules(pairs);
    if (!o.synchronous.empty()) {
      auto f = open_out(o.synchronous);
      syntax::write_synchronous(f, sync.counts);
    }
    report << "\nsynchronous rules: " << sync.counts.size() << '\n';
  }
  out << report.str();
  return kExitOk;
}

// ---- serve

struct ServeOptions {
  std::string model, config;
  std::string host = "127.0.0.1";
  std::optional<int> port;
  InventoryOptions inventory;
};

int resolve_port(const std::optional<int>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CTRLSIMP_PORT")) {
    try {
      size_t used = 0;
      int p = std::stoi(env, &used);
      if (used == std::string(env).size() && p > 0 && p < 65536) return p;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("CTRLSIMP_PORT is not a valid port: '") + env + "'");
  }
  return 8080;
}

int run_serve(const ServeOptions& o, std::ostream& err) {
  const int port = resolve_port(o.port);
  service::Session session(model::load_checkpoint(o.model), load_inventories(o.inventory),
                           decode_settings(o.config, std::nullopt));
  err << "listening on " << o.host << ':' << port << '\n';
  err.flush();
  service::serve(session, o.host, port);
  return kExitOk;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Controllable sentence simplification", "ctrlsimp"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
  t->add_option("--complex", train.complex, "Complex side, one sentence per line")->required()->check(CLI::ExistingFile);
  t->add_option("--simple", train.simple, "Simple side, one sentence per line")->required()->check(CLI::ExistingFile);
  t->add_option("--complex-parses", train.complex_parses, "CoNLL-U parses of the complex side")->check(CLI::ExistingFile);
  t->add_option("--simple-parses", train.simple_parses, "CoNLL-U parses of the simple side")->check(CLI::ExistingFile);
  t->add_option("--valid-complex", train.valid_complex)->check(CLI::ExistingFile);
  t->add_option("--valid-simple", train.valid_simple)->check(CLI::ExistingFile);
  t->add_option("--valid-complex-parses", train.valid_complex_parses)->check(CLI::ExistingFile);
  t->add_option("--valid-simple-parses", train.valid_simple_parses)->check(CLI::ExistingFile);
  t->add_option("--config", train.config, "Profile file")->check(CLI::ExistingFile);
  t->add_option("--seed", train.seed, "Overrides the profile seed");
  t->add_option("--threads", train.threads, "Worker threads per batch");
  t->add_option("--out", train.out, "Checkpoint path")->required();
  t->add_option("--log", train.log, "Write the training log as JSON");

  SimplifyOptions simp;
  auto* s = app.add_subcommand("simplify", "Simplify sentences with a trained checkpoint");
  s->add_option("--model", simp.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  s->add_option("--input", simp.input, "Sentences, one per line")->required()->check(CLI::ExistingFile);
  s->add_option("--parses", simp.parses, "CoNLL-U parses of the input")->check(CLI::ExistingFile);
  s->add_option("--markers", simp.markers, "Per-token overrides (K/R/I or - per token)")->check(CLI::ExistingFile);
  s->add_option("--level", simp.level)->check(CLI::IsMember({"simple", "xsimple"}, CLI::ignore_case));
  s->add_option("--profile", simp.profile)->check(CLI::IsMember({"wikilarge", "newsela"}, CLI::ignore_case));
  s->add_option("--beam", simp.beam, "Beam size");
  s->add_option("--config", simp.config, "Profile file; its [decode] section applies")->check(CLI::ExistingFile);
  s->add_option("--format", simp.format)->check(CLI::IsMember({"text", "joint", "json"}));
  s->add_option("--output", simp.output, "Write here instead of stdout");
  add_inventory_options(s, simp.inventory);

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score system outputs against references");
  e->add_option("--source", ev.source)->required()->check(CLI::ExistingFile);
  e->add_option("--output", ev.output)->required()->check(CLI::ExistingFile);
  e->add_option("--refs", ev.refs, "Reference files ref.0 ... ref.k")->required()->check(CLI::ExistingFile);
  e->add_option("--format", ev.format)->check(CLI::IsMember({"json", "table"}));

  LexiconOptions lex;
  auto* l = app.add_subcommand("build-lexicon", "Build a complex word list and simplification dictionary");
  l->add_option("--complex", lex.complex)->required()->check(CLI::ExistingFile);
  l->add_option("--simple", lex.simple)->required()->check(CLI::ExistingFile);
  l->add_option("--size", lex.size, "List length");
  l->add_option("--out-list", lex.out_list)->required();
  l->add_option("--out-dictionary", lex.out_dictionary);
  l->add_option("--manual", lex.manual, "Manual dictionary merged over the aligned one")->check(CLI::ExistingFile);
  l->add_flag("--bundled-manual", lex.bundled_manual, "Merge the bundled manual dictionary");
  l->add_option("--iterations", lex.iterations, "Alignment EM iterations")->check(CLI::PositiveNumber);
  l->add_option("--threshold", lex.threshold, "Minimum alignment probability")->check(CLI::Range(0.0, 1.0));
  l->add_option("--smoothing", lex.smoothing)->check(CLI::PositiveNumber);

  ExtractOptions xo;
  auto* x = app.add_subcommand("extract-templates", "Templates, rules and synchronous rules from parses");
  x->add_option("--conllu", xo.conllu, "Complex-side parses")->required()->check(CLI::ExistingFile);
  x->add_option("--simple-conllu", xo.simple_conllu, "Aligned simple-side parses")->check(CLI::ExistingFile);
  x->add_option("--templates", xo.templates, "Write 'template ||| tokens' lines");
  x->add_option("--ranking", xo.ranking, "Write the rule complexity ranking");
  x->add_option("--synchronous", xo.synchronous, "Write synchronous rules");
  x->add_option("--top-fraction", xo.top_fraction)->check(CLI::Range(0.0, 1.0));

  ServeOptions sv;
  auto* v = app.add_subcommand("serve", "Serve the JSON API");
  v->add_option("--model", sv.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  v->add_option("--host", sv.host);
  v->add_option("--port", sv.port, "Defaults to $CTRLSIMP_PORT, then 8080")->check(CLI::Range(1, 65535));
  v->add_option("--config", sv.config, "Profile file; its [decode] section applies")->check(CLI::ExistingFile);
  add_inventory_options(v, sv.inventory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*t) return run_train(train, out, err);
    if (*s) return run_simplify(simp, out);
    if (*e) return run_evaluate(ev, out);
    if (*l) return run_build_lexicon(lex, out);
    if (*x) return run_extract(xo, out);
    if (*v) return run_serve(sv, err);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const TreeError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const LengthError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const ConstraintInfeasible& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace ctrlsimp::app
