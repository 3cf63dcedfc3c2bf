#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "ctrlsimp/decoder.hpp"
#include "ctrlsimp/metrics.hpp"
#include "ctrlsimp/model.hpp"

using namespace ctrlsimp;

namespace {

std::vector<std::string> words(size_t n, uint64_t seed) {
  static const char* pool[] = {"the", "cat",  "sat", "on",    "a",    "mat",  "dog", "ran",
                               "far", "away", "big", "small", "tree", "house", "it", "was"};
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) out.emplace_back(pool[rng() % 16]);
  return out;
}

model::Model small_model(int hidden) {
  std::vector<std::string> vocab_words;
  for (const char* w : {"the", "cat", "sat", "on", "a", "mat", "dog", "ran", "far", "away", "big", "small", "tree",
                        "house", "it", "was"})
    vocab_words.emplace_back(w);
  auto symbols = syntax::base_template_symbols();
  Vocabulary vocab = Vocabulary::from_lists(vocab_words, symbols);
  model::ModelConfig c = model::ModelConfig::desk();
  c.hidden_dim = hidden;
  c.feedforward_dim = 2 * hidden;
  return {c, vocab, model::ModelParameters::initialize(c, vocab.size(), 3)};
}

MarkedSentence marked(size_t n) {
  MarkedSentence m;
  m.sentence = Sentence::from_words(words(n, 11));
  m.lexical.assign(n, Marker::kKeep);
  return m;
}

}  // namespace

static void BM_EncoderForward(benchmark::State& state) {
  const auto m = small_model(64);
  const auto src = model::make_source_input(markers::encoder_sequence(marked(static_cast<size_t>(state.range(0)))),
                                            m.vocab);
  for (auto _ : state) {
    auto h0 = model::embed_input(m.params, m.config, src.ids, src.lexical, src.syntactic ? &*src.syntactic : nullptr);
    benchmark::DoNotOptimize(model::encoder_forward(h0, m.params, m.config));
  }
}
BENCHMARK(BM_EncoderForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_BeamSearch(benchmark::State& state) {
  const auto m = small_model(32);
  const auto ms = marked(8);
  decoder::DecodeSettings s;
  s.beam_size = static_cast<int>(state.range(0));
  s.max_template_len = 6;
  s.max_token_len = 10;
  for (auto _ : state) benchmark::DoNotOptimize(decoder::beam_search(m, ms, ConstraintSet{}, s));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_Sari(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  std::vector<metrics::EvalInstance> inst;
  for (uint64_t i = 0; i < 64; ++i)
    inst.push_back({Sentence::from_words(words(n, i)), Sentence::from_words(words(n, i + 100)),
                    {Sentence::from_words(words(n, i + 200))}});
  for (auto _ : state) benchmark::DoNotOptimize(metrics::sari(inst));
}
BENCHMARK(BM_Sari)->Arg(10)->Arg(30);

static void BM_Bleu(benchmark::State& state) {
  std::vector<Sentence> outs;
  std::vector<std::vector<Sentence>> refs;
  for (uint64_t i = 0; i < 256; ++i) {
    outs.push_back(Sentence::from_words(words(20, i)));
    refs.push_back({Sentence::from_words(words(20, i + 1000))});
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu(outs, refs));
}
BENCHMARK(BM_Bleu);
BENCHMARK_MAIN();
