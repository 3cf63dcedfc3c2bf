#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctrlsimp/corpus.hpp"
#include "ctrlsimp/markers.hpp"

namespace ctrlsimp::model {

// Rows are sequence positions.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int layers = 2;
  int hidden_dim = 64;
  int heads = 4;
  int feedforward_dim = 128;
  int vocab_cap = 50000;
  int max_positions = 128;
  bool copy_enabled = true;
  double dropout = 0.1;

  // Desk-scale defaults above.
  static ModelConfig desk() { return {}; }
  // Full-size reference configuration (8 layers, 500 hidden, 10 heads).
  static ModelConfig paper() { return {8, 500, 10, 2048, 50000, 512, true, 0.1}; }

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Number of indicator rows: three lexical markers, then three syntactic.
inline constexpr int kIndicatorRows = 6;

struct LayerNormWeights {
  Matrix gain;  // 1 x d
  Matrix bias;  // 1 x d
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d x d
  Matrix bq, bk, bv, bo;  // 1 x d
};

struct FeedForwardWeights {
  Matrix w1;  // d x ff
  Matrix b1;  // 1 x ff
  Matrix w2;  // ff x d
  Matrix b2;  // 1 x d
};

struct EncoderLayerWeights {
  LayerNormWeights norm1;
  AttentionWeights self_attention;
  LayerNormWeights norm2;
  FeedForwardWeights feed_forward;
};

struct DecoderLayerWeights {
  LayerNormWeights norm1;
  AttentionWeights self_attention;
  LayerNormWeights norm2;
  AttentionWeights cross_attention;
  LayerNormWeights norm3;
  FeedForwardWeights feed_forward;
};

// Pointer-generator copy head.
struct CopyWeights {
  Matrix query;         // d x d
  Matrix gate_hidden;   // d x 1
  Matrix gate_context;  // d x 1
  Matrix gate_bias;     // 1 x 1
};

struct ModelParameters {
  Matrix embedding;   // V x d, shared by encoder, decoder and output projection
  Matrix positions;   // max_positions x d
  Matrix indicators;  // 6 x d
  std::vector<EncoderLayerWeights> encoder;
  LayerNormWeights encoder_norm;
  std::vector<DecoderLayerWeights> decoder;
  LayerNormWeights decoder_norm;
  Matrix output_bias;  // 1 x V
  CopyWeights copy;

  static ModelParameters zeros(const ModelConfig& config, int vocab_size);
  static ModelParameters initialize(const ModelConfig& config, int vocab_size, uint64_t seed);

  // Calls f(name, tensor) for every tensor in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& f);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& f) const;
  void set_zero();
  bool all_finite() const;
  size_t parameter_count() const;
};

struct Model {
  ModelConfig config;
  Vocabulary vocab;
  ModelParameters params;
};

// Encoder-side input: ids over the vocabulary plus the copy mapping.
struct SourceInput {
  std::vector<int> ids;           // UNK for out-of-vocabulary surfaces
  std::vector<int> extended_ids;  // OOV surfaces map to V + k
  std::vector<Marker> lexical;
  std::optional<std::vector<Marker>> syntactic;
  std::vector<std::string> oov_surfaces;  // index k <-> extended id V + k
  std::vector<std::string> surfaces;

  int extended_size(int vocab_size) const { return vocab_size + static_cast<int>(oov_surfaces.size()); }
};

SourceInput make_source_input(const EncoderSequence& seq, const Vocabulary& vocab);

// Target tokens as extended ids (template, "|||", words, EOS).
std::vector<int> target_extended_ids(std::span<const std::string> target_tokens, const SourceInput& source,
                                     const Vocabulary& vocab);

struct TrainingExample {
  SourceInput source;
  std::vector<int> target;  // extended ids, ends with EOS
};

// Target sequence is "template ||| tokens".
std::vector<std::string> target_tokens(const std::optional<syntax::Template>& tmpl, const Sentence& target);
TrainingExample make_training_example(const MarkedSentence& source, const std::optional<syntax::Template>& target_template,
                                      const Sentence& target, const Vocabulary& vocab);

// h0 = E[id] + e_pos[i] + cw[lexical] (+ cw[3 + syntactic]).
Matrix embed_input(const ModelParameters& params, const ModelConfig& config, std::span<const int> ids,
                   std::span<const Marker> lexical, const std::vector<Marker>* syntactic);

struct EncoderStates {
  std::vector<Matrix> layers;  // h^0 .. h^L (residual stream)
  Matrix output;               // normalized final states
};

EncoderStates encoder_forward(const Matrix& h0, const ModelParameters& params, const ModelConfig& config);

// Full-prefix decoder pass; returns the distribution for the next token
// over the vocabulary followed by the source's OOV copy slots.
std::vector<double> decoder_step(std::span<const int> prefix, const Matrix& encoder_output, const SourceInput& source,
                                 const ModelParameters& params, const ModelConfig& config);

// Decoder with per-layer key/value caches for beam search.
class IncrementalDecoder {
 public:
  struct State {
    std::vector<Matrix> keys;
    std::vector<Matrix> values;
    int length = 0;
  };

  IncrementalDecoder(const ModelParameters& params, const ModelConfig& config, const Matrix& encoder_output,
                     const SourceInput& source);

  State initial_state() const;
  // Feeds `token` at position state.length and returns the next-token distribution.
  std::vector<double> step(State& state, int token) const;

 private:
  const ModelParameters& params_;
  const ModelConfig& config_;
  const Matrix& encoder_output_;
  const SourceInput& source_;
  std::vector<Matrix> cross_keys_;
  std::vector<Matrix> cross_values_;
  int vocab_size_;
};

// Dropout source for training passes. A null context or rate 0 disables dropout.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Summed token cross-entropy; accumulates d(loss)/d(params) into `grads`
// when non-null.
double loss_and_gradients(const ModelParameters& params, const ModelConfig& config, const TrainingExample& example,
                          ModelParameters* grads, DropoutContext* dropout = nullptr);

// Versioned binary checkpoint holding config, vocabulary and named tensors.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ctrlsimp::model
