#include "ctrlsimp/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include "ctrlsimp/errors.hpp"
#include "nn.hpp"

namespace ctrlsimp::model {

void ModelConfig::validate() const {
  if (layers < 1) throw ValidationError("layers must be >= 1");
  if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
  if (heads < 1 || hidden_dim % heads != 0) throw ValidationError("hidden_dim must be divisible by heads");
  if (feedforward_dim < 1) throw ValidationError("feedforward_dim must be >= 1");
  if (vocab_cap < Vocabulary::kReservedCount + 1) throw ValidationError("vocab_cap too small");
  if (max_positions < 2) throw ValidationError("max_positions must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
}

namespace {

Matrix zeros(Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); }

LayerNormWeights norm_zeros(int d) { return {zeros(1, d), zeros(1, d)}; }

AttentionWeights attention_zeros(int d) {
  return {zeros(d, d), zeros(d, d), zeros(d, d), zeros(d, d), zeros(1, d), zeros(1, d), zeros(1, d), zeros(1, d)};
}

FeedForwardWeights ffn_zeros(int d, int ff) { return {zeros(d, ff), zeros(1, ff), zeros(ff, d), zeros(1, d)}; }

template <class Params, class F>
void visit(Params& p, F&& f) {
  f("embedding", p.embedding);
  f("positions", p.positions);
  f("indicators", p.indicators);
  auto norm = [&](const std::string& prefix, auto& n) {
    f(prefix + ".gain", n.gain);
    f(prefix + ".bias", n.bias);
  };
  auto attn = [&](const std::string& prefix, auto& a) {
    f(prefix + ".wq", a.wq);
    f(prefix + ".wk", a.wk);
    f(prefix + ".wv", a.wv);
    f(prefix + ".wo", a.wo);
    f(prefix + ".bq", a.bq);
    f(prefix + ".bk", a.bk);
    f(prefix + ".bv", a.bv);
    f(prefix + ".bo", a.bo);
  };
  auto ffn = [&](const std::string& prefix, auto& w) {
    f(prefix + ".w1", w.w1);
    f(prefix + ".b1", w.b1);
    f(prefix + ".w2", w.w2);
    f(prefix + ".b2", w.b2);
  };
  for (size_t l = 0; l < p.encoder.size(); ++l) {
    const std::string base = "encoder." + std::to_string(l);
    norm(base + ".norm1", p.encoder[l].norm1);
    attn(base + ".self_attention", p.encoder[l].self_attention);
    norm(base + ".norm2", p.encoder[l].norm2);
    ffn(base + ".feed_forward", p.encoder[l].feed_forward);
  }
  norm("encoder_norm", p.encoder_norm);
  for (size_t l = 0; l < p.decoder.size(); ++l) {
    const std::string base = "decoder." + std::to_string(l);
    norm(base + ".norm1", p.decoder[l].norm1);
    attn(base + ".self_attention", p.decoder[l].self_attention);
    norm(base + ".norm2", p.decoder[l].norm2);
    attn(base + ".cross_attention", p.decoder[l].cross_attention);
    norm(base + ".norm3", p.decoder[l].norm3);
    ffn(base + ".feed_forward", p.decoder[l].feed_forward);
  }
  norm("decoder_norm", p.decoder_norm);
  f("output_bias", p.output_bias);
  f("copy.query", p.copy.query);
  f("copy.gate_hidden", p.copy.gate_hidden);
  f("copy.gate_context", p.copy.gate_context);
  f("copy.gate_bias", p.copy.gate_bias);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParameters ModelParameters::zeros(const ModelConfig& c, int vocab_size) {
  c.validate();
  const int d = c.hidden_dim;
  ModelParameters p;
  p.embedding = Matrix::Zero(vocab_size, d);
  p.positions = Matrix::Zero(c.max_positions, d);
  p.indicators = Matrix::Zero(kIndicatorRows, d);
  for (int l = 0; l < c.layers; ++l) {
    p.encoder.push_back({norm_zeros(d), attention_zeros(d), norm_zeros(d), ffn_zeros(d, c.feedforward_dim)});
    p.decoder.push_back({norm_zeros(d), attention_zeros(d), norm_zeros(d), attention_zeros(d), norm_zeros(d),
                         ffn_zeros(d, c.feedforward_dim)});
  }
  p.encoder_norm = norm_zeros(d);
  p.decoder_norm = norm_zeros(d);
  p.output_bias = Matrix::Zero(1, vocab_size);
  p.copy = {Matrix::Zero(d, d), Matrix::Zero(d, 1), Matrix::Zero(d, 1), Matrix::Zero(1, 1)};
  return p;
}

ModelParameters ModelParameters::initialize(const ModelConfig& c, int vocab_size, uint64_t seed) {
  ModelParameters p = zeros(c, vocab_size);
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a) { return (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * a; };
  p.for_each([&](const std::string& name, Matrix& m) {
    if (ends_with(name, ".gain")) {
      m.setOnes();
      return;
    }
    const bool bias = ends_with(name, ".bq") || ends_with(name, ".bk") || ends_with(name, ".bv") ||
                      ends_with(name, ".bo") || ends_with(name, ".b1") || ends_with(name, ".b2") ||
                      ends_with(name, ".bias") || name == "output_bias" || name == "copy.gate_bias";
    if (bias) return;
    double a = 0.1;
    if (name != "embedding" && name != "positions" && name != "indicators")
      a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(a);
  });
  return p;
}

void ModelParameters::for_each(const std::function<void(const std::string&, Matrix&)>& f) { visit(*this, f); }

void ModelParameters::for_each(const std::function<void(const std::string&, const Matrix&)>& f) const {
  visit(*this, f);
}

void ModelParameters::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

bool ModelParameters::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

size_t ModelParameters::parameter_count() const {
  size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<size_t>(m.size()); });
  return n;
}

SourceInput make_source_input(const EncoderSequence& seq, const Vocabulary& vocab) {
  SourceInput s;
  s.lexical = seq.lexical;
  s.syntactic = seq.syntactic;
  s.surfaces = seq.tokens;
  std::unordered_map<std::string, int> oov;
  for (const auto& tok : seq.tokens) {
    const int id = vocab.id_of(tok);
    s.ids.push_back(id);
    if (id != Vocabulary::kUnk || tok == vocab.surface_of(Vocabulary::kUnk)) {
      s.extended_ids.push_back(id);
      continue;
    }
    auto [it, fresh] = oov.try_emplace(tok, vocab.size() + static_cast<int>(s.oov_surfaces.size()));
    if (fresh) s.oov_surfaces.push_back(tok);
    s.extended_ids.push_back(it->second);
  }
  return s;
}

std::vector<int> target_extended_ids(std::span<const std::string> tokens, const SourceInput& source,
                                     const Vocabulary& vocab) {
  std::vector<int> out;
  for (const auto& tok : tokens) {
    if (tok == Vocabulary::kSepSurface) {
      out.push_back(Vocabulary::kSep);
      continue;
    }
    int id = vocab.id_of(tok);
    if (id == Vocabulary::kUnk) {
      for (size_t k = 0; k < source.oov_surfaces.size(); ++k)
        if (source.oov_surfaces[k] == tok) id = vocab.size() + static_cast<int>(k);
    }
    out.push_back(id);
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

std::vector<std::string> target_tokens(const std::optional<syntax::Template>& tmpl, const Sentence& target) {
  std::vector<std::string> out;
  if (tmpl) out = tmpl->tokens();
  out.emplace_back(Vocabulary::kSepSurface);
  for (const auto& t : target.tokens) out.push_back(t.surface);
  return out;
}

TrainingExample make_training_example(const MarkedSentence& source, const std::optional<syntax::Template>& tt,
                                      const Sentence& target, const Vocabulary& vocab) {
  TrainingExample ex;
  ex.source = make_source_input(markers::encoder_sequence(source), vocab);
  ex.target = target_extended_ids(target_tokens(tt, target), ex.source, vocab);
  return ex;
}

namespace {

void check_length(Eigen::Index n, const ModelConfig& c, const char* what) {
  if (n > c.max_positions)
    throw LengthError(std::string(what) + " length " + std::to_string(n) + " exceeds max_positions " +
                      std::to_string(c.max_positions));
}

int model_input_id(int ext_id, int vocab_size) { return ext_id >= vocab_size ? Vocabulary::kUnk : ext_id; }

Matrix decoder_embed(const ModelParameters& p, std::span<const int> inputs) {
  const int v = static_cast<int>(p.embedding.rows());
  Matrix y(static_cast<Eigen::Index>(inputs.size()), p.embedding.cols());
  for (size_t t = 0; t < inputs.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    y.row(r) = p.embedding.row(model_input_id(inputs[t], v)) + p.positions.row(r);
  }
  return y;
}

// Copy head and vocabulary softmax for a block of decoder states.
struct OutputHead {
  Matrix pv;       // T x V
  Matrix query;    // T x d
  Matrix attn;     // T x n
  Matrix context;  // T x d
  Eigen::VectorXd gate;
};

OutputHead output_head(const Matrix& h, const Matrix& enc, const ModelParameters& p, const ModelConfig& c) {
  OutputHead o;
  o.pv = h * p.embedding.transpose();
  o.pv.rowwise() += p.output_bias.row(0);
  nn::softmax_rows(o.pv);
  if (!c.copy_enabled) {
    o.gate = Eigen::VectorXd::Ones(h.rows());
    return o;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.hidden_dim));
  o.query = h * p.copy.query;
  o.attn = (o.query * enc.transpose()) * scale;
  nn::softmax_rows(o.attn);
  o.context = o.attn * enc;
  Eigen::VectorXd z = h * p.copy.gate_hidden + o.context * p.copy.gate_context;
  o.gate = (1.0 / (1.0 + (-(z.array() + p.copy.gate_bias(0, 0))).exp())).matrix();
  return o;
}

std::vector<double> distribution_row(const OutputHead& o, Eigen::Index t, const SourceInput& source, int vocab_size,
                                     const ModelConfig& c) {
  std::vector<double> dist(static_cast<size_t>(source.extended_size(vocab_size)), 0.0);
  const double g = o.gate(t);
  for (int w = 0; w < vocab_size; ++w) dist[static_cast<size_t>(w)] = g * o.pv(t, w);
  if (c.copy_enabled)
    for (size_t j = 0; j < source.extended_ids.size(); ++j)
      dist[static_cast<size_t>(source.extended_ids[j])] += (1.0 - g) * o.attn(t, static_cast<Eigen::Index>(j));
  return dist;
}

}  // namespace

Matrix embed_input(const ModelParameters& p, const ModelConfig& c, std::span<const int> ids,
                   std::span<const Marker> lexical, const std::vector<Marker>* syntactic) {
  if (lexical.size() != ids.size()) throw ValidationError("lexical markers must align with source ids");
  if (syntactic && syntactic->size() != ids.size())
    throw ValidationError("syntactic markers must align with source ids");
  check_length(static_cast<Eigen::Index>(ids.size()), c, "source");
  Matrix h(static_cast<Eigen::Index>(ids.size()), c.hidden_dim);
  for (size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    h.row(r) = p.embedding.row(ids[i]) + p.positions.row(r) + p.indicators.row(static_cast<int>(lexical[i]));
    if (syntactic) h.row(r) += p.indicators.row(3 + static_cast<int>((*syntactic)[i]));
  }
  return h;
}

EncoderStates encoder_forward(const Matrix& h0, const ModelParameters& p, const ModelConfig& c) {
  EncoderStates s;
  s.layers.push_back(h0);
  for (const auto& layer : p.encoder) s.layers.push_back(nn::encoder_layer(s.layers.back(), layer, c.heads, nullptr, nullptr));
  s.output = nn::layer_norm(s.layers.back(), p.encoder_norm, nullptr);
  if (!s.output.allFinite()) throw NumericError("non-finite encoder states");
  return s;
}

std::vector<double> decoder_step(std::span<const int> prefix, const Matrix& enc, const SourceInput& source,
                                 const ModelParameters& p, const ModelConfig& c) {
  if (prefix.empty()) throw ValidationError("decoder prefix must start with BOS");
  check_length(static_cast<Eigen::Index>(prefix.size()), c, "target");
  Matrix y = decoder_embed(p, prefix);
  for (const auto& layer : p.decoder) y = nn::decoder_layer(y, enc, layer, c.heads, nullptr, nullptr);
  Matrix h = nn::layer_norm(y.bottomRows(1), p.decoder_norm, nullptr);
  OutputHead o = output_head(h, enc, p, c);
  return distribution_row(o, 0, source, static_cast<int>(p.embedding.rows()), c);
}

IncrementalDecoder::IncrementalDecoder(const ModelParameters& params, const ModelConfig& config,
                                       const Matrix& encoder_output, const SourceInput& source)
    : params_(params),
      config_(config),
      encoder_output_(encoder_output),
      source_(source),
      vocab_size_(static_cast<int>(params.embedding.rows())) {
  for (const auto& layer : params_.decoder) {
    Matrix k = encoder_output_ * layer.cross_attention.wk;
    k.rowwise() += layer.cross_attention.bk.row(0);
    Matrix v = encoder_output_ * layer.cross_attention.wv;
    v.rowwise() += layer.cross_attention.bv.row(0);
    cross_keys_.push_back(std::move(k));
    cross_values_.push_back(std::move(v));
  }
}

IncrementalDecoder::State IncrementalDecoder::initial_state() const {
  State s;
  const auto d = static_cast<Eigen::Index>(config_.hidden_dim);
  s.keys.assign(params_.decoder.size(), Matrix(0, d));
  s.values.assign(params_.decoder.size(), Matrix(0, d));
  return s;
}

std::vector<double> IncrementalDecoder::step(State& state, int token) const {
  check_length(state.length + 1, config_, "target");
  const auto pos = static_cast<Eigen::Index>(state.length);
  Matrix x = params_.embedding.row(model_input_id(token, vocab_size_)) + params_.positions.row(pos);
  for (size_t l = 0; l < params_.decoder.size(); ++l) {
    const auto& w = params_.decoder[l];
    Matrix a = nn::layer_norm(x, w.norm1, nullptr);
    Eigen::RowVectorXd q = a * w.self_attention.wq + w.self_attention.bq;
    Eigen::RowVectorXd k = a * w.self_attention.wk + w.self_attention.bk;
    Eigen::RowVectorXd v = a * w.self_attention.wv + w.self_attention.bv;
    Matrix& keys = state.keys[l];
    Matrix& values = state.values[l];
    keys.conservativeResize(keys.rows() + 1, Eigen::NoChange);
    keys.bottomRows(1) = k;
    values.conservativeResize(values.rows() + 1, Eigen::NoChange);
    values.bottomRows(1) = v;
    x += nn::attend_row(q, keys, values, config_.heads) * w.self_attention.wo + w.self_attention.bo;
    Matrix b = nn::layer_norm(x, w.norm2, nullptr);
    Eigen::RowVectorXd cq = b * w.cross_attention.wq + w.cross_attention.bq;
    x += nn::attend_row(cq, cross_keys_[l], cross_values_[l], config_.heads) * w.cross_attention.wo +
         w.cross_attention.bo;
    Matrix f = nn::layer_norm(x, w.norm3, nullptr);
    x += nn::feed_forward(f, w.feed_forward, nullptr);
  }
  ++state.length;
  Matrix h = nn::layer_norm(x, params_.decoder_norm, nullptr);
  OutputHead o = output_head(h, encoder_output_, params_, config_);
  return distribution_row(o, 0, source_, vocab_size_, config_);
}

double loss_and_gradients(const ModelParameters& p, const ModelConfig& c, const TrainingExample& ex,
                          ModelParameters* grads, DropoutContext* dc) {
  const SourceInput& src = ex.source;
  const int vocab = static_cast<int>(p.embedding.rows());
  if (src.ids.empty()) throw ValidationError("empty source");
  if (ex.target.empty()) throw ValidationError("empty target");
  const auto n = static_cast<Eigen::Index>(src.ids.size());
  const auto T = static_cast<Eigen::Index>(ex.target.size());
  check_length(T, c, "target");

  // Encoder.
  const std::vector<Marker>* syn = src.syntactic ? &*src.syntactic : nullptr;
  nn::DropoutMask enc_drop;
  Matrix x = nn::dropout(embed_input(p, c, src.ids, src.lexical, syn), dc, &enc_drop);
  std::vector<nn::EncoderLayerCache> enc_cache(p.encoder.size());
  for (size_t l = 0; l < p.encoder.size(); ++l) x = nn::encoder_layer(x, p.encoder[l], c.heads, dc, &enc_cache[l]);
  nn::LayerNormCache enc_norm_cache;
  Matrix enc = nn::layer_norm(x, p.encoder_norm, &enc_norm_cache);

  // Decoder, teacher forced.
  std::vector<int> inputs{Vocabulary::kBos};
  for (Eigen::Index t = 0; t + 1 < T; ++t) inputs.push_back(ex.target[static_cast<size_t>(t)]);
  nn::DropoutMask dec_drop;
  Matrix y = nn::dropout(decoder_embed(p, inputs), dc, &dec_drop);
  std::vector<nn::DecoderLayerCache> dec_cache(p.decoder.size());
  for (size_t l = 0; l < p.decoder.size(); ++l) y = nn::decoder_layer(y, enc, p.decoder[l], c.heads, dc, &dec_cache[l]);
  nn::LayerNormCache dec_norm_cache;
  Matrix h = nn::layer_norm(y, p.decoder_norm, &dec_norm_cache);

  OutputHead o = output_head(h, enc, p, c);

  double loss = 0.0;
  Matrix dlogits = Matrix::Zero(T, vocab);
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(T);
  Matrix dattn = c.copy_enabled ? Matrix::Zero(T, n) : Matrix();
  for (Eigen::Index t = 0; t < T; ++t) {
    int target = ex.target[static_cast<size_t>(t)];
    if (!c.copy_enabled && target >= vocab) target = Vocabulary::kUnk;
    const double g = o.gate(t);
    const double gen = target < vocab ? o.pv(t, target) : 0.0;
    double copy_mass = 0.0;
    if (c.copy_enabled)
      for (Eigen::Index j = 0; j < n; ++j)
        if (src.extended_ids[static_cast<size_t>(j)] == target) copy_mass += o.attn(t, j);
    const double prob = g * gen + (1.0 - g) * copy_mass;
    if (!(prob > 0.0)) throw NumericError("target probability underflow at step " + std::to_string(t));
    loss -= std::log(prob);
    if (!grads) continue;
    const double dp = -1.0 / prob;
    if (target < vocab) {
      const double dgen = dp * g;
      dlogits.row(t) = -dgen * gen * o.pv.row(t);
      dlogits(t, target) += dgen * gen;
    }
    if (c.copy_enabled) {
      dz(t) = dp * (gen - copy_mass) * g * (1.0 - g);
      for (Eigen::Index j = 0; j < n; ++j)
        if (src.extended_ids[static_cast<size_t>(j)] == target) dattn(t, j) += dp * (1.0 - g);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  if (!grads) return loss;

  ModelParameters& g = *grads;
  Matrix dh = dlogits * p.embedding;
  g.embedding += dlogits.transpose() * h;
  g.output_bias += dlogits.colwise().sum();
  Matrix denc = Matrix::Zero(n, c.hidden_dim);
  if (c.copy_enabled) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.hidden_dim));
    g.copy.gate_hidden += h.transpose() * dz;
    g.copy.gate_context += o.context.transpose() * dz;
    g.copy.gate_bias(0, 0) += dz.sum();
    dh += dz * p.copy.gate_hidden.transpose();
    Matrix dctx = dz * p.copy.gate_context.transpose();
    dattn += dctx * enc.transpose();
    denc += o.attn.transpose() * dctx;
    Eigen::VectorXd row_dot = dattn.cwiseProduct(o.attn).rowwise().sum();
    Matrix ds = o.attn.cwiseProduct(dattn.colwise() - row_dot) * scale;
    Matrix dq = ds * enc;
    denc += ds.transpose() * o.query;
    g.copy.query += h.transpose() * dq;
    dh += dq * p.copy.query.transpose();
  }

  Matrix dy = nn::layer_norm_backward(dh, p.decoder_norm, dec_norm_cache, g.decoder_norm);
  for (size_t l = p.decoder.size(); l-- > 0;)
    dy = nn::decoder_layer_backward(dy, p.decoder[l], c.heads, dec_cache[l], g.decoder[l], &denc);
  dy = nn::dropout_backward(dy, dec_drop);
  for (Eigen::Index t = 0; t < T; ++t) {
    g.embedding.row(model_input_id(inputs[static_cast<size_t>(t)], vocab)) += dy.row(t);
    g.positions.row(t) += dy.row(t);
  }

  Matrix dx = nn::layer_norm_backward(denc, p.encoder_norm, enc_norm_cache, g.encoder_norm);
  for (size_t l = p.encoder.size(); l-- > 0;)
    dx = nn::encoder_layer_backward(dx, p.encoder[l], c.heads, enc_cache[l], g.encoder[l]);
  dx = nn::dropout_backward(dx, enc_drop);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(i);
    g.embedding.row(src.ids[k]) += dx.row(i);
    g.positions.row(i) += dx.row(i);
    g.indicators.row(static_cast<int>(src.lexical[k])) += dx.row(i);
    if (syn) g.indicators.row(3 + static_cast<int>((*syn)[k])) += dx.row(i);
  }
  return loss;
}

// Checkpoint layout (little-endian):
//   "CTSPCKPT" u32 version
//   u32 n, n x (str key, f64 value)        config
//   u32 n, n x (str surface, u8 kind)      vocabulary
//   u32 n, n x (str name, u32 rows, u32 cols, f64[rows*cols])
namespace {

constexpr char kMagic[8] = {'C', 'T', 'S', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated checkpoint");
  return v;
}

std::string get_string(std::istream& in) {
  const auto n = get<uint32_t>(in);
  if (n > (1u << 20)) throw FormatError("corrupt checkpoint string");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("truncated checkpoint");
  return s;
}

std::vector<std::pair<std::string, double>> config_fields(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},
          {"feedforward_dim", c.feedforward_dim},
          {"vocab_cap", c.vocab_cap},
          {"max_positions", c.max_positions},
          {"copy_enabled", c.copy_enabled ? 1.0 : 0.0},
          {"dropout", c.dropout}};
}

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<uint32_t>(out, kVersion);
  auto fields = config_fields(m.config);
  put<uint32_t>(out, static_cast<uint32_t>(fields.size()));
  for (const auto& [k, v] : fields) {
    put_string(out, k);
    put<double>(out, v);
  }
  put<uint32_t>(out, static_cast<uint32_t>(m.vocab.size()));
  for (int i = 0; i < m.vocab.size(); ++i) {
    put_string(out, m.vocab.surface_of(i));
    put<uint8_t>(out, static_cast<uint8_t>(m.vocab.kind(i)));
  }
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  m.params.for_each([&](const std::string& name, const Matrix& t) { tensors.emplace_back(name, &t); });
  put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put<uint32_t>(out, static_cast<uint32_t>(t->rows()));
    put<uint32_t>(out, static_cast<uint32_t>(t->cols()));
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint: " + path.string());
  const auto version = get<uint32_t>(in);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, double> cfg;
  for (auto n = get<uint32_t>(in); n > 0; --n) {
    std::string k = get_string(in);
    cfg[k] = get<double>(in);
  }
  auto field = [&](const char* k) {
    auto it = cfg.find(k);
    if (it == cfg.end()) throw FormatError(std::string("checkpoint config lacks ") + k);
    return it->second;
  };
  Model m;
  m.config.layers = static_cast<int>(field("layers"));
  m.config.hidden_dim = static_cast<int>(field("hidden_dim"));
  m.config.heads = static_cast<int>(field("heads"));
  m.config.feedforward_dim = static_cast<int>(field("feedforward_dim"));
  m.config.vocab_cap = static_cast<int>(field("vocab_cap"));
  m.config.max_positions = static_cast<int>(field("max_positions"));
  m.config.copy_enabled = field("copy_enabled") != 0.0;
  m.config.dropout = field("dropout");
  m.config.validate();

  std::vector<std::string> words, symbols;
  std::vector<std::string> surfaces;
  std::vector<SymbolKind> kinds;
  for (auto n = get<uint32_t>(in); n > 0; --n) {
    surfaces.push_back(get_string(in));
    kinds.push_back(static_cast<SymbolKind>(get<uint8_t>(in)));
  }
  if (surfaces.size() < static_cast<size_t>(Vocabulary::kReservedCount))
    throw FormatError("checkpoint vocabulary too small");
  for (size_t i = Vocabulary::kReservedCount; i < surfaces.size(); ++i) {
    if (kinds[i] == SymbolKind::kWord || kinds[i] == SymbolKind::kBoth) words.push_back(surfaces[i]);
    if (kinds[i] == SymbolKind::kTemplate) symbols.push_back(surfaces[i]);
  }
  m.vocab = Vocabulary::from_lists(words, symbols);
  for (int i = 0; i < m.vocab.size(); ++i)
    if (i >= static_cast<int>(surfaces.size()) || m.vocab.surface_of(i) != surfaces[static_cast<size_t>(i)])
      throw FormatError("checkpoint vocabulary order mismatch");

  m.params = ModelParameters::zeros(m.config, m.vocab.size());
  std::map<std::string, Matrix*> slots;
  m.params.for_each([&](const std::string& name, Matrix& t) { slots[name] = &t; });
  const auto count = get<uint32_t>(in);
  if (count != slots.size()) throw FormatError("checkpoint tensor count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    const auto rows = get<uint32_t>(in);
    const auto cols = get<uint32_t>(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("unknown checkpoint tensor " + name);
    Matrix& t = *it->second;
    if (t.rows() != rows || t.cols() != cols) throw FormatError("shape mismatch for tensor " + name);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw FormatError("truncated checkpoint tensor " + name);
  }
  return m;
}

}  // namespace ctrlsimp::model
