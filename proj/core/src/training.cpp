#include "ctrlsimp/training.hpp"

#include <cmath>
#include <thread>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/metrics.hpp"
#include "ctrlsimp/syntax.hpp"
#include "json.hpp"

namespace ctrlsimp::model {

void TrainSettings::validate() const {
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
  if (indifferent_fraction < 0.0 || indifferent_fraction > 1.0)
    throw ValidationError("indifferent_fraction must be in [0, 1]");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  validation_decode.validate();
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  auto splitmix = [](uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

std::string TrainingLog::to_json() const {
  nlohmann::ordered_json j;
  j["best_epoch"] = best_epoch;
  j["best_validation_sari"] = best_sari;
  j["stop_reason"] = stop_reason;
  auto& arr = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["steps"] = e.steps;
    row["loss"] = e.loss;
    row["validation_sari"] = e.validation_sari ? nlohmann::ordered_json(*e.validation_sari) : nullptr;
    arr.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

TrainingExample example_for(const ParallelPair& pair, const Vocabulary& vocab, double fraction, uint64_t seed) {
  MarkedSentence marked = markers::mark_training_pair(pair, fraction, seed);
  std::optional<syntax::Template> tt;
  if (pair.target_parse) tt = syntax::template_of(*pair.target_parse);
  return make_training_example(marked, tt, pair.target, vocab);
}

double validation_sari(const Model& model, const std::vector<ParallelPair>& pairs, const TrainSettings& settings) {
  std::vector<metrics::EvalInstance> instances;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    MarkedSentence marked = markers::mark_training_pair(p, settings.indifferent_fraction, mix_seed(settings.seed, 0x5a17, i));
    Sentence out = p.source;
    try {
      out = decoder::beam_search(model, marked, ConstraintSet{}, settings.validation_decode).output;
    } catch (const ConstraintInfeasible&) {
    }
    instances.push_back({p.source, out, {p.target}});
  }
  return metrics::sari(instances);
}

namespace {

void shuffle(std::vector<size_t>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

void add_into(ModelParameters& dst, ModelParameters& src) {
  std::vector<Matrix*> from;
  src.for_each([&](const std::string&, Matrix& t) { from.push_back(&t); });
  size_t j = 0;
  dst.for_each([&](const std::string&, Matrix& t) { t += *from[j++]; });
}

struct Adam {
  ModelParameters m, v;
  long t = 0;
};

}  // namespace

Model train_model(const std::vector<ParallelPair>& train, const std::vector<ParallelPair>& validation,
                  const Vocabulary& vocab, const ModelConfig& config, const TrainSettings& s, TrainingLog* log_out,
                  const EpochCallback& on_epoch) {
  if (train.empty()) throw ValidationError("training set is empty");
  if (validation.empty()) throw ValidationError("validation set is empty");
  config.validate();
  s.validate();
  if (vocab.size() > config.vocab_cap) throw ValidationError("vocabulary exceeds vocab_cap");

  Model model{config, vocab, ModelParameters::initialize(config, vocab.size(), mix_seed(s.seed, 0x1417))};
  ModelParameters best = model.params;
  Adam adam{ModelParameters::zeros(config, vocab.size()), ModelParameters::zeros(config, vocab.size())};
  TrainingLog log;
  double best_sari = -1.0;
  int bad_evals = 0;
  long step = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int workers = std::max(1, std::min(s.threads, s.batch_size));
  std::vector<ModelParameters> worker_grads;
  for (int w = 0; w < workers; ++w) worker_grads.push_back(ModelParameters::zeros(config, vocab.size()));
  ModelParameters grad = ModelParameters::zeros(config, vocab.size());

  for (int epoch = 1; epoch <= s.max_epochs; ++epoch) {
    std::mt19937_64 order_rng(mix_seed(s.seed, 0x0e0c, static_cast<uint64_t>(epoch)));
    shuffle(order, order_rng);
    std::vector<TrainingExample> examples(train.size());
    for (size_t i = 0; i < train.size(); ++i)
      examples[i] = example_for(train[i], vocab, s.indifferent_fraction,
                                mix_seed(s.seed, static_cast<uint64_t>(epoch), i));

    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(s.batch_size)) {
      ++step;
      const size_t end = std::min(order.size(), start + static_cast<size_t>(s.batch_size));
      const size_t count = end - start;
      std::vector<double> losses(count, 0.0);
      std::vector<std::string> failures(count);
      grad.set_zero();
      // Worker buffers are summed in example order.
      auto run = [&](size_t k, ModelParameters& g) {
        const size_t idx = order[start + k];
        std::mt19937_64 rng(mix_seed(s.seed, static_cast<uint64_t>(step), idx));
        DropoutContext dc{config.dropout, &rng};
        try {
          losses[k] = loss_and_gradients(model.params, config, examples[idx], &g, &dc);
        } catch (const Error& e) {
          failures[k] = e.what();
        }
      };
      if (workers == 1) {
        for (size_t k = 0; k < count; ++k) run(k, grad);
      } else {
        for (size_t base = 0; base < count; base += static_cast<size_t>(workers)) {
          const size_t n = std::min(count - base, static_cast<size_t>(workers));
          std::vector<std::thread> pool;
          for (size_t w = 0; w < n; ++w) {
            worker_grads[w].set_zero();
            pool.emplace_back(run, base + w, std::ref(worker_grads[w]));
          }
          for (auto& t : pool) t.join();
          for (size_t w = 0; w < n; ++w) add_into(grad, worker_grads[w]);
        }
      }
      long tokens = 0;
      double batch_loss = 0.0;
      for (size_t k = 0; k < count; ++k) {
        if (!failures[k].empty()) throw TrainingError(failures[k], epoch, step);
        batch_loss += losses[k];
        tokens += static_cast<long>(examples[order[start + k]].target.size());
      }
      if (!std::isfinite(batch_loss)) throw TrainingError("non-finite loss", epoch, step);
      epoch_loss += batch_loss;
      epoch_tokens += tokens;

      const double inv = 1.0 / static_cast<double>(tokens);
      double sq = 0.0;
      grad.for_each([&](const std::string&, Matrix& t) {
        t *= inv;
        sq += t.squaredNorm();
      });
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient", epoch, step);
      const double clip = (s.clip_norm > 0.0 && norm > s.clip_norm) ? s.clip_norm / norm : 1.0;

      ++adam.t;
      const double warm = s.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step) / s.warmup_steps) : 1.0;
      const double lr = s.learning_rate * warm;
      const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(adam.t));
      std::vector<Matrix*> gs, ms, vs;
      grad.for_each([&](const std::string&, Matrix& t) { gs.push_back(&t); });
      adam.m.for_each([&](const std::string&, Matrix& t) { ms.push_back(&t); });
      adam.v.for_each([&](const std::string&, Matrix& t) { vs.push_back(&t); });
      size_t j = 0;
      model.params.for_each([&](const std::string&, Matrix& p) {
        Matrix g = *gs[j] * clip;
        Matrix& m = *ms[j];
        Matrix& v = *vs[j];
        m = s.beta1 * m + (1.0 - s.beta1) * g;
        v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
        ++j;
      });
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.loss = epoch_loss / static_cast<double>(epoch_tokens);
    const bool reached_target = s.target_loss > 0.0 && rec.loss < s.target_loss;
    const bool last = epoch == s.max_epochs;
    bool stop = false;
    if (epoch % s.eval_every == 0 || reached_target || last) {
      const double sari = validation_sari(model, validation, s);
      rec.validation_sari = sari;
      if (sari > best_sari) {
        best_sari = sari;
        best = model.params;
        log.best_epoch = epoch;
        bad_evals = 0;
      } else if (++bad_evals >= s.patience) {
        stop = true;
        log.stop_reason = "patience";
      }
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!stop && reached_target) {
      stop = true;
      log.stop_reason = "target_loss";
    }
    if (stop) break;
    if (last) log.stop_reason = "max_epochs";
  }
  log.best_sari = best_sari;
  model.params = std::move(best);
  if (log_out) *log_out = std::move(log);
  return model;
}

}  // namespace ctrlsimp::model
