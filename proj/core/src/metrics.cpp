#include "ctrlsimp/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include "json.hpp"
#include <set>
#include <sstream>

#include "ctrlsimp/errors.hpp"

namespace ctrlsimp::metrics {

namespace {

using Counts = std::map<std::string, long>;

Counts ngrams(const Tokens& toks, int n) {
  Counts c;
  if (static_cast<int>(toks.size()) < n) return c;
  for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) key += ' ' + toks[i + static_cast<size_t>(k)];
    ++c[key];
  }
  return c;
}

long count_in(const Counts& c, const std::string& k) {
  auto it = c.find(k);
  return it == c.end() ? 0 : it->second;
}

Counts scaled(const Counts& c, long factor) {
  Counts out;
  for (const auto& [k, v] : c) out[k] = v * factor;
  return out;
}

Counts intersect(const Counts& a, const Counts& b) {
  Counts out;
  for (const auto& [k, v] : a) {
    const long m = std::min(v, count_in(b, k));
    if (m > 0) out[k] = m;
  }
  return out;
}

Counts subtract(const Counts& a, const Counts& b) {
  Counts out;
  for (const auto& [k, v] : a) {
    const long d = v - count_in(b, k);
    if (d > 0) out[k] = d;
  }
  return out;
}

// Empty candidate set: 1 when the target set is empty too, else 0.
double ratio_or_convention(double numerator, size_t denominator_size, size_t other_size) {
  if (denominator_size == 0) return other_size == 0 ? 1.0 : 0.0;
  return numerator / static_cast<double>(denominator_size);
}

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

Tokens tokens_of(const Sentence& s) { return s.surfaces(); }

}  // namespace

double bleu(std::span<const Tokens> outputs, std::span<const std::vector<Tokens>> references, int max_n) {
  if (outputs.empty()) throw ValidationError("BLEU needs at least one output");
  if (outputs.size() != references.size()) throw ValidationError("BLEU outputs and reference sets differ in size");
  if (max_n < 1) throw ValidationError("max_n must be >= 1");
  std::vector<long> correct(static_cast<size_t>(max_n), 0), total(static_cast<size_t>(max_n), 0);
  long cand_len = 0, ref_len = 0;
  for (size_t i = 0; i < outputs.size(); ++i) {
    const Tokens& out = outputs[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ValidationError("instance " + std::to_string(i) + " has no reference");
    const long c = static_cast<long>(out.size());
    cand_len += c;
    long best = static_cast<long>(refs[0].size());
    for (const auto& r : refs) {
      const long len = static_cast<long>(r.size());
      const long diff = std::labs(len - c), best_diff = std::labs(best - c);
      if (diff < best_diff || (diff == best_diff && len < best)) best = len;
    }
    ref_len += best;
    for (int n = 1; n <= max_n; ++n) {
      Counts cand = ngrams(out, n);
      Counts max_ref;
      for (const auto& r : refs)
        for (const auto& [k, v] : ngrams(r, n)) max_ref[k] = std::max(max_ref[k], v);
      for (const auto& [k, v] : cand) {
        total[static_cast<size_t>(n - 1)] += v;
        correct[static_cast<size_t>(n - 1)] += std::min(v, count_in(max_ref, k));
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    if (total[static_cast<size_t>(n)] == 0) continue;
    if (correct[static_cast<size_t>(n)] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(correct[static_cast<size_t>(n)]) /
                        static_cast<double>(total[static_cast<size_t>(n)]));
    ++orders;
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                                       : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

double bleu(std::span<const Sentence> outputs, std::span<const std::vector<Sentence>> references, int max_n) {
  std::vector<Tokens> outs;
  std::vector<std::vector<Tokens>> refs;
  for (const auto& o : outputs) outs.push_back(tokens_of(o));
  for (const auto& rs : references) {
    auto& v = refs.emplace_back();
    for (const auto& r : rs) v.push_back(tokens_of(r));
  }
  return bleu(std::span<const Tokens>(outs), std::span<const std::vector<Tokens>>(refs), max_n);
}

SariComponents sari_sentence(const Tokens& source, const Tokens& output, std::span<const Tokens> references) {
  if (references.empty()) throw ValidationError("SARI needs at least one reference");
  const long numref = static_cast<long>(references.size());
  SariComponents sum;
  for (int n = 1; n <= kMaxOrder; ++n) {
    Counts ref_all;
    for (const auto& r : references)
      for (const auto& [k, v] : ngrams(r, n)) ref_all[k] += v;
    const Counts src = ngrams(source, n);
    const Counts out = ngrams(output, n);
    const Counts src_rep = scaled(src, numref);
    const Counts out_rep = scaled(out, numref);

    const Counts keep = intersect(src_rep, out_rep);
    const Counts keep_good = intersect(keep, ref_all);
    const Counts keep_all = intersect(src_rep, ref_all);
    double kp = 0.0, kr = 0.0;
    for (const auto& [k, v] : keep) {
      const double good = static_cast<double>(count_in(keep_good, k));
      kp += good / static_cast<double>(v);
      const long all = count_in(keep_all, k);
      if (all > 0) kr += good / static_cast<double>(all);
    }
    sum.keep += f1(ratio_or_convention(kp, keep.size(), keep_all.size()),
                   ratio_or_convention(kr, keep_all.size(), keep.size()));

    const Counts del = subtract(src_rep, out_rep);
    const Counts del_good = subtract(del, ref_all);
    const Counts del_all = subtract(src_rep, ref_all);
    double dp = 0.0;
    for (const auto& [k, v] : del) dp += static_cast<double>(count_in(del_good, k)) / static_cast<double>(v);
    sum.del += ratio_or_convention(dp, del.size(), del_all.size());

    std::set<std::string> add, add_all;
    for (const auto& [k, v] : out)
      if (!src.count(k)) add.insert(k);
    for (const auto& [k, v] : ref_all)
      if (!src.count(k)) add_all.insert(k);
    double good = 0.0;
    for (const auto& k : add) good += ref_all.count(k) ? 1.0 : 0.0;
    sum.add += f1(ratio_or_convention(good, add.size(), add_all.size()),
                  ratio_or_convention(good, add_all.size(), add.size()));
  }
  sum.add /= kMaxOrder;
  sum.keep /= kMaxOrder;
  sum.del /= kMaxOrder;
  return sum;
}

SariComponents sari_components(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw ValidationError("SARI needs at least one instance");
  SariComponents total;
  for (const auto& inst : instances) {
    std::vector<Tokens> refs;
    for (const auto& r : inst.references) refs.push_back(tokens_of(r));
    SariComponents s = sari_sentence(tokens_of(inst.source), tokens_of(inst.output), refs);
    total.add += s.add;
    total.keep += s.keep;
    total.del += s.del;
  }
  const double n = static_cast<double>(instances.size());
  total.add /= n;
  total.keep /= n;
  total.del /= n;
  return total;
}

double sari(std::span<const EvalInstance> instances) { return sari_components(instances).score(); }

int syllables(std::string_view word) {
  std::string w;
  for (char ch : word)
    if (std::isalpha(static_cast<unsigned char>(ch))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
  int groups = 0;
  bool in_group = false;
  size_t last_start = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    if (vowel(w[i])) {
      if (!in_group) {
        ++groups;
        last_start = i;
      }
      in_group = true;
    } else {
      in_group = false;
    }
  }
  // Trailing silent 'e': the last group is a lone final 'e'.
  if (groups > 1 && w.back() == 'e' && last_start == w.size() - 1) --groups;
  return std::max(groups, 1);
}

double fkgl(std::string_view text) {
  long sentences = 0, words = 0, syl = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    bool any = false;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
      const bool wordlike =
          std::any_of(tok.begin(), tok.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
      if (!wordlike) continue;
      any = true;
      ++words;
      syl += syllables(tok);
    }
    if (any) ++sentences;
    start = end + 1;
  }
  if (words == 0) throw ValidationError("FKGL needs at least one word");
  return 0.39 * static_cast<double>(words) / static_cast<double>(sentences) +
         11.8 * static_cast<double>(syl) / static_cast<double>(words) - 15.59;
}

double fkgl(std::span<const Sentence> sentences) {
  std::string text;
  for (const auto& s : sentences) text += s.text() + '\n';
  return fkgl(text);
}

double self_bleu(std::span<const Sentence> outputs, std::span<const Sentence> sources) {
  if (outputs.size() != sources.size()) throw ValidationError("outputs and sources differ in size");
  std::vector<std::vector<Sentence>> refs;
  for (const auto& s : sources) refs.push_back({s});
  return bleu(outputs, std::span<const std::vector<Sentence>>(refs));
}

double copy_rate(std::span<const Sentence> outputs, std::span<const Sentence> sources) {
  if (outputs.empty()) throw ValidationError("copy rate needs at least one output");
  if (outputs.size() != sources.size()) throw ValidationError("outputs and sources differ in size");
  size_t same = 0;
  for (size_t i = 0; i < outputs.size(); ++i) same += outputs[i].surfaces() == sources[i].surfaces() ? 1 : 0;
  return 100.0 * static_cast<double>(same) / static_cast<double>(outputs.size());
}

MetricReport evaluate_all(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw ValidationError("no instances to evaluate");
  std::vector<Sentence> outputs, sources;
  std::vector<std::vector<Sentence>> refs;
  for (const auto& inst : instances) {
    if (inst.references.empty()) throw ValidationError("instance without references");
    outputs.push_back(inst.output);
    sources.push_back(inst.source);
    refs.push_back(inst.references);
  }
  MetricReport r;
  SariComponents s = sari_components(instances);
  r.sari_add = 100.0 * s.add;
  r.sari_keep = 100.0 * s.keep;
  r.sari_delete = 100.0 * s.del;
  r.sari = s.score();
  r.bleu = bleu(outputs, std::span<const std::vector<Sentence>>(refs));
  r.fkgl = fkgl(outputs);
  r.s_bleu = self_bleu(outputs, sources);
  r.copy_rate = copy_rate(outputs, sources);
  r.instances = instances.size();
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["sari"] = std::stod(fixed(sari));
  j["sari_add"] = std::stod(fixed(sari_add));
  j["sari_keep"] = std::stod(fixed(sari_keep));
  j["sari_delete"] = std::stod(fixed(sari_delete));
  j["bleu"] = std::stod(fixed(bleu));
  j["fkgl"] = std::stod(fixed(fkgl));
  j["s_bleu"] = std::stod(fixed(s_bleu));
  j["copy_rate"] = std::stod(fixed(copy_rate));
  j["instances"] = instances;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_table() const {
  const std::pair<const char*, double> rows[] = {
      {"SARI", sari}, {"  add", sari_add}, {"  keep", sari_keep}, {"  delete", sari_delete},
      {"BLEU", bleu}, {"FKGL", fkgl},      {"S-BLEU", s_bleu},    {"Copy", copy_rate},
  };
  std::string out;
  char buf[96];
  for (const auto& [name, v] : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %10s\n", name, fixed(v).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-10s %10zu\n", "instances", instances);
  return out + buf;
}

}  // namespace ctrlsimp::metrics
