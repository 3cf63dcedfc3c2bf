#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "ctrlsimp/errors.hpp"

namespace ctrlsimp::app {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Entry {
  std::string value;
  std::string where;
};

template <typename T>
T number(const Entry& e, const std::string& key) {
  T out{};
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ValidationError(e.where + ": '" + key + "' expects a number, got '" + e.value + "'");
  return out;
}

bool boolean(const Entry& e, const std::string& key) {
  if (e.value == "true" || e.value == "1" || e.value == "yes" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no" || e.value == "off") return false;
  throw ValidationError(e.where + ": '" + key + "' expects true or false, got '" + e.value + "'");
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const std::string& name) {
  std::map<std::string, Entry> entries;
  std::istringstream in{std::string(text)};
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    if (auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ValidationError(where + ": unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (section != "model" && section != "train" && section != "decode")
        throw ValidationError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    if (section.empty()) throw ValidationError(where + ": key outside a section");
    std::string key = section + "." + trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!entries.emplace(key, Entry{value, where}).second) throw ValidationError(where + ": duplicate key " + key);
  }

  RunConfig rc;
  if (auto it = entries.find("model.preset"); it != entries.end()) {
    if (it->second.value == "desk") rc.model = model::ModelConfig::desk();
    else if (it->second.value == "paper") rc.model = model::ModelConfig::paper();
    else throw ValidationError(it->second.where + ": unknown preset '" + it->second.value + "'");
    entries.erase(it);
  }

  auto& m = rc.model;
  auto& tr = rc.train;
  auto& d = rc.decode;
  using Setter = std::function<void(const Entry&, const std::string&)>;
  auto i32 = [](int& f) { return Setter([&f](const Entry& e, const std::string& k) { f = number<int>(e, k); }); };
  auto f64 = [](double& f) { return Setter([&f](const Entry& e, const std::string& k) { f = number<double>(e, k); }); };
  auto flag = [](bool& f) { return Setter([&f](const Entry& e, const std::string& k) { f = boolean(e, k); }); };
  const std::map<std::string, Setter> setters = {
      {"model.layers", i32(m.layers)},
      {"model.hidden_dim", i32(m.hidden_dim)},
      {"model.heads", i32(m.heads)},
      {"model.feedforward_dim", i32(m.feedforward_dim)},
      {"model.vocab_cap", i32(m.vocab_cap)},
      {"model.max_positions", i32(m.max_positions)},
      {"model.copy", flag(m.copy_enabled)},
      {"model.dropout", f64(m.dropout)},
      {"train.epochs", i32(tr.max_epochs)},
      {"train.batch_size", i32(tr.batch_size)},
      {"train.learning_rate", f64(tr.learning_rate)},
      {"train.beta1", f64(tr.beta1)},
      {"train.beta2", f64(tr.beta2)},
      {"train.epsilon", f64(tr.epsilon)},
      {"train.warmup_steps", i32(tr.warmup_steps)},
      {"train.clip_norm", f64(tr.clip_norm)},
      {"train.patience", i32(tr.patience)},
      {"train.eval_every", i32(tr.eval_every)},
      {"train.target_loss", f64(tr.target_loss)},
      {"train.indifferent_fraction", f64(tr.indifferent_fraction)},
      {"train.threads", i32(tr.threads)},
      {"train.seed", Setter([&tr](const Entry& e, const std::string& k) { tr.seed = number<uint64_t>(e, k); })},
      {"decode.beam_size", i32(d.beam_size)},
      {"decode.max_template_len", i32(d.max_template_len)},
      {"decode.max_token_len", i32(d.max_token_len)},
      {"decode.length_penalty", f64(d.length_penalty)},
      {"decode.nbest", i32(d.nbest)},
      {"decode.template_grammar", flag(d.template_grammar)},
  };
  for (const auto& [key, entry] : entries) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError(entry.where + ": unknown key " + key);
    it->second(entry, key);
  }
  tr.validation_decode = d;
  m.validate();
  tr.validate();
  d.validate();
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace ctrlsimp::app
