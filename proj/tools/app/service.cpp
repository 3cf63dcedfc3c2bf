#include "service.hpp"

#include <chrono>
#include <set>

#include "ctrlsimp/errors.hpp"
#include "ctrlsimp/metrics.hpp"
#include "httplib.h"
#include "json.hpp"

namespace ctrlsimp::service {

using json = nlohmann::ordered_json;

Session::Session(model::Model model, Inventories inventories, decoder::DecodeSettings decode)
    : model_(std::move(model)), inventories_(std::move(inventories)), decode_(decode) {
  decode_.validate();
  for (Profile p : {Profile::kWikiLarge, Profile::kNewsela})
    for (Level l : {Level::kSimple, Level::kXSimple})
      constraint_sets_[{p, l}] =
          markers::build_constraint_set(inventories_.complex_list, &inventories_.dictionary, inventories_.ranking, l,
                                        p, inventories_.synchronous, inventories_.scale);
}

const ConstraintSet& Session::constraints(Profile profile, Level level) const {
  return constraint_sets_.at({profile, level});
}

namespace {

const json& field(const json& j, const char* name) {
  static const json null_value;
  auto it = j.find(name);
  return it == j.end() ? null_value : *it;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ValidationError(std::string("'") + name + "' must be a string");
  return v.get<std::string>();
}

json parse_body(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw FormatError("request body is not valid JSON");
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

Sentence sentence_field(const json& v, const char* what) {
  if (v.is_string()) return Sentence::parse(v.get<std::string>());
  if (!v.is_array()) throw ValidationError(std::string(what) + " must be a string or a token array");
  std::vector<std::string> words;
  for (const auto& t : v) {
    if (!t.is_string()) throw ValidationError(std::string(what) + " tokens must be strings");
    words.push_back(t.get<std::string>());
  }
  std::string joined;
  for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
  Sentence s = Sentence::parse(joined);
  if (s.size() != words.size()) throw ValidationError(std::string(what) + " tokens must not contain spaces");
  return s;
}

json error_body(std::string_view type, const std::string& message, const std::vector<std::string>& blocking = {}) {
  json e;
  e["type"] = type;
  e["message"] = message;
  if (!blocking.empty()) e["blocking"] = blocking;
  json j;
  j["error"] = std::move(e);
  return j;
}

HttpResult reply(const json& j, int status = 200) { return {status, j.dump() + "\n"}; }

HttpResult simplify_route(const Session& session, std::string_view body) {
  return {200, handle_simplify(SimplifyRequest::from_json(body), session).to_json()};
}

HttpResult evaluate_route(std::string_view body) {
  json j = parse_body(body);
  const json& sources = field(j, "sources");
  const json& outputs = field(j, "outputs");
  const json& refs = field(j, "references");
  if (!sources.is_array() || !outputs.is_array() || !refs.is_array())
    throw ValidationError("'sources', 'outputs' and 'references' must be arrays");
  if (sources.empty()) throw ValidationError("'sources' is empty");
  if (outputs.size() != sources.size() || refs.size() != sources.size())
    throw ValidationError("'sources', 'outputs' and 'references' differ in length");
  std::vector<metrics::EvalInstance> instances;
  for (size_t i = 0; i < sources.size(); ++i) {
    metrics::EvalInstance inst{sentence_field(sources[i], "source"), sentence_field(outputs[i], "output"), {}};
    if (!refs[i].is_array() || refs[i].empty())
      throw ValidationError("references[" + std::to_string(i) + "] must be a non-empty array");
    for (const auto& r : refs[i]) inst.references.push_back(sentence_field(r, "reference"));
    instances.push_back(std::move(inst));
  }
  return {200, metrics::evaluate_all(instances).to_json()};
}

Profile profile_param(const Query& q) {
  auto it = q.find("profile");
  return it == q.end() ? Profile::kWikiLarge : parse_profile(it->second);
}

Level level_param(const Query& q) {
  auto it = q.find("level");
  return it == q.end() ? Level::kSimple : parse_level(it->second);
}

HttpResult lexicon_route(const Session& session, const Query& q) {
  std::string prefix;
  if (auto it = q.find("prefix"); it != q.end()) prefix = it->second;
  size_t limit = 50;
  if (auto it = q.find("limit"); it != q.end()) {
    try {
      limit = std::stoul(it->second);
    } catch (const std::exception&) {
      throw ValidationError("'limit' must be a non-negative integer");
    }
  }
  const Profile profile = profile_param(q);
  const Level level = level_param(q);
  const ConstraintSet& cs = session.constraints(profile, level);
  const auto stems = cs.banned_stems();
  const auto& inv = session.inventories();
  json words = json::array();
  for (size_t rank = 0; rank < inv.complex_list.size() && words.size() < limit; ++rank) {
    const auto& e = inv.complex_list.entries[rank];
    if (e.word.compare(0, prefix.size(), prefix) != 0) continue;
    json w;
    w["word"] = e.word;
    w["stem"] = e.stem;
    w["rank"] = rank + 1;
    w["ratio"] = e.ratio;
    w["banned"] = stems.count(e.stem) > 0;
    json subs = json::array();
    for (const auto& t : cs.substitutions.lookup_stem(e.stem)) subs.push_back(t.word);
    w["substitutes"] = std::move(subs);
    words.push_back(std::move(w));
  }
  json j;
  j["prefix"] = prefix;
  j["profile"] = profile_name(profile);
  j["level"] = level_name(level);
  j["words"] = std::move(words);
  return reply(j);
}

HttpResult rules_route(const Session& session, const Query& q) {
  const Profile profile = profile_param(q);
  const Level level = level_param(q);
  const ConstraintSet& cs = session.constraints(profile, level);
  const auto& inv = session.inventories();
  json ranking = json::array();
  for (const auto& e : inv.ranking.entries) {
    json r;
    r["rule"] = e.rule.to_list_string();
    r["ratio"] = e.ratio;
    r["banned"] = cs.banned_rules.count(e.rule) > 0;
    ranking.push_back(std::move(r));
  }
  json sync = json::array();
  for (const auto& s : cs.synchronous) {
    json r;
    r["complex"] = s.complex_side.to_list_string();
    r["simple"] = s.simple_side.to_list_string();
    sync.push_back(std::move(r));
  }
  json j;
  j["profile"] = profile_name(profile);
  j["level"] = level_name(level);
  j["inventory_size"] = inv.ranking.inventory_size;
  j["ranking"] = std::move(ranking);
  j["synchronous"] = std::move(sync);
  return reply(j);
}

HttpResult health_route(const Session& session) {
  const auto& m = session.model();
  json j;
  j["status"] = "ok";
  j["vocab_size"] = m.vocab.size();
  j["parameters"] = m.params.parameter_count();
  j["layers"] = m.config.layers;
  j["hidden_dim"] = m.config.hidden_dim;
  j["complex_words"] = session.inventories().complex_list.size();
  j["dictionary_entries"] = session.inventories().dictionary.size();
  j["ranked_rules"] = session.inventories().ranking.entries.size();
  return reply(j);
}

}  // namespace

SimplifyRequest SimplifyRequest::from_json(std::string_view body) {
  json j = parse_body(body);
  SimplifyRequest r;
  const json& tokens = field(j, "tokens");
  if (!tokens.is_array()) throw ValidationError("'tokens' must be an array of strings");
  if (tokens.empty()) throw ValidationError("'tokens' is empty");
  for (const auto& t : tokens) {
    if (!t.is_string()) throw ValidationError("'tokens' must be an array of strings");
    r.tokens.push_back(t.get<std::string>());
  }
  const json& m = field(j, "markers");
  if (!m.is_null()) {
    if (!m.is_array()) throw ValidationError("'markers' must be an array");
    if (m.size() != r.tokens.size())
      throw ValidationError("'markers' has " + std::to_string(m.size()) + " entries for " +
                            std::to_string(r.tokens.size()) + " tokens");
    for (const auto& v : m) {
      if (v.is_null()) {
        r.markers.emplace_back();
      } else if (v.is_string()) {
        r.markers.emplace_back(parse_marker(v.get<std::string>()));
      } else {
        throw ValidationError("marker entries must be strings or null");
      }
    }
  }
  if (!field(j, "profile").is_null()) r.profile = parse_profile(string_field(j, "profile"));
  if (!field(j, "level").is_null()) r.level = parse_level(string_field(j, "level"));
  const json& beam = field(j, "beam_size");
  if (!beam.is_null()) {
    if (!beam.is_number_integer()) throw ValidationError("'beam_size' must be an integer");
    r.beam_size = beam.get<int>();
  }
  if (!field(j, "conllu").is_null()) r.conllu = string_field(j, "conllu");
  return r;
}

std::string SimplifyResponse::to_json(bool with_latency) const {
  json j;
  j["output_tokens"] = output_tokens;
  j["template"] = template_text;
  json m = json::array();
  for (Marker mk : applied_markers) m.push_back(marker_name(mk));
  j["applied_markers"] = std::move(m);
  j["banned_words_hit"] = banned_words_hit;
  j["rules_banned_hit"] = rules_banned_hit;
  if (with_latency) j["latency_ms"] = latency_ms;
  return j.dump() + "\n";
}

SimplifyResponse handle_simplify(const SimplifyRequest& request, const Session& session) {
  const auto start = std::chrono::steady_clock::now();
  if (request.tokens.empty()) throw ValidationError("'tokens' is empty");
  std::string joined;
  for (const auto& t : request.tokens) {
    if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos)
      throw ValidationError("token '" + t + "' is empty or contains whitespace");
    joined += (joined.empty() ? "" : " ") + t;
  }
  const Sentence sentence = Sentence::parse(joined);
  std::optional<DependencyTree> parse;
  if (request.conllu) {
    auto trees = corpus::load_conllu(*request.conllu);
    if (trees.size() != 1) throw ValidationError("'conllu' must hold exactly one sentence");
    if (trees[0].surfaces() != sentence.surfaces()) throw ValidationError("'conllu' words differ from 'tokens'");
    parse = std::move(trees[0]);
  }
  SimplifyResponse resp =
      simplify_sentence(session, sentence, parse, request.markers, request.profile, request.level, request.beam_size);
  resp.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

SimplifyResponse simplify_sentence(const Session& session, const Sentence& sentence,
                                   const std::optional<DependencyTree>& parse,
                                   const markers::MarkerOverrides& overrides, Profile profile, Level level,
                                   std::optional<int> beam_size) {
  if (!overrides.empty() && overrides.size() != sentence.size())
    throw ValidationError("'markers' has " + std::to_string(overrides.size()) + " entries for " +
                          std::to_string(sentence.size()) + " tokens");
  decoder::DecodeSettings settings = session.decode();
  if (beam_size) {
    if (*beam_size < 1 || *beam_size > Session::kMaxBeam)
      throw ValidationError("'beam_size' must be in [1, " + std::to_string(Session::kMaxBeam) + "]");
    settings.beam_size = *beam_size;
    settings.nbest = std::min(settings.nbest, settings.beam_size);
  }

  const ConstraintSet cs = markers::apply_overrides(session.constraints(profile, level), sentence, overrides);
  const MarkedSentence marked =
      markers::mark_test_sentence(sentence, parse, cs, mode_for(profile), corpus::function_words(), overrides);
  const decoder::DecodeResult result = decoder::beam_search(session.model(), marked, cs, settings);

  const auto stems = cs.banned_stems();
  for (const auto& t : result.output.tokens)
    if (stems.count(t.stem)) throw Error("decoder emitted banned word '" + t.surface + "'");

  SimplifyResponse resp;
  resp.output_tokens = result.output.surfaces();
  resp.template_text = result.template_text;
  resp.applied_markers = marked.lexical;
  std::set<std::string> seen;
  for (const auto& t : sentence.tokens)
    if (stems.count(t.stem) && seen.insert(t.surface).second) resp.banned_words_hit.push_back(t.surface);
  for (const auto& [rule, mk] : marked.rule_markers)
    if (cs.banned_rules.count(rule)) resp.rules_banned_hit.push_back(rule.to_list_string());
  return resp;
}

HttpResult handle(const Session& session, std::string_view method, std::string_view path, const Query& query,
                  std::string_view body) {
  try {
    const bool get = method == "GET";
    const bool post = method == "POST";
    if (path == "/simplify") {
      if (post) return simplify_route(session, body);
    } else if (path == "/evaluate") {
      if (post) return evaluate_route(body);
    } else if (path == "/lexicon") {
      if (get) return lexicon_route(session, query);
    } else if (path == "/rules") {
      if (get) return rules_route(session, query);
    } else if (path == "/health") {
      if (get) return health_route(session);
    } else {
      return reply(error_body("not_found", "no route for " + std::string(path)), 404);
    }
    return reply(error_body("method_not_allowed", std::string(method) + " is not allowed on " + std::string(path)),
                 405);
  } catch (const ConstraintInfeasible& e) {
    return reply(error_body("constraint_infeasible", e.what(), e.blocking()), 422);
  } catch (const FormatError& e) {
    return reply(error_body("format", e.what()), 400);
  } catch (const TreeError& e) {
    return reply(error_body("tree", e.what()), 400);
  } catch (const ValidationError& e) {
    return reply(error_body("validation", e.what()), 400);
  } catch (const LengthError& e) {
    return reply(error_body("length", e.what()), 400);
  } catch (const std::exception& e) {
    return reply(error_body("internal", e.what()), 500);
  }
}

void install_routes(httplib::Server& server, const Session& session) {
  auto route = [&session](const httplib::Request& req, httplib::Response& res) {
    Query q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    HttpResult r = handle(session, req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  server.Get(".*", route);
  server.Post(".*", route);
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_payload_max_length(1 << 20);
}

void serve(const Session& session, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, session);
  if (!server.bind_to_port(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  server.listen_after_bind();
}

}  // namespace ctrlsimp::service
