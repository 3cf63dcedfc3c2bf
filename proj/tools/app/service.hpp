#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlsimp/decoder.hpp"
#include "ctrlsimp/lexicon.hpp"
#include "ctrlsimp/markers.hpp"
#include "ctrlsimp/model.hpp"
#include "ctrlsimp/syntax.hpp"

namespace httplib {
class Server;
}

namespace ctrlsimp::service {

struct Inventories {
  lexicon::ComplexWordList complex_list;
  lexicon::SimplificationDictionary dictionary;
  syntax::RuleRanking ranking;
  std::vector<syntax::SynchronousRule> synchronous;
  BudgetScale scale = BudgetScale::kAbsolute;
};

// Loaded once; every handler takes it by const reference.
class Session {
 public:
  Session(model::Model model, Inventories inventories, decoder::DecodeSettings decode = {});

  const model::Model& model() const { return model_; }
  const Inventories& inventories() const { return inventories_; }
  const decoder::DecodeSettings& decode() const { return decode_; }
  const ConstraintSet& constraints(Profile profile, Level level) const;

  static constexpr int kMaxBeam = 32;

 private:
  model::Model model_;
  Inventories inventories_;
  decoder::DecodeSettings decode_;
  std::map<std::pair<Profile, Level>, ConstraintSet> constraint_sets_;
};

struct SimplifyRequest {
  std::vector<std::string> tokens;
  markers::MarkerOverrides markers;  // empty or one per token
  Profile profile = Profile::kWikiLarge;
  Level level = Level::kSimple;
  std::optional<int> beam_size;
  std::optional<std::string> conllu;  // parse of the tokens, optional

  static SimplifyRequest from_json(std::string_view body);
};

struct SimplifyResponse {
  std::vector<std::string> output_tokens;
  std::string template_text;
  std::vector<Marker> applied_markers;
  std::vector<std::string> banned_words_hit;
  std::vector<std::string> rules_banned_hit;
  double latency_ms = 0.0;

  std::string to_json(bool with_latency = true) const;
};

SimplifyResponse handle_simplify(const SimplifyRequest& request, const Session& session);

// Marks, constrains and decodes one sentence. Throws ConstraintInfeasible
// and ValidationError.
SimplifyResponse simplify_sentence(const Session& session, const Sentence& sentence,
                                   const std::optional<DependencyTree>& parse,
                                   const markers::MarkerOverrides& overrides, Profile profile, Level level,
                                   std::optional<int> beam_size = std::nullopt);

struct HttpResult {
  int status = 200;
  std::string body;
};

using Query = std::map<std::string, std::string>;

// Routes one request. Never throws; failures become JSON error bodies.
HttpResult handle(const Session& session, std::string_view method, std::string_view path, const Query& query,
                  std::string_view body);

// Registers every route on `server`; `session` must outlive it.
void install_routes(httplib::Server& server, const Session& session);

// Blocks until the server stops.
void serve(const Session& session, const std::string& host, int port);

}  // namespace ctrlsimp::service
