#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "helpd/data/vocab.h"

namespace helpd::judge {

struct Exemplar {
  std::string candidate;
  std::string reference;
  double score = 0.0;
};

// Instruction text with {candidate}, {reference} and {exemplars} slots (the
// caption template uses {captions} instead). Each slot appears exactly once.
struct PromptTemplate {
  std::string id;
  std::string text;
  std::vector<std::string> slots;

  // Throws InvalidArgument if a slot is missing, repeated, or unfilled.
  std::string render(const std::map<std::string, std::string>& values) const;
  void validate() const;
};

// "sentence-feedback" and "long-caption".
const PromptTemplate& builtin_template(const std::string& id);
std::vector<Exemplar> default_exemplars();

struct JudgeRequest {
  std::string candidate;
  std::string reference;
  std::string template_id = "sentence-feedback";
  std::vector<Exemplar> exemplars;
  // Canonical truth objects. The mock judge scores against them (or against
  // the objects in `reference` when empty); the remote judge ignores them.
  std::vector<std::string> truth_objects;
};

struct JudgeResponse {
  double score = 0.0;
  std::string raw;
  double latency_ms = 0.0;
  bool clamped = false;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeResponse score(const JudgeRequest& request) = 0;
  // Default: sequential. Throws JudgeUnavailable if any request fails.
  virtual std::vector<JudgeResponse> score_all(std::span<const JudgeRequest> requests);
  // Throws InvalidArgument for an empty list.
  virtual std::string synthesize_caption(const std::vector<std::string>& captions) = 0;
  virtual std::string name() const = 0;
};

// coverage * (1 - 0.5 * hallucination_rate), clamped to [0, 1], with
// coverage = |mentioned & truth| / |truth| and hallucination_rate =
// |mentioned \ truth| / max(1, |mentioned|). Empty truth counts as full
// coverage; a blank candidate scores 0.
double mock_score(std::string_view candidate, const std::set<data::ObjectId>& truth,
                  const data::ObjectLexicon& lexicon);
double mock_score(std::size_t mentioned, std::size_t true_mentions, std::size_t truth_size);

class MockJudge : public Judge {
 public:
  explicit MockJudge(data::ObjectLexicon lexicon) : lexicon_(std::move(lexicon)) {}
  JudgeResponse score(const JudgeRequest& request) override;
  std::string synthesize_caption(const std::vector<std::string>& captions) override;
  std::string name() const override { return "mock"; }

 private:
  data::ObjectLexicon lexicon_;
};

// Endpoint of a chat-completions style service.
struct RemoteConfig {
  std::string url;    // e.g. http://host:port/v1/chat/completions
  std::string token;  // sent as a bearer token when non-empty
  std::string model;
  int attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failure
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;

  // HELPD_JUDGE_URL, HELPD_JUDGE_TOKEN, HELPD_JUDGE_MODEL.
  static RemoteConfig from_env();
};

// First decimal literal in `reply` ("Score: 0.85" -> 0.85).
std::optional<double> parse_score(std::string_view reply);

class RemoteJudge : public Judge {
 public:
  explicit RemoteJudge(RemoteConfig config);
  JudgeResponse score(const JudgeRequest& request) override;
  std::vector<JudgeResponse> score_all(std::span<const JudgeRequest> requests) override;
  std::string synthesize_caption(const std::vector<std::string>& captions) override;
  std::string name() const override { return "remote"; }

  // Sends a rendered prompt and returns the reply text; retries transport
  // errors and, when `needs_score` is set, unparseable replies.
  std::string complete(const std::string& prompt, bool needs_score);

 private:
  RemoteConfig config_;
  std::string host_;
  std::string path_;
};

}  // namespace helpd::judge
