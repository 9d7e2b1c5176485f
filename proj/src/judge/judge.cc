#include "helpd/judge/judge.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "helpd/feedback/objects.h"
#include "httplib.h"
#include "json.hpp"

namespace helpd::judge {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string format_exemplars(const std::vector<Exemplar>& ex) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (i) os << "\n\n";
    os << "Reference: " << ex[i].reference << "\nCandidate: " << ex[i].candidate
       << "\nScore: " << ex[i].score;
  }
  return os.str();
}

std::string strip_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || std::isspace(static_cast<unsigned char>(s.back()))))
    s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

}  // namespace

void PromptTemplate::validate() const {
  if (id.empty()) throw InvalidArgument("template: empty id");
  for (const auto& slot : slots) {
    const std::string marker = "{" + slot + "}";
    const auto first = text.find(marker);
    if (first == std::string::npos)
      throw InvalidArgument("template " + id + ": slot " + marker + " missing");
    if (text.find(marker, first + 1) != std::string::npos)
      throw InvalidArgument("template " + id + ": slot " + marker + " repeated");
  }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  validate();
  std::string out = text;
  for (const auto& slot : slots) {
    auto it = values.find(slot);
    if (it == values.end()) throw InvalidArgument("template " + id + ": no value for " + slot);
    const std::string marker = "{" + slot + "}";
    out.replace(out.find(marker), marker.size(), it->second);
  }
  return out;
}

const PromptTemplate& builtin_template(const std::string& id) {
  static const PromptTemplate sentence{
      "sentence-feedback",
      "You are checking an image description for hallucination.\n"
      "The reference description was written while looking at the image. The candidate "
      "was produced by a model. Decide how consistent the candidate is with the reference: "
      "every object, attribute and count in the candidate must be supported by the "
      "reference. Paraphrases and synonyms are fine. Missing details lower the score a "
      "little; invented content lowers it a lot.\n"
      "Answer with one number between 0 and 1, where 1 means fully consistent.\n\n"
      "Examples:\n{exemplars}\n\n"
      "Reference: {reference}\nCandidate: {candidate}\nScore:",
      {"exemplars", "reference", "candidate"}};
  static const PromptTemplate caption{
      "long-caption",
      "Here are several short captions of the same image, each by a different annotator:\n"
      "{captions}\n\n"
      "Write one detailed paragraph that describes the image using only what these "
      "captions support. Do not add objects, attributes or relations they do not mention. "
      "Reply with the paragraph only.",
      {"captions"}};
  if (id == sentence.id) return sentence;
  if (id == caption.id) return caption;
  throw InvalidArgument("unknown template id: " + id);
}

// Placeholders; real deployments should pass annotated pairs of their own.
std::vector<Exemplar> default_exemplars() {
  return {
      {"a red cat and a small dog.", "a red cat and a small dog.", 1.0},
      {"a red cat and a small dog.", "a red cat.", 0.4},
      {"a cat.", "a black cat and a wooden chair.", 0.7},
  };
}

std::vector<JudgeResponse> Judge::score_all(std::span<const JudgeRequest> requests) {
  std::vector<JudgeResponse> out;
  out.reserve(requests.size());
  for (const auto& r : requests) out.push_back(score(r));
  return out;
}

double mock_score(std::size_t mentioned, std::size_t true_mentions, std::size_t truth_size) {
  if (true_mentions > mentioned || true_mentions > truth_size)
    throw InvalidArgument("mock_score: inconsistent counts");
  const double coverage = truth_size == 0 ? 1.0 : double(true_mentions) / double(truth_size);
  const double halluc =
      double(mentioned - true_mentions) / double(std::max<std::size_t>(1, mentioned));
  return std::clamp(coverage * (1.0 - 0.5 * halluc), 0.0, 1.0);
}

double mock_score(std::string_view candidate, const std::set<data::ObjectId>& truth,
                  const data::ObjectLexicon& lexicon) {
  if (blank(candidate)) return 0.0;
  const auto found = feedback::extract_objects(candidate, lexicon);
  std::size_t hit = 0;
  for (auto id : found.objects) hit += truth.count(id);
  return mock_score(found.size(), hit, truth.size());
}

JudgeResponse MockJudge::score(const JudgeRequest& request) {
  const auto t0 = Clock::now();
  builtin_template(request.template_id);  // reject unknown ids like the remote path
  std::set<data::ObjectId> truth;
  if (request.truth_objects.empty()) {
    truth = feedback::extract_objects(request.reference, lexicon_).objects;
  } else {
    for (const auto& name : request.truth_objects) truth.insert(lexicon_.require(name));
  }
  JudgeResponse r;
  r.score = mock_score(request.candidate, truth, lexicon_);
  std::ostringstream os;
  os << r.score;
  r.raw = os.str();
  r.latency_ms = elapsed_ms(t0);
  return r;
}

std::string MockJudge::synthesize_caption(const std::vector<std::string>& captions) {
  if (captions.empty()) throw InvalidArgument("synthesize_caption: no captions");
  if (captions.size() == 1) return captions[0];
  static const char* kJoin[] = {"; also, ", "; in addition, ", "; besides, "};
  std::string out;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (i) out += kJoin[(i - 1) % 3];
    out += strip_period(captions[i]);
  }
  return out + ".";
}

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig c;
  if (const char* v = std::getenv("HELPD_JUDGE_URL")) c.url = v;
  if (const char* v = std::getenv("HELPD_JUDGE_TOKEN")) c.token = v;
  if (const char* v = std::getenv("HELPD_JUDGE_MODEL")) c.model = v;
  return c;
}

std::optional<double> parse_score(std::string_view reply) {
  static const std::regex number(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+))");
  std::cmatch m;
  if (!std::regex_search(reply.data(), reply.data() + reply.size(), m, number)) return {};
  return std::strtod(m.str().c_str(), nullptr);
}

RemoteJudge::RemoteJudge(RemoteConfig config) : config_(std::move(config)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.url, m, url))
    throw InvalidArgument("remote judge: bad url '" + config_.url + "'");
  host_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
  if (config_.attempts < 1) throw InvalidArgument("remote judge: attempts < 1");
  if (config_.max_in_flight < 1) throw InvalidArgument("remote judge: max_in_flight < 1");
}

std::string RemoteJudge::complete(const std::string& prompt, bool needs_score) {
  nlohmann::json body = {{"messages", {{{"role", "user"}, {"content", prompt}}}},
                         {"temperature", 0}};
  if (!config_.model.empty()) body["model"] = config_.model;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  std::string last_error = "no attempt made";
  auto backoff = config_.backoff;
  for (int attempt = 0; attempt < config_.attempts; ++attempt) {
    if (attempt) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    auto res = cli.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    std::string text = res->body;
    try {
      const auto j = nlohmann::json::parse(res->body);
      if (j.contains("choices")) {
        text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      } else if (j.contains("content") && j["content"].is_string()) {
        text = j["content"].get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
      // plain-text reply, use as is
    }
    if (needs_score && !parse_score(text)) {
      last_error = "unparseable reply: " + text.substr(0, 80);
      continue;
    }
    return text;
  }
  throw JudgeUnavailable("remote judge failed after " + std::to_string(config_.attempts) +
                         " attempts (" + last_error + ")");
}

JudgeResponse RemoteJudge::score(const JudgeRequest& request) {
  const auto t0 = Clock::now();
  const auto& tpl = builtin_template(request.template_id);
  const auto ex = request.exemplars.empty() ? default_exemplars() : request.exemplars;
  const std::string prompt = tpl.render({{"exemplars", format_exemplars(ex)},
                                         {"reference", request.reference},
                                         {"candidate", request.candidate}});
  JudgeResponse r;
  r.raw = complete(prompt, true);
  const double v = *parse_score(r.raw);
  r.score = std::clamp(v, 0.0, 1.0);
  r.clamped = r.score != v;
  r.latency_ms = elapsed_ms(t0);
  return r;
}

std::vector<JudgeResponse> RemoteJudge::score_all(std::span<const JudgeRequest> requests) {
  std::vector<JudgeResponse> out(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < requests.size();) {
      try {
        out[i] = score(requests[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(config_.max_in_flight, requests.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string RemoteJudge::synthesize_caption(const std::vector<std::string>& captions) {
  if (captions.empty()) throw InvalidArgument("synthesize_caption: no captions");
  std::string listing;
  for (const auto& c : captions) listing += "- " + c + "\n";
  if (!listing.empty()) listing.pop_back();
  return complete(builtin_template("long-caption").render({{"captions", listing}}), false);
}

}  // namespace helpd::judge
