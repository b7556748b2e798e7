#include <array>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "nlidisc/backends.hpp"
#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

constexpr std::array<std::string_view, 4> kReasons = {
    "The premise does not mention that detail, so we cannot infer it.",
    "The hypothesis describes the same scene with different words.",
    "The two sentences cannot both be true at the same time.",
    "It is better to consider the general case described in the premise.",
};

constexpr std::array<std::string_view, 4> kReplies = {
    "I see your point, but the premise does not say that explicitly.",
    "That is a fair argument. Let me reconsider the relation between the sentences.",
    "I understand. The hypothesis may describe a different situation.",
    "Yes, you are right about that detail.",
};

std::optional<Label> phrase_label(const std::string& phrase) {
  for (Label l : kAllLabels)
    if (phrase.find(to_string(l)) != std::string::npos) return l;
  return std::nullopt;
}

std::string synthesize_dialogue(const std::string& prompt, Rng& rng) {
  static const std::regex kRoles(
      R"(Human1's label is ([a-z ]+), and Human2's label is ([a-z ]+)\. In the end, they agree on the label of ([a-z]+)\.)");
  std::smatch m;
  if (!std::regex_search(prompt, m, kRoles)) return "I cannot reproduce that discussion.";
  const auto h1 = phrase_label(m[1].str());
  const auto h2 = phrase_label(m[2].str());
  const auto fin = phrase_label(m[3].str());
  if (!h1 || !h2 || !fin) return "I cannot reproduce that discussion.";

  const bool h1_holds = *fin == *h1;
  const std::string holder = h1_holds ? "Human1:" : "Human2:";
  const std::string other = h1_holds ? "Human2:" : "Human1:";
  std::string out = "Human1: I think the premise and hypothesis are " + std::string(to_string(*h1)) + ".";
  out += " Human2: I think it is " + std::string(to_string(*h2)) + ".";
  // Speakers alternate: Human2 spoke last, so Human1 takes the next turn.
  if (!h1_holds) {
    out += " Human1: Why do you think that?";
  } else if (rng.coin()) {
    out += " Human1: Look at the premise again. Human2: What part of it?";
  }
  out += " " + holder + " " + std::string(kReasons[rng.below(kReasons.size())]) + " So it is " +
         std::string(to_string(*fin)) + ".";
  out += " " + other + " I see your point. I agree that the label is " + std::string(to_string(*fin)) + ".";
  return out;
}

}  // namespace

MockBackend::MockBackend(std::vector<MockRule> rules, std::string id)
    : rules_(std::move(rules)), id_(std::move(id)) {
  for (const auto& r : rules_) {
    if (r.responses.empty()) throw Error(Errc::config_error, "mock rule '" + r.match + "' has no responses");
  }
}

std::vector<MockRule> MockBackend::load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::vector<MockRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MockRule r;
      r.match = j.value("match", "");
      r.responses = j.at("responses").get<std::vector<std::string>>();
      rules.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::malformed_line, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rules;
}

BackendReply MockBackend::complete(const CompletionRequest& request) {
  ++requests_;
  const std::uint64_t seed = request.seed.value_or(0);
  Rng rng(derive_seed(seed ^ fnv1a64(request.fingerprint), request.sample_index));

  BackendReply reply;
  for (const auto& rule : rules_) {
    if (request.prompt.find(rule.match) == std::string::npos) continue;
    const std::size_t n = rule.responses.size();
    const std::size_t pick = request.seed ? rng.below(n) : request.sample_index % n;
    reply.text = rule.responses[pick];
    return reply;
  }

  switch (request.kind) {
    case PromptKind::task:
    case PromptKind::finalize:
      reply.text = " " + std::string(to_string(kAllLabels[rng.below(kAllLabels.size())]));
      break;
    case PromptKind::continuation:
      reply.text = " " + std::string(kReasons[rng.below(kReasons.size())]);
      break;
    case PromptKind::session_turn:
      reply.text = " " + std::string(kReplies[rng.below(kReplies.size())]);
      break;
    case PromptKind::pseudo_gen:
      reply.text = synthesize_dialogue(request.prompt, rng);
      break;
  }
  return reply;
}

}  // namespace nlidisc
