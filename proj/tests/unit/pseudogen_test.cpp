#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nlidisc/backends.hpp"
#include "nlidisc/error.hpp"
#include "nlidisc/harness.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/pseudogen.hpp"
#include "nlidisc/rng.hpp"
#include "support.hpp"

using namespace nlidisc;
namespace fx = nlidisc::testing;

namespace {

// The system-generated discussion for the two-dogs example, line breaks
// as a model might emit them.
constexpr const char* kDogsDialogue =
    "Human1: The premise and hypothesis seem to be a contradiction. Two dogs playing together on the bed is an "
    "active situation, while dogs laying down on the floor, motionless is a passive situation.\n"
    "Human2: I agree that the premise and hypothesis are different, but I don't think they are necessarily "
    "contradictory.\n"
    "Human1: That's true, but I still think the premise and hypothesis are contradictory.\n"
    "Human2: I see your point. I think the premise and hypothesis are a contradiction.";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Mock dialogues, except that some problems always get unusable text.
std::shared_ptr<Backend> sometimes_broken() {
  auto mock = std::make_shared<MockBackend>();
  return std::make_shared<FunctionBackend>("sometimes-broken", [mock](const CompletionRequest& req) {
    const auto h = fnv1a64(req.prompt) % 5;
    BackendReply r;
    if (h == 0) {
      r.text = "Sorry, I cannot do that.";
    } else if (h == 1) {
      r.text = "Human1: Only one speaker here.";
    } else if (h == 2 && req.sample_index == 0) {
      r.text = "no markers on the first try";
    } else {
      r = mock->complete(req);
    }
    return r;
  });
}

}  // namespace

TEST(Roles, GoldHolderIsAFairCoin) {
  int h1_gold = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    for (Label gold : kAllLabels) {
      const auto r = assign_roles(gold, derive_seed(1, i * 3 + static_cast<int>(gold)));
      EXPECT_NE(r.human1, r.human2);
      EXPECT_EQ(r.final_label, gold);
      EXPECT_TRUE(r.human1 == gold || r.human2 == gold);
      if (gold == Label::neutral) h1_gold += r.human1 == gold;
    }
  }
  EXPECT_LE(std::fabs(h1_gold - n / 2.0), 3 * std::sqrt(n * 0.25));
  EXPECT_EQ(assign_roles(Label::entailment, 5), assign_roles(Label::entailment, 5));
}

TEST(Roles, PromptForTheNunExample) {
  const auto problems = fx::fixture_problems();
  const RoleAssignment roles{Label::neutral, Label::contradiction, Label::neutral};
  const auto& nun = problems.front();
  ASSERT_EQ(nun.id, "snli-nun");
  const auto prompt = render_pseudo_gen(nun, roles.human1, roles.human2, roles.final_label);
  EXPECT_NE(prompt.text.find("Human1's label is neutral, and Human2's label is a contradiction. In the end, they "
                             "agree on the label of neutral."),
            std::string::npos);
}

TEST(ParseDiscussion, TwoDogsExample) {
  const RoleAssignment roles{Label::contradiction, Label::neutral, Label::contradiction};
  std::vector<std::string> warnings;
  const auto rec = parse_discussion(kDogsDialogue, roles, "dogs", &warnings);
  ASSERT_EQ(rec.utterances.size(), 4u);
  EXPECT_EQ(rec.utterances[0].speaker, Speaker::human1);
  EXPECT_EQ(rec.utterances[3].speaker, Speaker::human2);
  EXPECT_EQ(rec.utterances[3].text, "I see your point. I think the premise and hypothesis are a contradiction.");
  EXPECT_EQ(rec.final_label, Label::contradiction);
  EXPECT_EQ(rec.provenance, Provenance::pseudo);
  EXPECT_TRUE(warnings.empty());
  EXPECT_NO_THROW(validate(rec));
}

TEST(ParseDiscussion, MarkerEdgeCases) {
  const RoleAssignment roles{Label::entailment, Label::neutral, Label::neutral};
  std::vector<std::string> warnings;
  const auto rec = parse_discussion("Sure! Human2: first Human1:   Human1: second", roles, "x", &warnings);
  ASSERT_EQ(rec.utterances.size(), 2u);
  EXPECT_EQ(rec.utterances[0].text, "first");
  EXPECT_EQ(rec.utterances[1].index, 1u);
  EXPECT_EQ(warnings.size(), 2u);
  try {
    parse_discussion("just prose", roles, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_markers);
  }
  try {
    parse_discussion("Human1: alone Human2:  ", roles, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::fewer_than_two_utterances);
  }
}

TEST(Batch, EveryProblemIsAccountedForAndRecordsAreValid) {
  const auto problems = fx::synthetic_corpus(50, 21);
  Gateway gw(sometimes_broken());
  const auto batch = generate_batch(problems, SamplingParams{}, gw, {.seed = 4});
  EXPECT_EQ(batch.records.size() + batch.rejects.size(), 50u);
  EXPECT_GT(batch.records.size(), 0u);
  EXPECT_GT(batch.rejects.size(), 0u);
  std::set<std::string> ids;
  for (const auto& r : batch.records) {
    EXPECT_NO_THROW(validate(r));
    EXPECT_EQ(r.provenance, Provenance::pseudo);
    ids.insert(r.problem_id);
  }
  for (const auto& r : batch.rejects) {
    EXPECT_TRUE(r.reason == "no markers" || r.reason == "fewer than two utterances") << r.reason;
    ids.insert(r.problem_id);
  }
  EXPECT_EQ(ids.size(), 50u);
  EXPECT_EQ(batch.stats.requested, 50u);
  EXPECT_EQ(batch.stats.accepted, batch.records.size());
  EXPECT_DOUBLE_EQ(batch.stats.reject_rate, batch.rejects.size() / 50.0);
}

TEST(Batch, RetryRescuesAFirstBadSample) {
  const auto problems = fx::fixture_problems();
  int calls = 0;
  Gateway gw(std::make_shared<FunctionBackend>("second-time", [&](const CompletionRequest& req) {
    ++calls;
    BackendReply r;
    r.text = req.sample_index == 0 ? "nothing" : "Human1: a Human2: b";
    return r;
  }));
  const auto batch = generate_batch(std::span(problems).first(1), SamplingParams{}, gw, {});
  EXPECT_EQ(batch.records.size(), 1u);
  EXPECT_EQ(calls, 2);
}

TEST(Batch, DeterministicAcrossWorkerCounts) {
  const auto problems = fx::synthetic_corpus(30, 2);
  std::vector<std::string> dumps;
  for (std::size_t jobs : {1u, 3u}) {
    Gateway gw(sometimes_broken());
    const auto batch = generate_batch(problems, SamplingParams{}, gw, {.seed = 9, .jobs = jobs});
    std::string out;
    for (const auto& r : batch.records) out += serialize_record(r) + "\n";
    for (const auto& r : batch.rejects) out += r.problem_id + ":" + r.reason + "\n";
    dumps.push_back(out);
  }
  EXPECT_EQ(dumps[0], dumps[1]);
}

TEST(Export, RoundTripsThroughTheRenderer) {
  const auto problems = fx::synthetic_corpus(50, 21);
  Gateway gw(sometimes_broken());
  const auto batch = generate_batch(problems, SamplingParams{}, gw, {.seed = 4});
  fx::TempDir dir;
  const auto index = index_problems(problems);
  const auto summary = export_finetune(batch.records, index, dir / "train.jsonl");
  EXPECT_EQ(summary.rows, batch.records.size());
  EXPECT_EQ(summary.metadata, dir / "train.meta.json");

  const auto rows = read_finetune(summary.data);
  ASSERT_EQ(rows.size(), batch.records.size());
  std::vector<DiscussionRecord> reparsed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = batch.records[i];
    EXPECT_EQ(rows[i].premise, index.at(rec.problem_id).premise);
    EXPECT_EQ(rows[i].label, rec.final_label);
    ASSERT_TRUE(rows[i].discussion.starts_with("Discussion: "));
    const RoleAssignment roles{rec.participant_labels.at(Speaker::human1), rec.participant_labels.at(Speaker::human2),
                               rec.final_label};
    auto back = parse_discussion(std::string_view(rows[i].discussion).substr(12), roles, rec.problem_id);
    EXPECT_EQ(render_discussion_block(back), rows[i].discussion);
    EXPECT_EQ(back.utterances, rec.utterances);
    reparsed.push_back(std::move(back));
  }
  export_finetune(reparsed, index, dir / "again.jsonl");
  EXPECT_EQ(slurp(dir / "again.jsonl"), slurp(summary.data));

  const auto meta = nlohmann::json::parse(slurp(summary.metadata));
  EXPECT_EQ(meta["reference_hyperparameters"]["batch_size"], 128);
  EXPECT_EQ(meta["reference_hyperparameters"]["learning_rate"], 2e-5);
  EXPECT_EQ(meta["reference_hyperparameters"]["epochs"], 3);
}

TEST(Export, UnknownProblemAndMissingFile) {
  fx::TempDir dir;
  auto records = fx::fixture_records();
  EXPECT_THROW(export_finetune(records, {}, dir / "x.jsonl"), Error);
  EXPECT_THROW(read_finetune(dir / "missing.jsonl"), Error);
}
