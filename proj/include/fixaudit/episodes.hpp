#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixaudit/corpus.hpp"
#include "fixaudit/dapo.hpp"
#include "fixaudit/model.hpp"
#include "fixaudit/prompts.hpp"
#include "fixaudit/reward.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

/// B: Round-1 Fixer, C: Auditor, D: Round-2 Fixer.
enum class Stage { B, C, D };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view name);

struct EpisodeConfig {
  std::size_t group_size = 8;
  std::size_t aux_k = 4;
  bool include_observed_output = true;
  AuditorMode auditor_mode = AuditorMode::CodeReading;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 8192;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct ArtifactTest {
  TestCase test;
  bool parsed = true;
  bool valid = false;
  bool reveals = false;
};

/// Auditor samples for one problem, handed from Stage C to Stage D.
struct AuditorArtifact {
  std::string problem_id;
  Candidate target;
  std::vector<ArtifactTest> tests;

  nlohmann::ordered_json to_json() const;
  static AuditorArtifact from_json(const nlohmann::json& j);
};

void write_auditor_artifacts(const std::vector<AuditorArtifact>& artifacts, std::ostream& out);
std::vector<AuditorArtifact> read_auditor_artifacts(std::istream& in);

struct SkippedProblem {
  std::string problem_id;
  std::string reason;
};

struct EpisodeReport {
  /// Unfiltered groups, one per problem that produced a prompt.
  std::vector<SampleGroup> groups;
  std::vector<RewardRecord> rewards;
  std::vector<SkippedProblem> skipped;
  /// Stage C only.
  std::vector<AuditorArtifact> artifacts;
};

/// Samples `group_size` responses for the stage's role on every checkable
/// problem and scores each with that stage's reward. Stage D needs the
/// artifacts written by a Stage C run; other stages ignore them.
EpisodeReport generate_stage_episodes(Stage stage, const Corpus& corpus, ModelGateway& model, const Sandbox& sandbox,
                                      const EpisodeConfig& config,
                                      const std::vector<AuditorArtifact>& artifacts = {});

/// Stage D hint: the first revealing test, else the first valid one, else the
/// first parsed one.
std::optional<std::size_t> choose_round2_hint(const AuditorArtifact& artifact);

}  // namespace fixaudit
