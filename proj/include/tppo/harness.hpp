#pragma once

// Evaluation metrics, pipeline stages, ablation sweeps and CSV reporting.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tppo/config.hpp"
#include "tppo/datagen.hpp"
#include "tppo/kl_oracle.hpp"
#include "tppo/policy.hpp"
#include "tppo/reward_model.hpp"
#include "tppo/trainer.hpp"

namespace tppo {

// ---- metrics ---------------------------------------------------------------

double relevance_rate(const std::vector<int>& scores);

struct WinTieLose {
  double win = 0.0;
  double tie = 0.0;
  double lose = 0.0;
};

/// Per-sample comparison of aligned {0,1} scores, in percent.
WinTieLose win_tie_lose(const std::vector<int>& a, const std::vector<int>& b);

enum class JudgeRule {
  /// Relevant iff the relevant fraction among content words is >= tau.
  token_aggregate,
  /// Relevant iff the leading content word is on a history topic.
  direct_sentence,
};

std::string_view to_string(JudgeRule r);

/// Rule-based stand-in for an LLM relevance judge over generated token ids.
class SyntheticJudge {
 public:
  SyntheticJudge(const Vocabulary& vocab, const CorpusConfig& corpus);

  /// Content words recovered from a token sequence; specials and stopword
  /// fragments are dropped.
  std::vector<std::string> content_words(const std::vector<int>& response) const;
  int score(const std::vector<int>& response, const std::set<char>& topics, JudgeRule rule) const;

 private:
  const Vocabulary* vocab_;
  std::set<std::string> content_;
  double tau_;
};

// ---- pipeline --------------------------------------------------------------

struct PreparedData {
  std::vector<EpisodeRecord> train;
  std::vector<EpisodeRecord> eval;
  Vocabulary vocab;
};

Vocabulary make_vocabulary(const PipelineConfig& cfg);
PreparedData prepare_data(const PipelineConfig& cfg);
/// Prompt ids (prompt words followed by the separator).
std::vector<int> prompt_ids(const EpisodeRecord& rec, const Vocabulary& vocab);
std::vector<PretrainExample> pretrain_examples(const std::vector<EpisodeRecord>& records,
                                               const Vocabulary& vocab);

RMTrainResult run_train_rm(const PipelineConfig& cfg, const PreparedData& data);
PolicyParams run_pretrain(const PipelineConfig& cfg, const PreparedData& data);
TPPOResult run_train_ppo(const PipelineConfig& cfg, const PreparedData& data, const RMParams& rm,
                         const PolicyParams& start, const CheckpointHook& on_checkpoint = {});

struct EvalSample {
  std::string id;
  std::vector<int> response;
  int score_token_aggregate = 0;
  int score_direct = 0;
};

struct EvalSummary {
  std::vector<EvalSample> samples;
  double relevance_token_aggregate = 0.0;
  double relevance_direct = 0.0;
  double mean_length = 0.0;
  /// Fraction of samples where the two judge rules agree.
  double judge_agreement = 0.0;
};

/// Samples one response per eval record (temperature from cfg.ppo, seeded
/// per record) and scores it with both judge rules.
EvalSummary evaluate_policy(const PolicyParams& policy, const std::vector<EpisodeRecord>& records,
                            const Vocabulary& vocab, const PipelineConfig& cfg,
                            std::uint64_t seed);

// ---- ablations -------------------------------------------------------------

struct AblationSpec {
  std::string parameter;  // "lambda_local" or "alpha"
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output;

  void validate() const;
};

struct AblationRow {
  std::string parameter;
  double value = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string failure;
  /// lambda_local sweeps
  double eval_local_loss = 0.0;
  double eval_total_loss = 0.0;
  /// alpha sweeps
  double final_mean_length = 0.0;
  double final_relevance = 0.0;
  std::vector<double> length_curve;
};

/// Mean of the last `tail` entries (all if fewer).
double tail_mean(const std::vector<double>& v, std::size_t tail);

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const PipelineConfig& base);

// ---- reporting -------------------------------------------------------------

/// CSV with a '#'-prefixed key=value preamble holding the resolved config.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::map<std::string, std::string>& echo,
            const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

void write_rm_curve(const std::filesystem::path& path, const RMTrainResult& res,
                    const std::map<std::string, std::string>& echo);
void write_ppo_curve(const std::filesystem::path& path, const TPPOResult& res,
                     const std::map<std::string, std::string>& echo);
void write_lemma1_report(const std::filesystem::path& path, const Lemma1Report& rep,
                         const std::map<std::string, std::string>& echo);
void write_ablation(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                    const std::map<std::string, std::string>& echo);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a CSV written by CsvWriter (preamble skipped).
CsvTable read_csv(const std::filesystem::path& path);

/// Merges curve CSVs into long format (run_id, series, step, value). Each
/// input needs a `step` or `iteration` column; `columns` (if non-empty)
/// names the series to extract, otherwise every numeric column except the
/// step and seed. Throws naming the offending file on a schema mismatch.
std::size_t emit_plot_data(const std::vector<std::filesystem::path>& inputs,
                           const std::filesystem::path& out,
                           const std::vector<std::string>& columns = {});

}  // namespace tppo
