#include "tppo/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tppo/random.hpp"

namespace tppo {

double relevance_rate(const std::vector<int>& scores) {
  if (scores.empty()) throw InvalidInput("relevance rate of an empty score list");
  double sum = 0.0;
  for (int s : scores) {
    if (s != 0 && s != 1) throw InvalidInput("relevance scores must be 0 or 1");
    sum += s;
  }
  return sum / static_cast<double>(scores.size());
}

WinTieLose win_tie_lose(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw InvalidInput("win/tie/lose needs aligned score lists of equal length");
  if (a.empty()) throw InvalidInput("win/tie/lose of empty score lists");
  std::size_t win = 0, tie = 0, lose = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) ++win;
    else if (a[i] < b[i]) ++lose;
    else ++tie;
  }
  const double n = static_cast<double>(a.size());
  return {100.0 * static_cast<double>(win) / n, 100.0 * static_cast<double>(tie) / n,
          100.0 * static_cast<double>(lose) / n};
}

std::string_view to_string(JudgeRule r) {
  return r == JudgeRule::direct_sentence ? "direct_sentence" : "token_aggregate";
}

SyntheticJudge::SyntheticJudge(const Vocabulary& vocab, const CorpusConfig& corpus)
    : vocab_(&vocab), tau_(corpus.annotator.tau) {
  for (const auto& w : word_inventory(corpus))
    if (!is_stopword(w, corpus.annotator)) content_.insert(w);
}

std::vector<std::string> SyntheticJudge::content_words(const std::vector<int>& response) const {
  std::vector<std::string> words;
  for (int id : response) {
    if (id < 0 || id >= vocab_->size()) continue;
    const auto& tok = vocab_->token(id);
    if (content_.contains(tok)) words.push_back(tok);
  }
  return words;
}

int SyntheticJudge::score(const std::vector<int>& response, const std::set<char>& topics,
                          JudgeRule rule) const {
  const auto words = content_words(response);
  if (words.empty()) return 0;
  if (rule == JudgeRule::direct_sentence) return topics.contains(word_topic(words.front())) ? 1 : 0;
  std::size_t relevant = 0;
  for (const auto& w : words) relevant += topics.contains(word_topic(w));
  return static_cast<double>(relevant) >= tau_ * static_cast<double>(words.size()) ? 1 : 0;
}

// ---- pipeline ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kEvalCorpusSalt = 0x6576616c636f7270ULL;

nn::MlpDims model_dims(const PipelineConfig& cfg) {
  nn::MlpDims d = cfg.dims;
  d.vocab = cfg.vocab_size;
  return d;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

RelevanceJudge make_task_judge(const SyntheticJudge& judge, const std::vector<EpisodeRecord>& recs,
                               const AnnotatorConfig& rules) {
  std::vector<std::set<char>> topics;
  topics.reserve(recs.size());
  for (const auto& r : recs) topics.push_back(history_topics(r.history, rules));
  return [&judge, topics = std::move(topics)](std::size_t task, const std::vector<int>& resp) {
    return judge.score(resp, topics[task], JudgeRule::token_aggregate);
  };
}

}  // namespace

Vocabulary make_vocabulary(const PipelineConfig& cfg) {
  return Vocabulary(word_inventory(cfg.corpus), Tokenizer::chunked(cfg.chunk_len), cfg.vocab_size);
}

PreparedData prepare_data(const PipelineConfig& cfg) {
  if (cfg.train_episodes < 1 || cfg.eval_episodes < 1)
    throw InvalidInput("train and eval episode counts must be >= 1");
  return {generate_corpus(cfg.seed, static_cast<std::size_t>(cfg.train_episodes), cfg.corpus),
          generate_corpus(cfg.seed ^ kEvalCorpusSalt, static_cast<std::size_t>(cfg.eval_episodes),
                          cfg.corpus),
          make_vocabulary(cfg)};
}

std::vector<int> prompt_ids(const EpisodeRecord& rec, const Vocabulary& vocab) {
  auto ids = vocab.encode_words(rec.prompt_words);
  ids.push_back(kSepId);
  return ids;
}

std::vector<PretrainExample> pretrain_examples(const std::vector<EpisodeRecord>& records,
                                               const Vocabulary& vocab) {
  std::vector<PretrainExample> out;
  for (const auto& rec : records) {
    const auto prompt = prompt_ids(rec, vocab);
    for (const auto& q : rec.target_queries) {
      PretrainExample ex{prompt, vocab.encode_words(split_ws(q))};
      ex.response.push_back(kEosId);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

RMTrainResult run_train_rm(const PipelineConfig& cfg, const PreparedData& data) {
  return train_reward_model(build_token_batch(data.train, data.vocab),
                            build_token_batch(data.eval, data.vocab), cfg.rm, model_dims(cfg));
}

PolicyParams run_pretrain(const PipelineConfig& cfg, const PreparedData& data) {
  return pretrain_policy(pretrain_examples(data.train, data.vocab), cfg.sft, model_dims(cfg));
}

TPPOResult run_train_ppo(const PipelineConfig& cfg, const PreparedData& data, const RMParams& rm,
                         const PolicyParams& start, const CheckpointHook& on_checkpoint) {
  std::vector<std::vector<int>> prompts;
  prompts.reserve(data.train.size());
  for (const auto& rec : data.train) prompts.push_back(prompt_ids(rec, data.vocab));
  const SyntheticJudge judge(data.vocab, cfg.corpus);
  return train_tppo(start, rm, prompts, cfg.ppo,
                    make_task_judge(judge, data.train, cfg.corpus.annotator), on_checkpoint);
}

EvalSummary evaluate_policy(const PolicyParams& policy, const std::vector<EpisodeRecord>& records,
                            const Vocabulary& vocab, const PipelineConfig& cfg,
                            std::uint64_t seed) {
  if (records.empty()) throw InvalidInput("evaluation set is empty");
  const SyntheticJudge judge(vocab, cfg.corpus);
  EvalSummary sum;
  std::vector<int> agg, direct;
  double len = 0.0, agree = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    Rng rng = Rng::stream(seed ^ kEvalCorpusSalt, i);
    EvalSample s;
    s.id = rec.id;
    s.response = sample_response(policy, prompt_ids(rec, vocab), cfg.ppo.max_len,
                                 cfg.ppo.temperature, rng);
    const auto topics = history_topics(rec.history, cfg.corpus.annotator);
    s.score_token_aggregate = judge.score(s.response, topics, JudgeRule::token_aggregate);
    s.score_direct = judge.score(s.response, topics, JudgeRule::direct_sentence);
    agg.push_back(s.score_token_aggregate);
    direct.push_back(s.score_direct);
    len += static_cast<double>(s.response.size());
    agree += s.score_token_aggregate == s.score_direct;
    sum.samples.push_back(std::move(s));
  }
  const double n = static_cast<double>(records.size());
  sum.relevance_token_aggregate = relevance_rate(agg);
  sum.relevance_direct = relevance_rate(direct);
  sum.mean_length = len / n;
  sum.judge_agreement = agree / n;
  return sum;
}

// ---- ablations ---------------------------------------------------------------

void AblationSpec::validate() const {
  if (parameter != "lambda_local" && parameter != "alpha")
    throw InvalidInput("ablation parameter must be lambda_local or alpha, got '" + parameter + "'");
  if (values.size() < 2) throw InvalidInput("an ablation needs at least two values");
  if (seeds.empty()) throw InvalidInput("an ablation needs at least one seed");
  for (double v : values) {
    if (parameter == "lambda_local" && !(v >= 0.0 && v <= 1.0))
      throw InvalidInput("lambda_local values must lie in [0, 1]");
    if (parameter == "alpha" && !(v > 0.0)) throw InvalidInput("alpha values must be positive");
  }
}

double tail_mean(const std::vector<double>& v, std::size_t tail) {
  if (v.empty()) return 0.0;
  const std::size_t n = std::min(std::max<std::size_t>(tail, 1), v.size());
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) /
         static_cast<double>(n);
}

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const PipelineConfig& base) {
  spec.validate();
  std::vector<AblationRow> rows;
  for (auto seed : spec.seeds) {
    PipelineConfig cfg = base;
    cfg.set_seed(seed);
    std::optional<PreparedData> data;
    std::optional<RMParams> rm;
    std::optional<PolicyParams> sft;
    std::string setup_failure;
    try {
      data = prepare_data(cfg);
      if (spec.parameter == "alpha") {
        rm = run_train_rm(cfg, *data).params;
        sft = run_pretrain(cfg, *data);
      }
    } catch (const std::exception& e) {
      setup_failure = e.what();
    }
    for (double value : spec.values) {
      AblationRow row;
      row.parameter = spec.parameter;
      row.value = value;
      row.seed = seed;
      if (!setup_failure.empty()) {
        row.ok = false;
        row.failure = setup_failure;
        rows.push_back(std::move(row));
        continue;
      }
      try {
        PipelineConfig run = cfg;
        if (spec.parameter == "lambda_local") {
          run.rm.lambda_local = value;
          run.rm.lambda_global = 1.0 - value;
          const auto res = run_train_rm(run, *data);
          row.eval_local_loss = res.eval_local;
          row.eval_total_loss = res.eval_total;
        } else {
          run.ppo.length.alpha = value;
          const auto res = run_train_ppo(run, *data, *rm, *sft);
          std::vector<double> rel;
          for (const auto& st : res.curve) {
            row.length_curve.push_back(st.mean_len);
            rel.push_back(st.relevance);
          }
          const std::size_t tail = std::max<std::size_t>(1, row.length_curve.size() / 10);
          row.final_mean_length = tail_mean(row.length_curve, tail);
          row.final_relevance = tail_mean(rel, tail);
          if (res.early_stopped) {
            row.ok = false;
            row.failure = res.diagnostic;
          }
        }
      } catch (const std::exception& e) {
        row.ok = false;
        row.failure = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---- reporting ---------------------------------------------------------------

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::map<std::string, std::string>& echo,
                     const std::vector<std::string>& columns)
    : path_(path), out_(path, std::ios::binary), width_(columns.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : echo) out_ << "# " << k << '=' << v << '\n';
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_)
    throw std::logic_error("CSV row width mismatch in " + path_.string());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

namespace {

std::string fmt(double v) { return format_double(v); }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += fmt(v[i]);
  }
  return s;
}

}  // namespace

void write_rm_curve(const std::filesystem::path& path, const RMTrainResult& res,
                    const std::map<std::string, std::string>& echo) {
  CsvWriter w(path, echo, {"step", "train_loss", "eval_loss", "auc", "seed"});
  for (const auto& r : res.curve)
    w.row({std::to_string(r.step), fmt(r.train_loss), fmt(r.eval_loss),
           r.auc ? fmt(*r.auc) : std::string(), std::to_string(r.seed)});
}

void write_ppo_curve(const std::filesystem::path& path, const TPPOResult& res,
                     const std::map<std::string, std::string>& echo) {
  CsvWriter w(path, echo,
              {"iteration", "mean_reward", "reward_std", "mean_kl", "mean_len", "relevance", "seed",
               "mode"});
  for (const auto& s : res.curve)
    w.row({std::to_string(s.iteration), fmt(s.mean_reward), fmt(s.reward_std), fmt(s.mean_kl),
           fmt(s.mean_len), fmt(s.relevance), std::to_string(s.seed),
           std::string(to_string(s.mode))});
}

void write_lemma1_report(const std::filesystem::path& path, const Lemma1Report& rep,
                         const std::map<std::string, std::string>& echo) {
  auto full = echo;
  full["lemma.perturbations"] = std::to_string(rep.perturbations);
  full["lemma.margin_tolerance"] = fmt(rep.margin_tolerance);
  full["lemma.stationarity_tolerance"] = fmt(rep.stationarity_tolerance);
  full["lemma.violations"] = std::to_string(rep.violations());
  CsvWriter w(path, full,
              {"trial", "actions", "beta", "worst_margin", "stationarity_spread", "status",
               "failure", "pi_ref", "advantages", "policy"});
  for (const auto& t : rep.trials)
    w.row({std::to_string(t.trial), std::to_string(t.instance.actions()), fmt(t.instance.beta),
           fmt(t.worst_margin), fmt(t.stationarity_spread), t.ok ? "ok" : "violation", t.failure,
           join(t.instance.pi_ref), join(t.instance.advantages), join(t.policy)});
}

void write_ablation(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                    const std::map<std::string, std::string>& echo) {
  CsvWriter w(path, echo,
              {"parameter", "value", "seed", "status", "eval_local_loss", "eval_total_loss",
               "final_mean_length", "final_relevance", "failure"});
  for (const auto& r : rows)
    w.row({r.parameter, fmt(r.value), std::to_string(r.seed), r.ok ? "ok" : "failed",
           fmt(r.eval_local_loss), fmt(r.eval_total_loss), fmt(r.final_mean_length),
           fmt(r.final_relevance), r.failure});
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool have_header = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      cells.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      t.header = split(line);
      have_header = true;
      continue;
    }
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error(path.string() + ": row has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw std::runtime_error(path.string() + ": no header row");
  return t;
}

namespace {

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::size_t emit_plot_data(const std::vector<std::filesystem::path>& inputs,
                           const std::filesystem::path& out,
                           const std::vector<std::string>& columns) {
  if (inputs.empty()) throw InvalidInput("plot-data needs at least one input");
  struct Long {
    std::string run, series, step, value;
  };
  std::vector<Long> rows;
  for (const auto& in : inputs) {
    const CsvTable t = read_csv(in);
    const std::string run = in.stem().string();
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
      const auto it = std::find(t.header.begin(), t.header.end(), name);
      if (it == t.header.end()) return std::nullopt;
      return static_cast<std::size_t>(it - t.header.begin());
    };
    auto step_col = col("step");
    if (!step_col) step_col = col("iteration");
    if (!step_col)
      throw std::runtime_error(in.string() + ": missing column 'step' (or 'iteration')");

    std::vector<std::size_t> series;
    if (!columns.empty()) {
      for (const auto& name : columns) {
        auto c = col(name);
        if (!c) throw std::runtime_error(in.string() + ": missing column '" + name + "'");
        series.push_back(*c);
      }
    } else {
      for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == *step_col || t.header[c] == "seed") continue;
        const bool numeric = !t.rows.empty() && std::all_of(t.rows.begin(), t.rows.end(),
                                                            [&](const auto& r) {
                                                              return r[c].empty() ||
                                                                     parse_number(r[c]).has_value();
                                                            });
        if (numeric) series.push_back(c);
      }
    }
    for (const auto& r : t.rows) {
      if (!parse_number(r[*step_col]))
        throw std::runtime_error(in.string() + ": non-numeric step value '" + r[*step_col] + "'");
      for (auto c : series) {
        if (r[c].empty()) continue;
        if (!parse_number(r[c]))
          throw std::runtime_error(in.string() + ": non-numeric value in column '" + t.header[c] +
                                   "'");
        rows.push_back({run, t.header[c], r[*step_col], r[c]});
      }
    }
  }
  std::map<std::string, std::string> echo;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    echo["input." + std::to_string(i)] = inputs[i].string();
  CsvWriter w(out, echo, {"run_id", "series", "step", "value"});
  for (const auto& r : rows) w.row({r.run, r.series, r.step, r.value});
  return rows.size();
}

}  // namespace tppo
