#include "tppo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <vector>

namespace tppo {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidInput("config key '" + key + "': not a number: '" + s + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidInput("config key '" + key + "': not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw InvalidInput("config key '" + key + "': not a boolean: '" + s + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename Access>
Entry int_entry(std::string key, Access access) {
  return {key, [access](const PipelineConfig& c) {
            return std::to_string(access(const_cast<PipelineConfig&>(c)));
          },
          [access, key](PipelineConfig& c, const std::string& v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(parse_int(key, v));
          }};
}

template <typename Access>
Entry double_entry(std::string key, Access access) {
  return {key, [access](const PipelineConfig& c) {
            return format_double(access(const_cast<PipelineConfig&>(c)));
          },
          [access, key](PipelineConfig& c, const std::string& v) { access(c) = parse_double(key, v); }};
}

template <typename Access>
Entry bool_entry(std::string key, Access access) {
  return {key, [access](const PipelineConfig& c) {
            return std::string(access(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          },
          [access, key](PipelineConfig& c, const std::string& v) { access(c) = parse_bool(key, v); }};
}

#define TPPO_FIELD(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(int_entry("seed", TPPO_FIELD(seed)));
    t.push_back(int_entry("corpus.n_topics", TPPO_FIELD(corpus.n_topics)));
    t.push_back(int_entry("corpus.words_per_topic", TPPO_FIELD(corpus.words_per_topic)));
    t.push_back(int_entry("corpus.min_history", TPPO_FIELD(corpus.min_history)));
    t.push_back(int_entry("corpus.max_history", TPPO_FIELD(corpus.max_history)));
    t.push_back(int_entry("corpus.max_user_topics", TPPO_FIELD(corpus.max_user_topics)));
    t.push_back(int_entry("corpus.max_prompt_words", TPPO_FIELD(corpus.max_prompt_words)));
    t.push_back(int_entry("corpus.target_query_num", TPPO_FIELD(corpus.target_query_num)));
    t.push_back(int_entry("corpus.max_query_words", TPPO_FIELD(corpus.max_query_words)));
    t.push_back(double_entry("corpus.query_noise", TPPO_FIELD(corpus.query_noise)));
    t.push_back(double_entry("corpus.response_noise", TPPO_FIELD(corpus.response_noise)));
    t.push_back(double_entry("corpus.separator_prob", TPPO_FIELD(corpus.separator_prob)));
    t.push_back(int_entry("corpus.max_response_words", TPPO_FIELD(corpus.max_response_words)));
    t.push_back(double_entry("annotator.tau", TPPO_FIELD(corpus.annotator.tau)));
    t.push_back(int_entry("data.chunk_len", TPPO_FIELD(chunk_len)));
    t.push_back(int_entry("data.vocab_size", TPPO_FIELD(vocab_size)));
    t.push_back(int_entry("data.train_episodes", TPPO_FIELD(train_episodes)));
    t.push_back(int_entry("data.eval_episodes", TPPO_FIELD(eval_episodes)));
    t.push_back(int_entry("model.k_ctx", TPPO_FIELD(dims.k_ctx)));
    t.push_back(int_entry("model.d_embed", TPPO_FIELD(dims.d_embed)));
    t.push_back(int_entry("model.hidden", TPPO_FIELD(dims.hidden)));
    t.push_back(double_entry("rm.w0", TPPO_FIELD(rm.class_weights[0])));
    t.push_back(double_entry("rm.w1", TPPO_FIELD(rm.class_weights[1])));
    t.push_back(double_entry("rm.w2", TPPO_FIELD(rm.class_weights[2])));
    t.push_back({"rm.lambda_local",
                 [](const PipelineConfig& c) { return format_double(c.rm.lambda_local); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.rm.lambda_local = parse_double("rm.lambda_local", v);
                   c.rm.lambda_global = 1.0 - c.rm.lambda_local;
                 }});
    t.push_back({"rm.lambda_global",
                 [](const PipelineConfig& c) { return format_double(c.rm.lambda_global); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.rm.lambda_global = parse_double("rm.lambda_global", v);
                   c.rm.lambda_local = 1.0 - c.rm.lambda_global;
                 }});
    t.push_back(double_entry("rm.learning_rate", TPPO_FIELD(rm.learning_rate)));
    t.push_back(int_entry("rm.steps", TPPO_FIELD(rm.steps)));
    t.push_back(int_entry("rm.batch_size", TPPO_FIELD(rm.batch_size)));
    t.push_back(int_entry("rm.eval_every", TPPO_FIELD(rm.eval_every)));
    t.push_back(int_entry("rm.seed", TPPO_FIELD(rm.seed)));
    t.push_back(bool_entry("rm.resample_valid_per_batch", TPPO_FIELD(rm.resample_valid_per_batch)));
    t.push_back(int_entry("sft.steps", TPPO_FIELD(sft.steps)));
    t.push_back(int_entry("sft.batch_size", TPPO_FIELD(sft.batch_size)));
    t.push_back(double_entry("sft.learning_rate", TPPO_FIELD(sft.learning_rate)));
    t.push_back(int_entry("sft.seed", TPPO_FIELD(sft.seed)));
    t.push_back(double_entry("ppo.clip_eps", TPPO_FIELD(ppo.clip_eps)));
    t.push_back(double_entry("ppo.beta", TPPO_FIELD(ppo.beta)));
    t.push_back(double_entry("ppo.gamma", TPPO_FIELD(ppo.gamma)));
    t.push_back(double_entry("ppo.lambda_gae", TPPO_FIELD(ppo.lambda_gae)));
    t.push_back({"ppo.advantage_mode",
                 [](const PipelineConfig& c) { return std::string(to_string(c.ppo.advantage_mode)); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.ppo.advantage_mode = advantage_mode_from_string(v);
                 }});
    t.push_back(bool_entry("ppo.center_advantages", TPPO_FIELD(ppo.center_advantages)));
    t.push_back({"ppo.reward_mode",
                 [](const PipelineConfig& c) { return std::string(to_string(c.ppo.reward_mode)); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.ppo.reward_mode = reward_mode_from_string(v);
                 }});
    t.push_back(double_entry("ppo.value_coef", TPPO_FIELD(ppo.value_coef)));
    t.push_back(double_entry("ppo.entropy_coef", TPPO_FIELD(ppo.entropy_coef)));
    t.push_back(int_entry("ppo.epochs", TPPO_FIELD(ppo.epochs)));
    t.push_back(double_entry("ppo.learning_rate", TPPO_FIELD(ppo.learning_rate)));
    t.push_back(int_entry("ppo.iterations", TPPO_FIELD(ppo.iterations)));
    t.push_back(int_entry("ppo.batch_episodes", TPPO_FIELD(ppo.batch_episodes)));
    t.push_back(int_entry("ppo.max_len", TPPO_FIELD(ppo.max_len)));
    t.push_back(double_entry("ppo.temperature", TPPO_FIELD(ppo.temperature)));
    t.push_back(double_entry("ppo.reward_cat0", TPPO_FIELD(ppo.category_reward[0])));
    t.push_back(double_entry("ppo.reward_cat1", TPPO_FIELD(ppo.category_reward[1])));
    t.push_back(double_entry("ppo.reward_cat2", TPPO_FIELD(ppo.category_reward[2])));
    t.push_back(double_entry("ppo.alpha", TPPO_FIELD(ppo.length.alpha)));
    t.push_back(int_entry("ppo.suggested_length", TPPO_FIELD(ppo.length.suggested_length)));
    t.push_back(double_entry("ppo.sentence_tau", TPPO_FIELD(ppo.sentence_tau)));
    t.push_back(double_entry("ppo.kl_stop", TPPO_FIELD(ppo.kl_stop)));
    t.push_back(int_entry("ppo.checkpoint_every", TPPO_FIELD(ppo.checkpoint_every)));
    t.push_back(int_entry("ppo.seed", TPPO_FIELD(ppo.seed)));
    return t;
  }();
  return table;
}

#undef TPPO_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  rm.seed = s;
  sft.seed = s;
  ppo.seed = s;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    set_seed(static_cast<std::uint64_t>(parse_int(key, value)));
    return;
  }
  for (const auto& e : entries())
    if (e.key == key) {
      e.set(*this, value);
      return;
    }
  throw InvalidInput("unknown config key '" + key + "'");
}

std::map<std::string, std::string> PipelineConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  for (const auto& e : entries()) kv[e.key] = e.get(*this);
  return kv;
}

PipelineConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  PipelineConfig cfg;
  if (auto it = kv.find("seed"); it != kv.end()) cfg.set("seed", it->second);
  for (const auto& [k, v] : kv)
    if (k != "seed") cfg.set(k, v);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(line_no, "expected 'key = value' in " + path.string());
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  try {
    return config_from_kv(kv);
  } catch (const InvalidInput& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace tppo
