#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tppo/datagen.hpp"

namespace tppo {

using nlohmann::json;

std::string record_to_json_line(const EpisodeRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["history"] = json::array();
  for (const auto& ev : rec.history)
    j["history"].push_back({{"kind", std::string(to_string(ev.kind))}, {"text", ev.text}});
  j["prompt_words"] = rec.prompt_words;
  j["response_words"] = json::array();
  for (const auto& w : rec.response_words)
    j["response_words"].push_back(json::array({w.word, to_int(w.category)}));
  j["sentence_reward"] = to_int(rec.sentence_reward);
  j["target_queries"] = rec.target_queries;
  return j.dump();
}

EpisodeRecord record_from_json_line(std::string_view line, std::size_t line_no) {
  try {
    const json j = json::parse(line);
    EpisodeRecord rec;
    rec.id = j.at("id").get<std::string>();
    for (const auto& ev : j.at("history"))
      rec.history.push_back({history_kind_from_string(ev.at("kind").get<std::string>()),
                             ev.at("text").get<std::string>()});
    rec.prompt_words = j.at("prompt_words").get<std::vector<std::string>>();
    for (const auto& w : j.at("response_words")) {
      if (!w.is_array() || w.size() != 2) throw InvalidInput("response word must be [word, cat]");
      WordAnnotation a{w[0].get<std::string>(), category_from_int(w[1].get<int>())};
      if (a.word.empty() || a.word.find_first_of(" \t\r\n") != std::string::npos)
        throw InvalidInput("response word must be non-empty without whitespace");
      rec.response_words.push_back(std::move(a));
    }
    rec.sentence_reward = category_from_int(j.at("sentence_reward").get<int>());
    if (rec.sentence_reward == RewardCategory::masked)
      throw InvalidInput("sentence_reward must be 1 or 2");
    if (j.contains("target_queries"))
      rec.target_queries = j.at("target_queries").get<std::vector<std::string>>();
    return rec;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line_no, e.what());
  }
}

void store_dataset(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& rec : records) out << record_to_json_line(rec) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(record_from_json_line(line, line_no));
  }
  return out;
}

}  // namespace tppo
