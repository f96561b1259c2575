#include "perq/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "perq/error.hpp"
#include "perq/http_client.hpp"
#include "perq/io.hpp"
#include "perq/rng.hpp"
#include "perq/text.hpp"

namespace perq {

namespace {

std::string slug(std::string_view s) {
  std::string out;
  bool dash = false;
  for (char c : ascii_lower(s)) {
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
                       static_cast<unsigned char>(c) >= 0x80;
    if (alnum) {
      if (dash && !out.empty()) out.push_back('-');
      out.push_back(c);
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? std::string("x") : out;
}

struct LanguageKit {
  std::string_view name;
  std::vector<std::string_view> words;
};

// Filler vocabulary per language. Plain words only: no digits, '#', or emoji,
// so none of them can trigger a marker family.
const LanguageKit& language_kit(std::string_view code) {
  static const std::map<std::string, LanguageKit, std::less<>> kits = {
      {"en", {"English", {"the", "city", "council", "announced", "new", "plan", "for", "public", "transport", "today",
                          "residents", "report", "market", "weather", "school", "officials", "said", "and", "with", "week"}}},
      {"de", {"German", {"die", "stadt", "hat", "heute", "einen", "neuen", "plan", "für", "den", "verkehr", "bekannt",
                         "gegeben", "und", "die", "bürger", "schule", "wetter", "markt", "woche", "bericht"}}},
      {"fr", {"French", {"la", "ville", "a", "annoncé", "aujourd'hui", "un", "nouveau", "plan", "pour", "les",
                         "transports", "habitants", "école", "marché", "semaine", "rapport", "et", "météo", "avec", "selon"}}},
      {"it", {"Italian", {"il", "comune", "ha", "annunciato", "oggi", "un", "nuovo", "piano", "per", "i", "trasporti",
                          "cittadini", "scuola", "mercato", "settimana", "rapporto", "e", "tempo", "con", "secondo"}}},
      {"sk", {"Slovak", {"mesto", "dnes", "oznámilo", "nový", "plán", "pre", "verejnú", "dopravu", "obyvatelia",
                         "škola", "trh", "počasie", "týždeň", "správa", "a", "podľa", "úradníci", "povedali", "s", "na"}}},
      {"ru", {"Russian", {"город", "сегодня", "объявил", "новый", "план", "для", "общественного", "транспорта",
                          "жители", "школа", "рынок", "погода", "неделя", "доклад", "и", "по", "словам", "чиновников",
                          "с", "на"}}},
      {"hu", {"Hungarian", {"a", "város", "ma", "bejelentette", "az", "új", "tervet", "közlekedés", "lakosok", "iskola",
                            "piac", "időjárás", "hét", "jelentés", "és", "szerint", "tisztviselők", "mondták", "vel",
                            "számára"}}},
  };
  static const LanguageKit generic{"Generic", {"lorem", "ipsum", "dolor", "sit", "amet", "consectetur", "adipiscing",
                                               "elit", "sed", "do", "eiusmod", "tempor", "incididunt", "ut", "labore",
                                               "et", "dolore", "magna", "aliqua", "enim"}};
  const auto it = kits.find(code);
  return it == kits.end() ? generic : it->second;
}

const std::vector<std::string>& hashtag_words() {
  static const std::vector<std::string> w = {"news", "breaking", "local", "update", "community", "today", "trending",
                                             "city", "mustread", "viral"};
  return w;
}

const std::vector<std::string>& emoji_pool() {
  static const std::vector<std::string> e = {"\U0001F525", "\U0001F680", "\U0001F4E2", "\U0001F44D", "\U0001F389",
                                             "\U0001F4F0", "✨", "\U0001F60D", "\U0001F4AC", "☀"};
  return e;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

// Body words; adapted texts sprinkle hashtags and emoji through the body the
// way posts do, so the markers keep their weight as the text grows.
std::string filler(Rng& rng, const LanguageKit& kit, int words, bool hashtags, bool emoji) {
  std::string out;
  for (int i = 0; i < words; ++i) {
    if (i) out.push_back(' ');
    if (hashtags && rng.below(5) == 0) out.push_back('#');
    out += pick(rng, kit.words);
    if (emoji && rng.below(5) == 0) out += ' ' + pick(rng, emoji_pool());
  }
  return out;
}

std::string synth_text(const GenerationTask& task, int q, int max_level, Rng& rng) {
  // Partial levels draw from the lexical families; brevity only comes with
  // the top level, where every family is present.
  std::vector<MarkerFamily> order = {MarkerFamily::Hashtag, MarkerFamily::Emoji, MarkerFamily::EngagementCue};
  rng.shuffle(order);
  std::set<MarkerFamily> present;
  if (q >= max_level) {
    present = {MarkerFamily::Hashtag, MarkerFamily::Emoji, MarkerFamily::EngagementCue, MarkerFamily::Concise};
  } else {
    present.insert(order.begin(), order.begin() + std::min<int>(q, static_cast<int>(order.size())));
  }

  const auto& kit = language_kit(task.language);
  const bool concise = present.count(MarkerFamily::Concise) > 0;
  const int body_words = concise ? 10 + static_cast<int>(rng.below(12)) : 44 + static_cast<int>(rng.below(16));

  std::string text = "[" + task.language + "] ";
  text += filler(rng, kit, body_words, present.count(MarkerFamily::Hashtag) > 0,
                 present.count(MarkerFamily::Emoji) > 0);
  text += '.';
  if (present.count(MarkerFamily::EngagementCue)) {
    std::string cue = pick(rng, engagement_cues());
    cue[0] = static_cast<char>(cue[0] - 32);
    text += ' ' + cue + '!';
  }
  if (present.count(MarkerFamily::Hashtag)) {
    const int n = 3 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) text += " #" + pick(rng, hashtag_words());
  }
  if (present.count(MarkerFamily::Emoji)) {
    const int n = 4 + static_cast<int>(rng.below(4));
    text += ' ';
    for (int i = 0; i < n; ++i) text += pick(rng, emoji_pool());
  }
  return text;
}

int draw_level(Rng& rng, const std::vector<double>& weights, double total) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed on the upper edge through rounding; return the last positive level.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

std::string_view to_string(PType p) { return p == PType::Generate ? "generate" : "modify"; }

PType parse_ptype(std::string_view s) {
  const auto lower = ascii_lower(s);
  if (lower == "generate") return PType::Generate;
  if (lower == "modify") return PType::Modify;
  throw ParseError("ptype: expected 'generate' or 'modify', got '" + std::string(s) + "'");
}

std::string make_task_id(std::string_view language, PType ptype, std::string_view platform,
                         std::string_view generator_id, int seed_index) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%04d", seed_index);
  return slug(language) + ":" + (ptype == PType::Generate ? "gen" : "mod") + ":" + slug(platform) + ":" +
         slug(generator_id) + ":" + idx;
}

MatrixAxes default_axes() {
  return MatrixAxes{{"de", "en", "fr", "hu", "it", "ru", "sk"},
                    {PType::Generate, PType::Modify},
                    {"Signal", "Telegram", "Twitter/X"},
                    {"gemma3-large", "gemma3-small", "llama3-large", "llama3-small", "qwen3-large", "qwen3-small"},
                    100};
}

std::vector<GenerationTask> build_matrix(const MatrixAxes& axes) {
  auto empty = [](std::string_view axis) {
    return ValidationError("EmptyAxis", std::string(axis) + ": axis must be nonempty");
  };
  if (axes.languages.empty()) throw empty("languages");
  if (axes.ptypes.empty()) throw empty("ptypes");
  if (axes.platforms.empty()) throw empty("platforms");
  if (axes.generators.empty()) throw empty("generators");
  if (axes.samples_per_cell < 1) {
    throw ValidationError("samples_per_cell: must be >= 1, got " + std::to_string(axes.samples_per_cell));
  }

  std::vector<GenerationTask> tasks;
  tasks.reserve(axes.languages.size() * axes.ptypes.size() * axes.platforms.size() * axes.generators.size() *
                static_cast<std::size_t>(axes.samples_per_cell));
  for (const auto& lang : axes.languages) {
    const auto& kit = language_kit(lang);
    for (auto ptype : axes.ptypes) {
      for (const auto& platform : axes.platforms) {
        for (const auto& gen : axes.generators) {
          for (int i = 0; i < axes.samples_per_cell; ++i) {
            GenerationTask t;
            t.task_id = make_task_id(lang, ptype, platform, gen, i);
            t.language = lang;
            t.ptype = ptype;
            t.platform = platform;
            t.generator_id = gen;
            t.seed_index = i;
            // The same source article (seed_index) feeds every cell of a language.
            t.source_title = std::string(kit.name) + " headline " + std::to_string(i);
            t.source_content = std::string(kit.name) + " article body " + std::to_string(i) + ".";
            tasks.push_back(std::move(t));
          }
        }
      }
    }
  }
  std::sort(tasks.begin(), tasks.end(), [](const GenerationTask& a, const GenerationTask& b) {
    return std::tie(a.language, a.ptype, a.platform, a.generator_id, a.seed_index) <
           std::tie(b.language, b.ptype, b.platform, b.generator_id, b.seed_index);
  });
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    const auto& a = tasks[i - 1];
    const auto& b = tasks[i];
    if (std::tie(a.language, a.ptype, a.platform, a.generator_id) ==
            std::tie(b.language, b.ptype, b.platform, b.generator_id) &&
        a.seed_index == b.seed_index) {
      throw ValidationError("DuplicateAxisValue", "axis value repeated: " + a.task_id);
    }
  }
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    if (!ids.insert(t.task_id).second) {
      throw ValidationError("DuplicateAxisValue", "axis values collide on task id " + t.task_id);
    }
  }
  return tasks;
}

const std::vector<std::string>& engagement_cues() {
  static const std::vector<std::string> cues = {"comment below", "share with a friend", "tag a friend",
                                                "let us know what you think", "drop a like", "join the conversation"};
  return cues;
}

std::vector<MarkerFamily> detect_marker_families(std::string_view text) {
  std::vector<MarkerFamily> found;

  bool hashtag = false;
  for (std::size_t i = 0; i + 1 < text.size() && !hashtag; ++i) {
    if (text[i] != '#') continue;
    const bool boundary = i == 0 || text[i - 1] == ' ' || text[i - 1] == '\n' || text[i - 1] == '\t';
    const auto next = static_cast<unsigned char>(text[i + 1]);
    hashtag = boundary && (std::isalpha(next) || next >= 0x80);
  }
  if (hashtag) found.push_back(MarkerFamily::Hashtag);

  const auto cps = utf8_decode(text);
  if (std::any_of(cps.begin(), cps.end(), is_emoji)) found.push_back(MarkerFamily::Emoji);

  const auto lower = ascii_lower(text);
  if (std::any_of(engagement_cues().begin(), engagement_cues().end(),
                  [&](const std::string& cue) { return lower.find(cue) != std::string::npos; })) {
    found.push_back(MarkerFamily::EngagementCue);
  }

  int words = 0;
  bool in_word = false;
  for (char32_t cp : cps) {
    if (is_unicode_space(cp)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  if (words > 0 && words <= kConciseMaxWords) found.push_back(MarkerFamily::Concise);
  return found;
}

SynthCorpus synth_corpus(const std::vector<GenerationTask>& tasks, const QualityProfile& profile,
                         std::uint64_t seed, int num_levels) {
  for (const auto& [gen, weights] : profile) {
    if (static_cast<int>(weights.size()) != num_levels) {
      throw ValidationError("InvalidWeights", "profile[" + gen + "]: expected " + std::to_string(num_levels) +
                                                  " weights, got " + std::to_string(weights.size()));
    }
    double total = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0) throw ValidationError("InvalidWeights", "profile[" + gen + "]: negative or non-finite weight");
      total += w;
    }
    if (!(total > 0)) throw ValidationError("InvalidWeights", "profile[" + gen + "]: weights sum to zero");
  }

  SynthCorpus out;
  out.samples.reserve(tasks.size());
  out.truth.reserve(tasks.size());
  std::set<std::string> seen;
  for (const auto& task : tasks) {
    const auto it = profile.find(task.generator_id);
    if (it == profile.end()) {
      throw ValidationError("InvalidWeights", "profile: no weights for generator '" + task.generator_id + "'");
    }
    if (!seen.insert(task.task_id).second) throw ValidationError("DuplicateId", "task_id repeated: " + task.task_id);
    const auto& weights = it->second;
    double total = 0.0;
    for (double w : weights) total += w;

    Rng rng = Rng::keyed(seed, task.task_id);
    const int q = draw_level(rng, weights, total);
    TextSample s;
    s.sample_id = task.task_id;
    s.task = task;
    s.text = synth_text(task, q, num_levels - 1, rng);
    out.samples.push_back(std::move(s));
    out.truth.emplace_back(task.task_id, q);
  }
  return out;
}

namespace {

json sample_to_json(const TextSample& s) {
  return json{{"sample_id", s.sample_id},         {"text", s.text},
              {"language", s.task.language},      {"ptype", std::string(to_string(s.task.ptype))},
              {"platform", s.task.platform},      {"generator_id", s.task.generator_id},
              {"seed_index", s.task.seed_index}};
}

}  // namespace

std::vector<TextSample> load_corpus(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<TextSample> samples;
  samples.reserve(rows.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    TextSample s;
    s.sample_id = require_string(row, "sample_id", ctx);
    s.text = require_string(row, "text", ctx);
    s.task.language = require_string(row, "language", ctx);
    s.task.ptype = parse_ptype(require_string(row, "ptype", ctx));
    s.task.platform = require_string(row, "platform", ctx);
    s.task.generator_id = require_string(row, "generator_id", ctx);
    s.task.seed_index = static_cast<int>(require_int(row, "seed_index", ctx));
    s.task.task_id = s.sample_id;
    if (s.sample_id.empty()) throw ValidationError(ctx + ": sample_id: must be nonempty");
    if (s.text.empty()) throw ValidationError(ctx + ": text: must be nonempty");
    if (s.task.seed_index < 0) throw ValidationError(ctx + ": seed_index: must be >= 0");
    if (!ids.insert(s.sample_id).second) throw ValidationError("DuplicateId", ctx + ": sample_id '" + s.sample_id + "' repeated");
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_corpus(const std::filesystem::path& path, const std::vector<TextSample>& samples) {
  std::vector<json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(sample_to_json(s));
  write_file_atomic(path, to_jsonl(rows));
}

void write_truth(const std::filesystem::path& path, const std::vector<std::pair<std::string, int>>& truth) {
  std::vector<json> rows;
  rows.reserve(truth.size());
  for (const auto& [id, q] : truth) rows.push_back(json{{"sample_id", id}, {"latent_q", q}});
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<std::pair<std::string, int>> load_truth(const std::filesystem::path& path) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& row : read_jsonl(path)) {
    out.emplace_back(require_string(row, "sample_id", path.string()),
                     static_cast<int>(require_int(row, "latent_q", path.string())));
  }
  return out;
}

std::vector<TextSample> http_generate(const std::vector<GenerationTask>& tasks, const HttpGeneratorConfig& cfg) {
  const auto endpoint = parse_endpoint(cfg.endpoint);
  std::vector<TextSample> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks) {
    std::string prompt;
    const std::string& tmpl = cfg.prompt_template;
    for (std::size_t pos = 0; pos < tmpl.size();) {
      const auto rest = std::string_view(tmpl).substr(pos);
      auto sub = [&](std::string_view key, const std::string& value) {
        if (!rest.starts_with(key)) return false;
        prompt += value;
        pos += key.size();
        return true;
      };
      if (sub("{title}", task.source_title) || sub("{content}", task.source_content.value_or("")) ||
          sub("{platform}", task.platform) || sub("{language}", task.language) ||
          sub("{ptype}", std::string(to_string(task.ptype)))) {
        continue;
      }
      prompt += tmpl[pos++];
    }

    CompletionRequest req{cfg.model, prompt, cfg.max_tokens, cfg.temperature};
    std::string text;
    for (int attempt = 0;; ++attempt) {
      try {
        text = post_completion(endpoint, req, cfg.api_key, cfg.timeout_s);
        break;
      } catch (const TransientError& e) {
        if (attempt >= cfg.max_retries) {
          throw Error(ErrorKind::Judge, "GeneratorUnavailable", task.task_id + ": " + e.what());
        }
      }
    }
    if (text.empty()) throw ValidationError(task.task_id + ": generator returned empty text");
    TextSample s;
    s.sample_id = task.task_id;
    s.text = std::move(text);
    s.task = task;
    s.created_at = std::chrono::system_clock::now();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace perq
