// Copyright 2026 The mvlip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Paired-comparison and phrase-identification study: task scheduling per
// rater session, judgment storage with an append-only JSON-lines journal,
// and aggregate metrics.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/common.hpp"

namespace mvlip::study {

using nlohmann::json;

/// Conditions: M = attention-guided compression, O = original, V = uniformly
/// degraded.
inline constexpr std::array<std::string_view, 4> kPairTypes = {"M-O", "V-O", "M-V", "O-O"};

inline bool is_pair_type(const std::string& p) {
  return std::find(kPairTypes.begin(), kPairTypes.end(), p) != kPairTypes.end();
}

/// Status-carrying error; the HTTP layer maps `status` onto the response code.
class StudyError : public Error {
 public:
  StudyError(int status, const std::string& msg) : Error(msg), status(status) {}
  int status;
};

[[noreturn]] inline void reject(int status, const std::string& msg) { throw StudyError(status, msg); }

struct Phrase {
  std::string id;
  std::string text;
  std::string group;                           // e.g. dataset name; "" when ungrouped
  std::map<std::string, std::string> media;   // condition (M, O, V) -> media path
  std::string similar_distractor;
  std::array<std::string, 2> different_distractors;
};

struct StudyConfig {
  std::vector<Phrase> phrases;
  std::vector<std::string> pair_types{kPairTypes.begin(), kPairTypes.end()};
  bool with_audio = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (phrases.empty()) reject(400, "study needs at least one phrase");
    if (pair_types.empty()) reject(400, "study needs at least one pair type");
    std::vector<std::string> seen;
    for (const auto& p : pair_types) {
      if (!is_pair_type(p)) reject(400, "unknown pair type '" + p + "'");
      if (std::count(pair_types.begin(), pair_types.end(), p) > 1) reject(400, "pair type '" + p + "' listed twice");
    }
    for (const auto& ph : phrases) {
      if (ph.id.empty()) reject(400, "phrase without id");
      if (std::find(seen.begin(), seen.end(), ph.id) != seen.end()) reject(400, "duplicate phrase id '" + ph.id + "'");
      seen.push_back(ph.id);
      if (ph.text.empty()) reject(400, "phrase '" + ph.id + "' has no text");
      for (const char* c : {"M", "O", "V"})
        if (!ph.media.count(c) || ph.media.at(c).empty())
          reject(400, std::string("phrase '") + ph.id + "' lacks media for condition " + c);
      std::vector<std::string> opts{ph.text, ph.similar_distractor, ph.different_distractors[0],
                                    ph.different_distractors[1]};
      for (size_t i = 0; i < opts.size(); ++i) {
        if (opts[i].empty()) reject(400, "phrase '" + ph.id + "' needs one similar and two different distractors");
        for (size_t j = 0; j < i; ++j)
          if (opts[i] == opts[j]) reject(400, "phrase '" + ph.id + "' has repeated option '" + opts[i] + "'");
      }
    }
  }
};

inline void to_json(json& j, const Phrase& p) {
  j = json{{"id", p.id},
           {"text", p.text},
           {"group", p.group},
           {"media", p.media},
           {"similar_distractor", p.similar_distractor},
           {"different_distractors", p.different_distractors}};
}

inline void from_json(const json& j, Phrase& p) {
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.group = j.value("group", std::string());
  p.media = j.at("media").get<std::map<std::string, std::string>>();
  p.similar_distractor = j.at("similar_distractor").get<std::string>();
  const auto d = j.at("different_distractors").get<std::vector<std::string>>();
  if (d.size() != 2) reject(400, "phrase '" + p.id + "' needs exactly two different_distractors");
  p.different_distractors = {d[0], d[1]};
}

inline void to_json(json& j, const StudyConfig& c) {
  j = json{{"phrases", c.phrases}, {"pair_types", c.pair_types}, {"with_audio", c.with_audio}, {"seed", c.seed}};
}

inline void from_json(const json& j, StudyConfig& c) {
  c = StudyConfig{};
  c.phrases = j.at("phrases").get<std::vector<Phrase>>();
  if (j.contains("pair_types")) c.pair_types = j.at("pair_types").get<std::vector<std::string>>();
  c.with_audio = j.value("with_audio", false);
  c.seed = j.value("seed", std::uint64_t{1});
}

inline StudyConfig parse_study_config(const json& j) {
  StudyConfig c;
  try {
    c = j.get<StudyConfig>();
  } catch (const json::exception& e) {
    reject(400, std::string("malformed study config: ") + e.what());
  }
  c.validate();
  return c;
}

enum class TaskKind { Comparison, Phrase };

/// One unit of work for a rater. Comparison tasks carry the hidden pair type
/// and which condition plays on the left; phrase tasks carry the option order.
struct Task {
  std::string id;
  TaskKind kind = TaskKind::Comparison;
  int phrase = 0;
  std::string pair_type;
  bool first_on_left = true;
  std::array<std::string, 4> options;
  int correct = 0;

  std::string first() const { return pair_type.substr(0, 1); }
  std::string second() const { return pair_type.substr(2, 1); }
  std::string left_condition() const { return first_on_left ? first() : second(); }
  std::string right_condition() const { return first_on_left ? second() : first(); }
};

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Deterministic per-session schedule: phrases x pair types comparisons plus
/// one phrase task per phrase, shuffled. For each pair type the first-listed
/// condition is on the left for ceil or floor of half its tasks.
inline std::vector<Task> schedule(const StudyConfig& cfg, const std::string& session) {
  std::mt19937_64 rng(fnv1a(session, cfg.seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull));
  std::vector<Task> tasks;
  for (const auto& pt : cfg.pair_types) {
    const int offset = int(rng() & 1u);
    for (size_t p = 0; p < cfg.phrases.size(); ++p) {
      Task t;
      t.kind = TaskKind::Comparison;
      t.phrase = int(p);
      t.pair_type = pt;
      t.first_on_left = (int(p) + offset) % 2 == 0;
      tasks.push_back(t);
    }
  }
  for (size_t p = 0; p < cfg.phrases.size(); ++p) {
    const auto& ph = cfg.phrases[p];
    Task t;
    t.kind = TaskKind::Phrase;
    t.phrase = int(p);
    t.options = {ph.text, ph.similar_distractor, ph.different_distractors[0], ph.different_distractors[1]};
    for (int i = 3; i > 0; --i) std::swap(t.options[i], t.options[rng() % std::uint64_t(i + 1)]);
    t.correct = int(std::find(t.options.begin(), t.options.end(), ph.text) - t.options.begin());
    tasks.push_back(t);
  }
  for (size_t i = tasks.size() - 1; i > 0; --i) std::swap(tasks[i], tasks[rng() % std::uint64_t(i + 1)]);
  for (size_t i = 0; i < tasks.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "t%02zu", i);
    tasks[i].id = buf;
  }
  return tasks;
}

struct Judgment {
  std::string study_id;
  std::string session_id;
  std::string task_id;
  std::string choice;  // left | right | same, or the option index for phrase tasks
  std::string timestamp;
};

inline void to_json(json& j, const Judgment& r) {
  j = json{{"study_id", r.study_id},
           {"session_id", r.session_id},
           {"task_id", r.task_id},
           {"choice", r.choice},
           {"timestamp", r.timestamp}};
}

inline void from_json(const json& j, Judgment& r) {
  r.study_id = j.at("study_id").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.task_id = j.at("task_id").get<std::string>();
  r.choice = j.at("choice").get<std::string>();
  r.timestamp = j.value("timestamp", std::string());
}

struct Cell {
  int favourable = 0;
  int total = 0;
  std::optional<double> value() const {
    if (total == 0) return std::nullopt;
    return double(favourable) / total;
  }
};

struct GroupMetrics {
  std::map<std::string, Cell> pairs;  // every configured pair type, possibly empty
  Cell phrase;
};

struct StudyResults {
  std::string study_id;
  bool with_audio = false;
  int sessions = 0;
  int judgments = 0;
  GroupMetrics overall;
  std::map<std::string, GroupMetrics> groups;
};

inline json cell_json(const Cell& c) {
  if (!c.value()) return nullptr;
  return json{{"value", *c.value()}, {"favourable", c.favourable}, {"n", c.total}};
}

inline json group_json(const GroupMetrics& g) {
  json pairs = json::object();
  for (const auto& [k, c] : g.pairs) pairs[k] = cell_json(c);
  return json{{"pairs", pairs}, {"phrase_accuracy", cell_json(g.phrase)}};
}

inline void to_json(json& j, const StudyResults& r) {
  j = group_json(r.overall);
  j["study_id"] = r.study_id;
  j["with_audio"] = r.with_audio;
  j["sessions"] = r.sessions;
  j["judgments"] = r.judgments;
  json groups = json::object();
  for (const auto& [k, g] : r.groups) groups[k] = group_json(g);
  j["groups"] = groups;
}

/// A comparison judgment counts toward its cell when the first-listed
/// condition was preferred or the two were rated the same. O-O has no
/// meaningful "first", so it counts "same" only.
inline bool favourable(const Task& t, const std::string& choice) {
  if (choice == "same") return true;
  if (t.pair_type == "O-O") return false;
  return (choice == "left") == t.first_on_left;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, int(ms));
  return out;
}

/// Study state plus its journal. All mutations go through one writer lock and
/// are appended (and fsync'ed) to the journal before they become visible.
class StudyService {
 public:
  using Clock = std::function<std::string()>;

  /// Empty journal path keeps everything in memory.
  explicit StudyService(std::string journal_path = {}, Clock clock = utc_now)
      : journal_path_(std::move(journal_path)), clock_(std::move(clock)) {
    if (!journal_path_.empty()) {
      replay();
      fd_ = ::open(journal_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
      if (fd_ < 0) fail("cannot open journal ", journal_path_, " for appending");
    }
  }
  ~StudyService() {
    if (fd_ >= 0) ::close(fd_);
  }
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  std::string create_study(const StudyConfig& cfg) {
    cfg.validate();
    std::unique_lock lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "study-%04zu", studies_.size() + 1);
    const std::string id = buf;
    append(json{{"type", "study"}, {"study_id", id}, {"config", cfg}, {"timestamp", clock_()}});
    apply_study(id, cfg);
    return id;
  }

  const StudyConfig& config(const std::string& study) const {
    std::shared_lock lock(mu_);
    return find_study(study).cfg;
  }

  std::vector<std::string> study_ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : studies_) out.push_back(k);
    return out;
  }

  /// The session's full schedule; opening a session is journaled once.
  std::vector<Task> open_session(const std::string& study, const std::string& session) {
    if (session.empty() || session.size() > 128) reject(400, "session id must have 1..128 characters");
    {
      std::shared_lock lock(mu_);
      const auto& st = find_study(study);
      if (auto it = st.sessions.find(session); it != st.sessions.end()) return it->second.tasks;
    }
    std::unique_lock lock(mu_);
    auto& st = find_study(study);
    if (auto it = st.sessions.find(session); it != st.sessions.end()) return it->second.tasks;
    append(json{{"type", "session"}, {"study_id", study}, {"session_id", session}, {"timestamp", clock_()}});
    return apply_session(st, session).tasks;
  }

  /// First unanswered task of the session, or nullopt when it is complete.
  std::optional<Task> next_task(const std::string& study, const std::string& session) {
    open_session(study, session);
    std::shared_lock lock(mu_);
    const auto& ss = find_study(study).sessions.at(session);
    for (const auto& t : ss.tasks)
      if (!ss.answers.count(t.id)) return t;
    return std::nullopt;
  }

  std::pair<int, int> progress(const std::string& study, const std::string& session) const {
    std::shared_lock lock(mu_);
    const auto& ss = find_session(find_study(study), session);
    return {int(ss.answers.size()), int(ss.tasks.size())};
  }

  const Task& task(const std::string& study, const std::string& session, const std::string& task_id) const {
    std::shared_lock lock(mu_);
    return find_task(find_session(find_study(study), session), task_id);
  }

  /// Stores a judgment. Returns false when the identical choice was already
  /// stored; a different choice for an answered task is a 409.
  bool submit(const std::string& study, const std::string& session, const std::string& task_id,
              const std::string& choice) {
    std::unique_lock lock(mu_);
    auto& st = find_study(study);
    auto& ss = find_session(st, session);
    const Task& t = find_task(ss, task_id);
    check_choice(t, choice);
    if (auto it = ss.answers.find(task_id); it != ss.answers.end()) {
      if (it->second.choice == choice) return false;
      reject(409, "task " + task_id + " of session " + session + " already answered with '" + it->second.choice + "'");
    }
    Judgment j{study, session, task_id, choice, clock_()};
    json rec = j;
    rec["type"] = "judgment";
    append(rec);
    apply_judgment(j);
    return true;
  }

  StudyResults results(const std::string& study) const {
    std::shared_lock lock(mu_);
    const auto& st = find_study(study);
    StudyResults r;
    r.study_id = study;
    r.with_audio = st.cfg.with_audio;
    r.sessions = int(st.sessions.size());
    auto init = [&](GroupMetrics& g) {
      for (const auto& p : st.cfg.pair_types) g.pairs[p];
    };
    init(r.overall);
    for (const auto& ph : st.cfg.phrases)
      if (!ph.group.empty() && !r.groups.count(ph.group)) init(r.groups[ph.group]);
    for (const auto& [sid, ss] : st.sessions) {
      for (const auto& t : ss.tasks) {
        auto it = ss.answers.find(t.id);
        if (it == ss.answers.end()) continue;
        ++r.judgments;
        const std::string& group = st.cfg.phrases[t.phrase].group;
        std::vector<GroupMetrics*> targets{&r.overall};
        if (!group.empty()) targets.push_back(&r.groups[group]);
        for (auto* g : targets) {
          Cell& c = t.kind == TaskKind::Phrase ? g->phrase : g->pairs[t.pair_type];
          ++c.total;
          if (t.kind == TaskKind::Phrase)
            c.favourable += std::stoi(it->second.choice) == t.correct;
          else
            c.favourable += favourable(t, it->second.choice);
        }
      }
    }
    return r;
  }

  const std::string& journal_path() const { return journal_path_; }

 private:
  struct Session {
    std::vector<Task> tasks;
    std::map<std::string, Judgment> answers;
  };
  struct Study {
    StudyConfig cfg;
    std::map<std::string, Session> sessions;
  };

  const Study& find_study(const std::string& id) const {
    auto it = studies_.find(id);
    if (it == studies_.end()) reject(404, "unknown study '" + id + "'");
    return it->second;
  }
  Study& find_study(const std::string& id) { return const_cast<Study&>(std::as_const(*this).find_study(id)); }

  static const Session& find_session(const Study& st, const std::string& sid) {
    auto it = st.sessions.find(sid);
    if (it == st.sessions.end()) reject(404, "unknown session '" + sid + "'");
    return it->second;
  }
  static Session& find_session(Study& st, const std::string& sid) {
    return const_cast<Session&>(find_session(std::as_const(st), sid));
  }

  static const Task& find_task(const Session& ss, const std::string& tid) {
    for (const auto& t : ss.tasks)
      if (t.id == tid) return t;
    reject(404, "unknown task '" + tid + "'");
  }

  static void check_choice(const Task& t, const std::string& choice) {
    if (t.kind == TaskKind::Comparison) {
      if (choice != "left" && choice != "right" && choice != "same")
        reject(400, "choice for a comparison task must be left, right or same, got '" + choice + "'");
      return;
    }
    if (choice.size() != 1 || choice[0] < '0' || choice[0] > '3')
      reject(400, "choice for a phrase task must be an option index 0..3, got '" + choice + "'");
  }

  void apply_study(const std::string& id, const StudyConfig& cfg) { studies_[id].cfg = cfg; }

  Session& apply_session(Study& st, const std::string& sid) {
    auto& ss = st.sessions[sid];
    ss.tasks = schedule(st.cfg, sid);
    return ss;
  }

  void apply_judgment(const Judgment& j) {
    auto& ss = find_session(find_study(j.study_id), j.session_id);
    find_task(ss, j.task_id);
    ss.answers[j.task_id] = j;
  }

  void append(const json& rec) {
    if (journal_path_.empty()) return;
    const std::string line = rec.dump() + "\n";
    size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) fail("write to journal ", journal_path_, " failed");
      off += size_t(n);
    }
    if (::fsync(fd_) != 0) fail("fsync of journal ", journal_path_, " failed");
  }

  /// Re-applies every journal record. A final line without a newline (torn
  /// write) is ignored; anything else malformed is an error.
  void replay() {
    std::ifstream in(journal_path_, std::ios::binary);
    if (!in) return;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    int line_no = 0;
    while (pos < content.size()) {
      const size_t nl = content.find('\n', pos);
      ++line_no;
      if (nl == std::string::npos) break;
      const std::string line = content.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      try {
        const json rec = json::parse(line);
        const std::string type = rec.at("type").get<std::string>();
        if (type == "study") {
          auto cfg = rec.at("config").get<StudyConfig>();
          apply_study(rec.at("study_id").get<std::string>(), cfg);
        } else if (type == "session") {
          apply_session(find_study(rec.at("study_id").get<std::string>()), rec.at("session_id").get<std::string>());
        } else if (type == "judgment") {
          apply_judgment(rec.get<Judgment>());
        } else {
          fail("unknown record type '", type, "'");
        }
      } catch (const std::exception& e) {
        fail(journal_path_, ":", line_no, ": ", e.what());
      }
    }
    if (pos < content.size()) {
      // torn tail: drop it so later appends start on a fresh line
      std::filesystem::resize_file(journal_path_, pos);
    }
  }

  std::string journal_path_;
  Clock clock_;
  int fd_ = -1;
  mutable std::shared_mutex mu_;
  std::map<std::string, Study> studies_;
};

}  // namespace mvlip::study
