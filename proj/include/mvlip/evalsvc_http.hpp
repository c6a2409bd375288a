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

// HTTP front end of the study service.
//
//   POST /studies                                   create a study
//   GET  /studies                                   list study ids
//   GET  /studies/{id}/sessions/{sid}/next          next unanswered task
//   GET  /studies/{id}/sessions/{sid}/tasks/{tid}/media/{left|right|video}
//   POST /judgments                                 submit a judgment
//   GET  /studies/{id}/results                      aggregate metrics
//   GET  /media/...                                 static media files
//
// Condition labels never leave the server: task media is addressed by slot.

#include <filesystem>
#include <fstream>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mvlip/evalsvc.hpp"

namespace mvlip::study {

struct ServerOptions {
  std::string media_root;        // directory holding the study media; may be empty
  std::string static_root;       // optional directory served at "/" (rater UI build)
  std::string cors_origin = "*";
};

inline std::string media_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mp4") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".ogv") return "video/ogg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".png") return "image/png";
  if (ext == ".json") return "application/json";
  return "application/octet-stream";
}

class StudyServer {
 public:
  StudyServer(StudyService& svc, ServerOptions opts) : svc_(svc), opts_(std::move(opts)) { routes(); }

  /// Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port) {
    if (port == 0) port = srv_.bind_to_any_port(host);
    else if (!srv_.bind_to_port(host, port)) port = -1;
    if (port < 0) fail("cannot bind ", host, ":", port);
    return port;
  }
  bool listen() { return srv_.listen_after_bind(); }
  void stop() { srv_.stop(); }
  void wait_until_ready() const { srv_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const StudyError& e) {
        send_json(res, e.status, json{{"error", e.what()}});
      } catch (const json::exception& e) {
        send_json(res, 400, json{{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const Error& e) {
        send_json(res, 400, json{{"error", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, json{{"error", e.what()}});
      }
    };
  }

  std::string task_url(const std::string& study, const std::string& session, const Task& t,
                       const char* slot) const {
    return "/studies/" + study + "/sessions/" + session + "/tasks/" + t.id + "/media/" + slot;
  }

  json task_json(const std::string& study, const std::string& session, const Task& t) {
    const auto [answered, total] = svc_.progress(study, session);
    json j{{"study_id", study}, {"session_id", session}, {"task_id", t.id}, {"done", false},
           {"answered", answered}, {"total", total}};
    if (t.kind == TaskKind::Comparison) {
      j["kind"] = "comparison";
      j["with_audio"] = svc_.config(study).with_audio;
      j["left_url"] = task_url(study, session, t, "left");
      j["right_url"] = task_url(study, session, t, "right");
      j["choices"] = {"left", "right", "same"};
    } else {
      j["kind"] = "phrase";
      j["with_audio"] = false;
      j["video_url"] = task_url(study, session, t, "video");
      j["options"] = t.options;
    }
    return j;
  }

  std::filesystem::path resolve_media(const std::string& rel) const {
    namespace fs = std::filesystem;
    if (opts_.media_root.empty()) reject(404, "no media root configured");
    const fs::path root = fs::weakly_canonical(opts_.media_root);
    const fs::path p = fs::weakly_canonical(root / rel);
    const auto mism = std::mismatch(root.begin(), root.end(), p.begin(), p.end());
    if (mism.first != root.end()) reject(403, "media path escapes the media root");
    if (!fs::is_regular_file(p)) reject(404, "media file not found");
    return p;
  }

  void routes() {
    srv_.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
    srv_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv_.Post("/studies", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const StudyConfig cfg = parse_study_config(json::parse(req.body));
      const std::string id = svc_.create_study(cfg);
      const size_t n = cfg.phrases.size();
      send_json(res, 201, json{{"study_id", id},
                               {"comparison_tasks", n * cfg.pair_types.size()},
                               {"phrase_tasks", n},
                               {"tasks_per_session", n * (cfg.pair_types.size() + 1)}});
    }));

    srv_.Get("/studies", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"studies", svc_.study_ids()}});
    }));

    srv_.Get(R"(/studies/([^/]+)/sessions/([^/]+)/next)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string study = req.matches[1], session = req.matches[2];
               const auto t = svc_.next_task(study, session);
               if (!t) {
                 const auto [answered, total] = svc_.progress(study, session);
                 send_json(res, 200, json{{"study_id", study}, {"session_id", session}, {"done", true},
                                          {"answered", answered}, {"total", total}});
                 return;
               }
               send_json(res, 200, task_json(study, session, *t));
             }));

    srv_.Get(R"(/studies/([^/]+)/sessions/([^/]+)/tasks/([^/]+)/media/(left|right|video))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string study = req.matches[1], session = req.matches[2];
               const std::string tid = req.matches[3], slot = req.matches[4];
               const Task& t = svc_.task(study, session, tid);
               const auto& ph = svc_.config(study).phrases[t.phrase];
               std::string cond;
               if (t.kind == TaskKind::Phrase) {
                 if (slot != "video") reject(404, "phrase tasks only have a video slot");
                 cond = "O";
               } else {
                 if (slot == "video") reject(404, "comparison tasks have left and right slots");
                 cond = slot == "left" ? t.left_condition() : t.right_condition();
               }
               const auto path = resolve_media(ph.media.at(cond));
               std::ifstream in(path, std::ios::binary);
               std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
               res.set_header("Cache-Control", "no-store");
               res.set_content(std::move(data), media_type(path));
             }));

    srv_.Post("/judgments", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      for (const char* k : {"study_id", "session_id", "task_id", "choice"})
        if (!body.contains(k)) reject(400, std::string("missing field '") + k + "'");
      if (!body.value("playback_complete", false))
        reject(422, "judgment rejected: playback_complete must be true");
      const json& c = body.at("choice");
      const std::string choice = c.is_number_integer() ? std::to_string(c.get<long long>()) : c.get<std::string>();
      const std::string study = body.at("study_id"), session = body.at("session_id"), tid = body.at("task_id");
      const bool stored = svc_.submit(study, session, tid, choice);
      const auto [answered, total] = svc_.progress(study, session);
      send_json(res, stored ? 201 : 200,
                json{{"status", stored ? "stored" : "duplicate"}, {"task_id", tid}, {"answered", answered},
                     {"total", total}});
    }));

    srv_.Get(R"(/studies/([^/]+)/results)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, json(svc_.results(req.matches[1])));
    }));

    if (!opts_.media_root.empty() && !srv_.set_mount_point("/media", opts_.media_root))
      fail("media root ", opts_.media_root, " is not a directory");
    if (!opts_.static_root.empty() && !srv_.set_mount_point("/", opts_.static_root))
      fail("static root ", opts_.static_root, " is not a directory");
  }

  StudyService& svc_;
  ServerOptions opts_;
  httplib::Server srv_;
};

}  // namespace mvlip::study
