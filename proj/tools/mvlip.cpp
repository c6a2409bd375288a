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


// mvlip: command line front end.
//
//   mvlip gen-data | train | decode | attend | compress | score | study-serve
//
// Every invocation writes into runs/<timestamp>-<confighash>/ (see --runs-dir)
// and records the resolved configuration there as run.json.

#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvlip/analysis.hpp"
#include "mvlip/compressor.hpp"
#include "mvlip/evalsvc_http.hpp"
#include "mvlip/metrics.hpp"
#include "mvlip/recognizer.hpp"
#include "mvlip/synthetic.hpp"
#include "mvlip/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace mvlip;

namespace {

struct Common {
  std::string runs_dir = "runs";
  uint64_t seed = 1;
};

std::string hex8(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08llx", (unsigned long long)(h & 0xffffffffull));
  return buf;
}

/// Creates runs/<UTC timestamp>-<hash of config>/ and writes run.json.
fs::path make_run_dir(const Common& c, const std::string& sub, const ordered_json& config) {
  ordered_json run;
  run["subcommand"] = sub;
  run["seed"] = c.seed;
  run["config"] = config;
  const std::string hash = hex8(study::fnv1a(run.dump()));
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  fs::path dir = fs::path(c.runs_dir) / (std::string(stamp) + "-" + hash);
  for (int k = 2; fs::exists(dir); ++k)
    dir = fs::path(c.runs_dir) / (std::string(stamp) + "-" + hash + "-" + std::to_string(k));
  fs::create_directories(dir);
  std::ofstream(dir / "run.json") << run.dump(2) << '\n';
  std::cerr << "run directory: " << dir.string() << '\n';
  return dir;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) fail("cannot write ", p.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::string& p) {
  std::ifstream in(p);
  if (!in) fail("cannot open ", p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(p, ": ", e.what());
  }
}

std::vector<json> read_jsonl(const std::string& p) {
  std::ifstream in(p);
  if (!in) fail("cannot open ", p);
  std::vector<json> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(p, ":", n, ": ", e.what());
    }
  }
  return out;
}

std::vector<const ManifestRecord*> select_records(const DatasetManifest& m, const std::string& split) {
  if (split.empty() || split == "all") {
    std::vector<const ManifestRecord*> all;
    for (const auto& r : m.records) all.push_back(&r);
    return all;
  }
  auto recs = m.split(split);
  if (recs.empty()) fail("manifest has no records in split '", split, "'");
  return recs;
}

// ---------------------------------------------------------------- flags

void add_model_flags(CLI::App* app, ModelConfig& mc, std::string& scorer) {
  app->add_option("--height", mc.height, "frame height")->capture_default_str();
  app->add_option("--width", mc.width, "frame width")->capture_default_str();
  app->add_option("--conv-channels", mc.conv_channels, "output channels per conv layer")->delimiter(',')->capture_default_str();
  app->add_option("--cell-size", mc.cell_size, "LSTM cell size")->capture_default_str();
  app->add_option("--att-dim", mc.att_dim, "temporal attention dimension")->capture_default_str();
  app->add_option("--fusion-dim", mc.fusion_dim, "view attention dimension")->capture_default_str();
  app->add_option("--embed-dim", mc.embed_dim, "label embedding size")->capture_default_str();
  app->add_option("--views", mc.views, "camera angles used by the model")->delimiter(',')->capture_default_str();
  app->add_option("--scorer", scorer, "temporal attention scorer")
      ->check(CLI::IsMember({"additive", "multiplicative", "location_aware"}))
      ->capture_default_str();
  app->add_option("--loc-kernel", mc.loc_kernel, "location-aware kernel width")->capture_default_str();
  app->add_option("--loc-channels", mc.loc_channels, "location-aware filters")->capture_default_str();
}

void add_decode_flags(CLI::App* app, DecodeConfig& dc, const std::string& weight_flag) {
  app->add_option("--beam-width,--beam", dc.beam_width, "beam width")->capture_default_str();
  app->add_option(weight_flag, dc.ctc_weight, "CTC weight lambda of the joint score")->capture_default_str();
  app->add_option("--max-len", dc.max_len, "maximum output length (-1: number of frames)")->capture_default_str();
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  SyntheticConfig cfg;
  std::vector<std::string> vocab;
};

ordered_json synthetic_json(const SyntheticConfig& c) {
  ordered_json j;
  j["num_clips"] = c.num_clips;
  j["views"] = c.views;
  j["t_min"] = c.t_min;
  j["t_max"] = c.t_max;
  j["vocab"] = c.vocab;
  j["noise_level"] = c.noise_level;
  j["height"] = c.height;
  j["width"] = c.width;
  j["val_fraction"] = c.val_fraction;
  j["test_fraction"] = c.test_fraction;
  j["word_break_prob"] = c.word_break_prob;
  j["shape_table"] = c.shape_table;
  return j;
}

int run_gen_data(const Common& c, GenArgs& a) {
  if (!a.vocab.empty()) a.cfg.vocab = a.vocab;
  a.cfg.seed = c.seed;
  a.cfg.validate();
  const auto dir = make_run_dir(c, "gen-data", synthetic_json(a.cfg));
  const auto m = generate_synthetic(a.cfg, dir / "data");
  std::cout << (dir / "data" / "manifest.jsonl").string() << '\n';
  std::cerr << "wrote " << m.records.size() << " clips\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest, train_split = "train", val_split = "val";
  ModelConfig model;
  std::string scorer = "location_aware";
  TrainConfig train;
};

int run_train(const Common& c, TrainArgs& a) {
  a.model.scorer = scorer_from_string(a.scorer);
  a.train.seed = c.seed;
  a.model.dropout = a.train.dropout;
  a.model.validate();
  a.train.validate();
  ordered_json cfg;
  cfg["manifest"] = fs::absolute(a.manifest).string();
  cfg["train_split"] = a.train_split;
  cfg["val_split"] = a.val_split;
  cfg["model"] = json(a.model);
  cfg["train"] = json(a.train);
  const auto m = load_manifest(a.manifest);
  const auto tr = load_examples(m, select_records(m, a.train_split));
  std::vector<TrainingExample> va;
  if (!a.val_split.empty() && a.val_split != "none") {
    const auto recs = m.split(a.val_split);
    if (recs.empty()) std::cerr << "warning: no '" << a.val_split << "' records; selecting on the training set\n";
    va = load_examples(m, recs);
  }
  const auto dir = make_run_dir(c, "train", cfg);
  Model<float> model(a.model, c.seed);
  std::ofstream csv(dir / "train_log.csv");
  const auto res = train(model, tr, va, a.train, &csv, [](const EpochStats& s) {
    std::cerr << "epoch " << s.epoch << " train_loss " << s.train_loss << " val_ver " << s.val_ver
              << (s.improved ? " *" : "") << '\n';
  });
  json extra;
  extra["train"] = a.train;
  extra["best_epoch"] = res.best_epoch;
  extra["best_val_ver"] = res.best_val_ver;
  model.save((dir / "model.ckpt").string(), extra);
  ordered_json summary;
  summary["best_epoch"] = res.best_epoch;
  summary["best_val_ver"] = res.best_val_ver;
  summary["epochs_run"] = res.history.size();
  summary["stopped_early"] = res.stopped_early;
  write_json(dir / "summary.json", summary);
  std::cout << (dir / "model.ckpt").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- decode

struct DecodeArgs {
  std::string ckpt, manifest, split = "all";
  DecodeConfig decode;
};

int run_decode(const Common& c, DecodeArgs& a) {
  a.decode.validate();
  ordered_json cfg;
  cfg["ckpt"] = fs::absolute(a.ckpt).string();
  cfg["manifest"] = fs::absolute(a.manifest).string();
  cfg["split"] = a.split;
  cfg["decode"] = json(a.decode);
  auto model = Model<float>::load(a.ckpt);
  const auto m = load_manifest(a.manifest);
  const auto recs = select_records(m, a.split);
  const auto dir = make_run_dir(c, "decode", cfg);
  fs::create_directories(dir / "traces");
  std::ofstream hyp(dir / "hypotheses.jsonl");
  std::vector<std::pair<VisemeSequence, VisemeSequence>> pairs;
  for (const auto* r : recs) {
    const auto clip = load_clip(m, *r);
    const auto res = recognize(model, clip, a.decode);
    for (const auto& w : res.warnings) std::cerr << "warning: " << r->clip_id << ": " << w << '\n';
    ordered_json line;
    line["clip_id"] = r->clip_id;
    line["visemes"] = res.visemes;
    line["joint"] = res.joint;
    line["att_logp"] = res.att_logp;
    line["ctc_prefix_logp"] = res.ctc_prefix_logp;
    hyp << line.dump() << '\n';
    save_trace((dir / "traces" / (r->clip_id + ".json")).string(), res.trace);
    if (!r->transcript.empty()) pairs.emplace_back(res.visemes, r->transcript);
  }
  if (!pairs.empty()) {
    const auto rep = evaluate(pairs);
    write_json(dir / "report.json", report_to_json(rep));
    std::cerr << "VER " << rep.ver << " over " << rep.utterances << " utterances\n";
  }
  std::cout << (dir / "hypotheses.jsonl").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- score

std::map<std::string, VisemeSequence> load_sequences(const std::string& path) {
  std::map<std::string, VisemeSequence> out;
  for (const auto& j : read_jsonl(path)) {
    const std::string id = j.at("clip_id").get<std::string>();
    const char* key = j.contains("visemes") ? "visemes" : "transcript";
    if (!j.contains(key)) fail(path, ": record ", id, " has neither 'visemes' nor 'transcript'");
    if (!out.emplace(id, j.at(key).get<VisemeSequence>()).second) fail(path, ": duplicate clip_id ", id);
  }
  return out;
}

struct ScoreArgs {
  std::string hyp, ref;
};

int run_score(const Common& c, ScoreArgs& a) {
  ordered_json cfg;
  cfg["hyp"] = fs::absolute(a.hyp).string();
  cfg["ref"] = fs::absolute(a.ref).string();
  const auto hyps = load_sequences(a.hyp);
  const auto refs = load_sequences(a.ref);
  std::vector<std::pair<VisemeSequence, VisemeSequence>> pairs;
  for (const auto& [id, h] : hyps) {
    auto it = refs.find(id);
    if (it == refs.end()) fail("no reference for clip ", id);
    pairs.emplace_back(h, it->second);
  }
  if (pairs.empty()) fail("no hypotheses in ", a.hyp);
  const auto dir = make_run_dir(c, "score", cfg);
  const auto rep = evaluate(pairs);
  write_json(dir / "report.json", report_to_json(rep));
  std::ofstream conf(dir / "confusion.csv");
  write_confusion_csv(conf, rep);
  std::cout << "VER " << rep.ver << " (S " << rep.substitutions << " D " << rep.deletions << " I " << rep.insertions
            << " N " << rep.ref_length << ", " << rep.utterances << " utterances)\n";
  return 0;
}

// ---------------------------------------------------------------- attend

struct AttendArgs {
  std::string traces, manifest;
  double fraction = 0.3, threshold = 0.5;
};

std::vector<fs::path> json_files(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(dir, " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) fail("no .json files in ", dir);
  return out;
}

int run_attend(const Common& c, AttendArgs& a) {
  top_count(a.fraction, 1);
  if (!(a.threshold > 0 && a.threshold < 1)) fail("--threshold must lie in (0,1)");
  ordered_json cfg;
  cfg["traces"] = fs::absolute(a.traces).string();
  cfg["manifest"] = a.manifest.empty() ? "" : fs::absolute(a.manifest).string();
  cfg["fraction"] = a.fraction;
  cfg["threshold"] = a.threshold;
  std::optional<DatasetManifest> m;
  if (!a.manifest.empty()) m = load_manifest(a.manifest);
  std::vector<AttentionTrace> traces;
  for (const auto& p : json_files(a.traces)) traces.push_back(load_trace(p.string()));
  const auto dir = make_run_dir(c, "attend", cfg);
  fs::create_directories(dir / "importance");
  for (const auto& tr : traces) {
    const auto fi = cumulative_attention(tr);
    const auto top = top_frames(fi, a.fraction);
    std::vector<std::string> vis;
    if (m) {
      if (const auto* r = m->find(tr.clip_id); r && r->alignment)
        vis = important_visemes(top, load_record_alignment(*m, *r, fi.T()));
    }
    write_json(dir / "importance" / (tr.clip_id + ".json"), importance_to_json(fi, top, vis));
  }
  std::ofstream csv(dir / "view_importance.csv");
  write_view_importance_csv(csv, view_importance(traces, a.threshold));
  std::cout << (dir / "importance").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- compress

struct CompressArgs {
  std::string manifest, importance, mode = "both";
};

int run_compress(const Common& c, CompressArgs& a) {
  ordered_json cfg;
  cfg["manifest"] = fs::absolute(a.manifest).string();
  cfg["importance"] = fs::absolute(a.importance).string();
  cfg["mode"] = a.mode;
  const auto m = load_manifest(a.manifest);
  std::vector<FrameImportance> fis;
  for (const auto& p : json_files(a.importance)) fis.push_back(importance_from_json(read_json(p.string())));
  const auto dir = make_run_dir(c, "compress", cfg);
  long long orig = 0, kept_att = 0, kept_uni = 0;
  ordered_json clips = ordered_json::array();
  for (const auto& fi : fis) {
    const auto* r = m.find(fi.clip_id);
    if (!r) fail("clip ", fi.clip_id, " is not in the manifest");
    const auto clip = load_clip(m, *r);
    ordered_json entry;
    entry["clip_id"] = fi.clip_id;
    for (const auto& [angle, frames] : clip.views) {
      if (frames.T != fi.T()) fail("clip ", fi.clip_id, " view ", angle, " has ", frames.T, " frames, importance has ", fi.T());
      const std::string stem = fi.clip_id + "_v" + std::to_string(angle);
      const auto p = plan(fi, frames.H, frames.W);
      const double factor = compression_factor(p);
      orig += p.original_pixels();
      if (a.mode != "uniform") {
        fs::create_directories(dir / "attention");
        save_tensor((dir / "attention" / (stem + ".vlns")).string(), apply_plan(frames, p));
        write_json(dir / "attention" / (stem + ".plan.json"), plan_to_json(p));
        kept_att += p.kept_pixels();
      }
      if (a.mode != "attention") {
        fs::create_directories(dir / "uniform");
        const auto u = uniform_baseline(frames, factor, fi.clip_id);
        save_tensor((dir / "uniform" / (stem + ".vlns")).string(), u.frames);
        write_json(dir / "uniform" / (stem + ".plan.json"), plan_to_json(u.plan));
        kept_uni += u.plan.kept_pixels();
      }
      entry["factor"] = factor;
    }
    clips.push_back(entry);
  }
  ordered_json summary;
  summary["clips"] = clips;
  if (a.mode != "uniform") summary["attention_factor"] = orig ? 1.0 - double(kept_att) / double(orig) : 0.0;
  if (a.mode != "attention") summary["uniform_factor"] = orig ? 1.0 - double(kept_uni) / double(orig) : 0.0;
  write_json(dir / "summary.json", summary);
  if (summary.contains("attention_factor"))
    std::cout << "attention compression factor " << summary["attention_factor"].get<double>() << '\n';
  if (summary.contains("uniform_factor"))
    std::cout << "uniform compression factor " << summary["uniform_factor"].get<double>() << '\n';
  return 0;
}

// ---------------------------------------------------------------- study-serve

struct ServeArgs {
  std::string host = "127.0.0.1", journal, media_root, static_root, cors_origin = "*";
  int port = 8080;
};

study::StudyServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_study_serve(const Common& c, ServeArgs& a) {
  ordered_json cfg;
  cfg["host"] = a.host;
  cfg["port"] = a.port;
  cfg["journal"] = a.journal;
  cfg["media_root"] = a.media_root;
  cfg["static_root"] = a.static_root;
  cfg["cors_origin"] = a.cors_origin;
  const auto dir = make_run_dir(c, "study-serve", cfg);
  const std::string journal = a.journal.empty() ? (dir / "journal.jsonl").string() : a.journal;
  study::StudyService svc(journal);
  study::StudyServer server(svc, {a.media_root, a.static_root, a.cors_origin});
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << a.host << ':' << port << " journal " << journal << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view visual speech recognition toolkit", "mvlip"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "random seed")->capture_default_str();
    sub->add_option("--runs-dir", common.runs_dir, "root of run directories")->capture_default_str();
  };

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "render a synthetic multi-view dataset");
  add_common(gen_cmd);
  gen_cmd->add_option("--num-clips", gen.cfg.num_clips)->capture_default_str();
  gen_cmd->add_option("--views", gen.cfg.views)->delimiter(',')->capture_default_str();
  gen_cmd->add_option("--t-min", gen.cfg.t_min)->capture_default_str();
  gen_cmd->add_option("--t-max", gen.cfg.t_max)->capture_default_str();
  gen_cmd->add_option("--vocab", gen.vocab, "viseme subset (default: all classes)")->delimiter(',');
  gen_cmd->add_option("--noise-level", gen.cfg.noise_level)->capture_default_str();
  gen_cmd->add_option("--height", gen.cfg.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.cfg.width)->capture_default_str();
  gen_cmd->add_option("--val-fraction", gen.cfg.val_fraction)->capture_default_str();
  gen_cmd->add_option("--test-fraction", gen.cfg.test_fraction)->capture_default_str();
  gen_cmd->add_option("--word-break-prob", gen.cfg.word_break_prob)->capture_default_str();
  gen_cmd->add_option("--shape-table", gen.cfg.shape_table)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a recognizer");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", tr.manifest)->required();
  train_cmd->add_option("--train-split", tr.train_split)->capture_default_str();
  train_cmd->add_option("--val-split", tr.val_split, "split used for model selection ('none': training set)")
      ->capture_default_str();
  add_model_flags(train_cmd, tr.model, tr.scorer);
  train_cmd->add_option("--ctc-weight", tr.train.ctc_weight, "alpha of the hybrid loss")->capture_default_str();
  train_cmd->add_option("--learning-rate", tr.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--beta1", tr.train.beta1)->capture_default_str();
  train_cmd->add_option("--beta2", tr.train.beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", tr.train.adam_eps)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train_cmd->add_option("--label-smoothing", tr.train.label_smoothing)->capture_default_str();
  train_cmd->add_option("--dropout", tr.train.dropout)->capture_default_str();
  train_cmd->add_option("--patience", tr.train.patience)->capture_default_str();
  train_cmd->add_option("--grad-clip", tr.train.grad_clip)->capture_default_str();
  add_decode_flags(train_cmd, tr.train.decode, "--decode-ctc-weight");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "joint CTC/attention decoding with attention traces");
  add_common(dec_cmd);
  dec_cmd->add_option("--ckpt", dec.ckpt)->required();
  dec_cmd->add_option("--manifest", dec.manifest)->required();
  dec_cmd->add_option("--split", dec.split, "split to decode ('all' for every record)")->capture_default_str();
  add_decode_flags(dec_cmd, dec.decode, "--ctc-weight");

  AttendArgs att;
  auto* att_cmd = app.add_subcommand("attend", "frame, viseme and view importance from attention traces");
  add_common(att_cmd);
  att_cmd->add_option("--traces", att.traces, "directory of trace files")->required();
  att_cmd->add_option("--manifest", att.manifest, "manifest with frame alignments");
  att_cmd->add_option("--fraction", att.fraction, "fraction of frames kept as important")->capture_default_str();
  att_cmd->add_option("--threshold", att.threshold, "view significance threshold")->capture_default_str();

  CompressArgs comp;
  auto* comp_cmd = app.add_subcommand("compress", "attention-guided and uniform frame downscaling");
  add_common(comp_cmd);
  comp_cmd->add_option("--manifest", comp.manifest)->required();
  comp_cmd->add_option("--importance", comp.importance, "directory written by attend")->required();
  comp_cmd->add_option("--mode", comp.mode)->check(CLI::IsMember({"attention", "uniform", "both"}))->capture_default_str();

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "viseme error rate of hypotheses against references");
  add_common(score_cmd);
  score_cmd->add_option("--hyp", sc.hyp, "hypotheses JSON lines")->required();
  score_cmd->add_option("--ref", sc.ref, "references: manifest or hypotheses-style JSON lines")->required();

  ServeArgs srv;
  auto* serve_cmd = app.add_subcommand("study-serve", "serve the human verification study");
  add_common(serve_cmd);
  serve_cmd->add_option("--host", srv.host)->capture_default_str();
  serve_cmd->add_option("--port", srv.port, "0 picks a free port")->capture_default_str();
  serve_cmd->add_option("--journal", srv.journal, "journal file (default: inside the run directory)");
  serve_cmd->add_option("--media-root", srv.media_root);
  serve_cmd->add_option("--static-root", srv.static_root, "directory served at /");
  serve_cmd->add_option("--cors-origin", srv.cors_origin)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "gen-data") return run_gen_data(common, gen);
    if (name == "train") return run_train(common, tr);
    if (name == "decode") return run_decode(common, dec);
    if (name == "attend") return run_attend(common, att);
    if (name == "compress") return run_compress(common, comp);
    if (name == "score") return run_score(common, sc);
    if (name == "study-serve") return run_study_serve(common, srv);
  } catch (const std::exception& e) {
    std::cerr << json{{"status", "error"}, {"subcommand", name}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 1;
}
