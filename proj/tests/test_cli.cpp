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


#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("mvlip_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Outcome run(const std::string& args) {
  static int n = 0;
  const fs::path err = work_dir() / ("stderr_" + std::to_string(n++));
  const std::string cmd = std::string(MVLIP_CLI) + " " + args + " 2>" + err.string();
  Outcome o;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return o;
  std::array<char, 4096> buf;
  size_t k;
  while ((k = std::fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), k);
  const int status = ::pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.err = slurp(err);
  return o;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string runs() { return "--runs-dir " + (work_dir() / "runs").string(); }

const std::string kTinyModel =
    " --height 16 --width 16 --conv-channels 2,3 --cell-size 4 --att-dim 4 --fusion-dim 3 --embed-dim 2"
    " --views 0,90 --loc-kernel 3 --loc-channels 2";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  auto o = run("frobnicate");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("gen-data"), std::string::npos) << o.err;
  o = run("");
  EXPECT_EQ(o.code, 2);
  o = run("score --hyp a --ref b --bogus 1");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("--hyp"), std::string::npos);
  o = run("decode --manifest m");
  EXPECT_EQ(o.code, 2);
  o = run("decode --ckpt c --manifest m --beam notanumber");
  EXPECT_EQ(o.code, 2);
  o = run("train --manifest m --scorer bilinear");
  EXPECT_EQ(o.code, 2);
}

TEST(Cli, HelpExitsZero) {
  auto o = run("--help");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("study-serve"), std::string::npos);
  o = run("decode --help");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("--ctc-weight"), std::string::npos);
  EXPECT_NE(o.out.find("--seed"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsOneWithStructuredError) {
  auto o = run("score --hyp /nonexistent/h.jsonl --ref /nonexistent/r.jsonl " + runs());
  EXPECT_EQ(o.code, 1);
  const auto j = nlohmann::json::parse(trim(o.err.substr(o.err.rfind('{'))));
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["subcommand"], "score");
  EXPECT_NE(j["message"].get<std::string>().find("/nonexistent/h.jsonl"), std::string::npos);
  o = run("decode --ckpt x --manifest y --ctc-weight 1.5 " + runs());
  EXPECT_EQ(o.code, 1);
}

TEST(Cli, PipelineIsReproducible) {
  auto gen = run("gen-data --num-clips 6 --views 0,90 --height 16 --width 16 --t-min 4 --t-max 6 "
                 "--val-fraction 0.34 --seed 3 " + runs());
  ASSERT_EQ(gen.code, 0) << gen.err;
  const std::string manifest = trim(gen.out);
  ASSERT_TRUE(fs::exists(manifest));
  const auto gen_dir = fs::path(manifest).parent_path().parent_path();
  const auto run_cfg = nlohmann::json::parse(slurp(gen_dir / "run.json"));
  EXPECT_EQ(run_cfg["subcommand"], "gen-data");
  EXPECT_EQ(run_cfg["seed"], 3);
  EXPECT_EQ(run_cfg["config"]["num_clips"], 6);
  EXPECT_NE(gen_dir.filename().string().find('-'), std::string::npos);

  auto tr = run("train --manifest " + manifest + kTinyModel + " --epochs 2 --batch-size 2 --beam 2 " + runs());
  ASSERT_EQ(tr.code, 0) << tr.err;
  const std::string ckpt = trim(tr.out);
  ASSERT_TRUE(fs::exists(ckpt));
  const auto log = slurp(fs::path(ckpt).parent_path() / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,train_loss,val_ver");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const auto train_cfg = nlohmann::json::parse(slurp(fs::path(ckpt).parent_path() / "run.json"));
  EXPECT_EQ(train_cfg["config"]["train"]["epochs"], 2);
  EXPECT_EQ(train_cfg["config"]["model"]["cell_size"], 4);

  const std::string dec_args = "decode --ckpt " + ckpt + " --manifest " + manifest + " --beam 5 --ctc-weight 0.3 " + runs();
  auto d1 = run(dec_args);
  auto d2 = run(dec_args);
  ASSERT_EQ(d1.code, 0) << d1.err;
  ASSERT_EQ(d2.code, 0) << d2.err;
  const fs::path h1 = trim(d1.out), h2 = trim(d2.out);
  EXPECT_NE(h1, h2);
  EXPECT_EQ(slurp(h1), slurp(h2));
  int traces = 0;
  for (const auto& e : fs::directory_iterator(h1.parent_path() / "traces")) {
    EXPECT_EQ(slurp(e.path()), slurp(h2.parent_path() / "traces" / e.path().filename()));
    ++traces;
  }
  EXPECT_EQ(traces, 6);

  auto sc = run("score --hyp " + h1.string() + " --ref " + manifest + " " + runs());
  ASSERT_EQ(sc.code, 0) << sc.err;
  EXPECT_EQ(sc.out.rfind("VER ", 0), 0u);

  auto at = run("attend --traces " + (h1.parent_path() / "traces").string() + " --manifest " + manifest + " " + runs());
  ASSERT_EQ(at.code, 0) << at.err;
  const fs::path imp = trim(at.out);
  const auto csv = slurp(imp.parent_path() / "view_importance.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "viseme,angle,mean_weight,significant");

  auto co = run("compress --manifest " + manifest + " --importance " + imp.string() + " " + runs());
  ASSERT_EQ(co.code, 0) << co.err;
  EXPECT_NE(co.out.find("attention compression factor"), std::string::npos);
  EXPECT_NE(co.out.find("uniform compression factor"), std::string::npos);
}
