#include <cmath>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "stackvs/checkpoint.hpp"
#include "stackvs/dataset.hpp"
#include "stackvs/metrics.hpp"
#include "stackvs/tape.hpp"
#include "test_util.hpp"

using namespace stackvs;
using namespace stackvs::test;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

const char* kQuickConfig = R"({"model": {"n_stages": 2, "d_e": 8, "d_h": 16, "d_a": 16, "d_s": 8, "t_max": 6},
  "train": {"batch_size": 8, "max_epochs": 3, "scst_start": 2, "vocab_min_count": 1}, "seed": 4})";

/// A generated dataset plus a three-epoch run on it, shared by the command tests.
struct Workspace {
  ScratchDir dir{"cli"};
  std::string manifest;
  std::string ckpt;

  Workspace() {
    const Result g = run({"gen-synthetic", "--out", (dir / "data").string(), "--seed", "3"});
    REQUIRE(g.code == 0);
    manifest = g.out.substr(0, g.out.find('\n'));
    spit(dir / "cfg.json", kQuickConfig);
    const Result t =
        run({"train", "--config", (dir / "cfg.json").string(), "--data", manifest, "--out", (dir / "run").string()});
    REQUIRE(t.code == 0);
    ckpt = (dir / "run" / "epoch_0002.svsc").string();
    REQUIRE(t.out == ckpt + "\n");
  }
  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"paint"}).code == 2);
  CHECK(run({"caption", "--ckpt", "x"}).code == 2);
  CHECK(run({"train", "--config", "x", "--phase", "sideways"}).code == 2);
  CHECK(run({"train", "--config", "x", "--checkpoint-every", "0"}).code == 2);
  const Result help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("selfcheck") != std::string::npos);
  CHECK(help.out.find("corrupt-op") == std::string::npos);
}

TEST_CASE("gen-synthetic") {
  ScratchDir dir("cli_gen");
  const Result a = run({"gen-synthetic", "--out", (dir / "a").string(), "--seed", "5"});
  const Result b = run({"gen-synthetic", "--out", (dir / "b").string(), "--seed", "5"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(fs::exists(a.out.substr(0, a.out.size() - 1)));
  CHECK(directory_bytes(dir / "a") == directory_bytes(dir / "b"));
  CHECK(load_dataset(dir / "a" / "dataset.manifest.json").records.size() == 8);
  CHECK(run({"gen-synthetic", "--out", (dir / "c").string(), "--images", "0"}).code == 2);
  CHECK(run({"gen-synthetic", "--out", (dir / "c").string(), "--images", "many"}).code == 2);
}

TEST_CASE("train: logs, resume, bad inputs") {
  Workspace& w = workspace();
  std::istringstream log(slurp(w.dir / "run" / "train_log.jsonl"));
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(log, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 3);
  CHECK(lines[1]["phase"] == "xe");
  CHECK(lines[2]["phase"] == "scst");

  SUBCASE("resume continues the epoch numbering") {
    ScratchDir out("cli_resume");
    const Result r = run({"train", "--config", w.path("cfg.json"), "--data", w.manifest, "--out", out.path().string(),
                          "--resume", (w.dir / "run" / "epoch_0000.svsc").string()});
    REQUIRE(r.code == 0);
    CHECK_FALSE(fs::exists(out / "epoch_0000.svsc"));
    CHECK(load_checkpoint(out / "epoch_0001.svsc").epoch == 1);
    CHECK(r.err.find("\"epoch\":1") != std::string::npos);
  }
  SUBCASE("corrupt manifest exits 3") {
    ScratchDir bad("cli_bad");
    spit(bad / "m.json", "{\"version\": ");
    CHECK(run({"train", "--config", w.path("cfg.json"), "--data", (bad / "m.json").string(), "--out",
               (bad / "o").string()})
              .code == 3);
    CHECK(run({"train", "--config", w.path("cfg.json"), "--data", (bad / "none.json").string(), "--out",
               (bad / "o").string()})
              .code == 3);
  }
  SUBCASE("invalid config exits 2") {
    ScratchDir bad("cli_cfg");
    spit(bad / "c.json", R"({"train": {"batch_size": 0}})");
    const Result r =
        run({"train", "--config", (bad / "c.json").string(), "--data", w.manifest, "--out", (bad / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("batch_size") != std::string::npos);
    CHECK_FALSE(fs::exists(bad / "o"));
    spit(bad / "d.json", R"({"modle": {}})");
    CHECK(run({"train", "--config", (bad / "d.json").string(), "--data", w.manifest, "--out", (bad / "o").string()})
              .code == 2);
    spit(bad / "e.json", "{}");
    CHECK(run({"train", "--config", (bad / "e.json").string(), "--out", (bad / "o").string()}).code == 2);
  }
  SUBCASE("numeric failure exits 4 with context") {
    ScratchDir out("cli_nan");
    testing::gradient_corruption = testing::GradientCorruption{OpKind::Tanh, NAN};
    const Result r = run({"train", "--config", w.path("cfg.json"), "--data", w.manifest, "--out", out.path().string()});
    testing::gradient_corruption.reset();
    CHECK(r.code == 4);
    CHECK(r.err.find("epoch 0, batch 0") != std::string::npos);
  }
  SUBCASE("paths may come from the config file") {
    ScratchDir here("cli_paths");
    fs::copy(w.dir / "data", here / "data");
    auto cfg = nlohmann::json::parse(kQuickConfig);
    cfg["paths"] = {{"data", "data/dataset.manifest.json"}, {"out", "run"}};
    cfg["train"]["max_epochs"] = 1;
    spit(here / "cfg.json", cfg.dump());
    REQUIRE(run({"train", "--config", (here / "cfg.json").string()}).code == 0);
    CHECK(slurp(here / "run" / "epoch_0000.svsc") == slurp(w.dir / "run" / "epoch_0000.svsc"));
  }
}

TEST_CASE("caption") {
  Workspace& w = workspace();
  const Result a = run({"caption", "--ckpt", w.ckpt, "--data", w.manifest, "--out", w.path("a.json")});
  const Result b = run({"caption", "--ckpt", w.ckpt, "--data", w.manifest, "--out", w.path("b.json")});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(w.dir / "a.json") == slurp(w.dir / "b.json"));
  const auto j = nlohmann::json::parse(slurp(w.dir / "a.json"));
  const Dataset d = load_dataset(w.manifest);
  REQUIRE(j.size() == d.records.size());
  for (std::size_t i = 0; i < j.size(); ++i) CHECK(j[i]["image_id"] == d.records[i].image_id);

  const Result stdout_run = run({"caption", "--ckpt", w.ckpt, "--data", w.manifest});
  CHECK(stdout_run.out == slurp(w.dir / "a.json"));
  CHECK(run({"caption", "--ckpt", w.ckpt, "--data", w.manifest, "--beam", "3"}).code == 0);
  CHECK(run({"caption", "--ckpt", w.ckpt, "--data", w.manifest, "--beam", "0"}).code == 2);
  CHECK(run({"caption", "--ckpt", w.path("missing.svsc"), "--data", w.manifest}).code == 3);

  std::string bytes = slurp(w.ckpt);
  bytes[bytes.size() / 2] ^= 0x10;
  spit(w.dir / "flipped.svsc", bytes);
  CHECK(run({"caption", "--ckpt", w.path("flipped.svsc"), "--data", w.manifest}).code == 3);

  ScratchDir other("cli_other");
  const Result g = run({"gen-synthetic", "--out", other.path().string(), "--d-v", "6"});
  REQUIRE(g.code == 0);
  const Result mismatch = run({"caption", "--ckpt", w.ckpt, "--data", g.out.substr(0, g.out.size() - 1)});
  CHECK(mismatch.code == 3);
  CHECK(mismatch.err.find("d_v") != std::string::npos);
}

TEST_CASE("eval") {
  Workspace& w = workspace();
  const Dataset d = load_dataset(w.manifest);
  nlohmann::json perfect = nlohmann::json::array();
  for (const auto& r : d.records) perfect.push_back({{"image_id", r.image_id}, {"caption", r.references[0]}});
  spit(w.dir / "perfect.json", perfect.dump());
  const Result p = run({"eval", "--candidates", w.path("perfect.json"), "--references", w.manifest});
  REQUIRE(p.code == 0);
  const auto s = nlohmann::json::parse(p.out);
  for (const char* k : {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L"})
    CHECK(s[k].get<double>() == doctest::Approx(1.0));
  CHECK(s["images"] == d.records.size());

  SUBCASE("scores equal direct library calls") {
    REQUIRE(run({"caption", "--ckpt", w.ckpt, "--data", w.manifest, "--out", w.path("c.json")}).code == 0);
    const Result e = run({"eval", "--candidates", w.path("c.json"), "--references", w.manifest});
    REQUIRE(e.code == 0);
    const auto got = nlohmann::json::parse(e.out);
    const auto cands = nlohmann::json::parse(slurp(w.dir / "c.json"));
    std::vector<TokenSeq> c;
    std::vector<std::vector<TokenSeq>> refs;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      c.push_back(tokenize(cands[i]["caption"].get<std::string>()));
      refs.push_back({tokenize(d.records[i].references[0])});
    }
    const auto b = bleu(c, refs);
    for (std::size_t n = 0; n < 4; ++n) CHECK(got["BLEU-" + std::to_string(n + 1)].get<double>() == b[n]);
    double rl = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) rl += rouge_l(c[i], refs[i]);
    CHECK(got["ROUGE-L"].get<double>() == rl / static_cast<double>(c.size()));
    CHECK(got["CIDEr"].get<double>() == cider(c, refs, build_idf(refs)).mean);
  }
  SUBCASE("metric selection and reference files") {
    const Result only = run(
        {"eval", "--candidates", w.path("perfect.json"), "--references", w.path("perfect.json"), "--metrics", "cider"});
    REQUIRE(only.code == 0);
    const auto j = nlohmann::json::parse(only.out);
    CHECK_FALSE(j.contains("BLEU-1"));
    CHECK(j["CIDEr"].get<double>() == doctest::Approx(10.0));
  }
  SUBCASE("bad inputs") {
    CHECK(
        run({"eval", "--candidates", w.path("perfect.json"), "--references", w.manifest, "--metrics", "meteor"}).code ==
        2);
    spit(w.dir / "stray.json", R"([{"image_id": "nobody", "caption": "a"}])");
    CHECK(run({"eval", "--candidates", w.path("stray.json"), "--references", w.manifest}).code == 3);
    spit(w.dir / "broken.json", perfect.dump() + "x");
    CHECK(run({"eval", "--candidates", w.path("broken.json"), "--references", w.manifest}).code == 3);
    nlohmann::json twice = perfect;
    twice.push_back(perfect[0]);
    spit(w.dir / "twice.json", twice.dump());
    CHECK(run({"eval", "--candidates", w.path("twice.json"), "--references", w.manifest}).code == 3);
  }
}

TEST_CASE("trace") {
  Workspace& w = workspace();
  const Dataset d = load_dataset(w.manifest);
  const std::string id = d.records[2].image_id;
  REQUIRE(run({"trace", "--ckpt", w.ckpt, "--data", w.manifest, "--image-id", id, "--out", w.path("t1.csv")}).code ==
          0);
  REQUIRE(run({"trace", "--ckpt", w.ckpt, "--data", w.manifest, "--image-id", id, "--out", w.path("t2.csv")}).code ==
          0);
  const std::string csv = slurp(w.dir / "t1.csv");
  CHECK(csv == slurp(w.dir / "t2.csv"));

  // Rows per (stage, t) group: N_v + N_e, weights summing to one per branch.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,t,branch,index,weight,ratio");
  std::map<std::string, double> sums;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream f(line);
    std::string stage, t, branch, index, weight;
    std::getline(f, stage, ',');
    std::getline(f, t, ',');
    std::getline(f, branch, ',');
    std::getline(f, index, ',');
    std::getline(f, weight, ',');
    sums[stage + "/" + t + "/" + branch] += std::stod(weight);
  }
  CHECK(rows % (d.n_v + d.n_e) == 0);
  CHECK(rows / (d.n_v + d.n_e) == sums.size() / 2);
  for (const auto& [group, total] : sums) {
    INFO(group);
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  CHECK(
      run({"trace", "--ckpt", w.ckpt, "--data", w.manifest, "--image-id", "nobody", "--out", w.path("t3.csv")}).code ==
      3);
}

TEST_CASE("selfcheck") {
  const Result ok = run({"selfcheck", "--seed", "2"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("PASS gradient decoder cell step") != std::string::npos);

  const Result broken = run({"selfcheck", "--corrupt-op", "sigmoid"});
  CHECK(broken.code == 1);
  CHECK(broken.out.find("FAIL gradient sigmoid") != std::string::npos);
  CHECK_FALSE(testing::gradient_corruption);

  CHECK(run({"selfcheck", "--corrupt-op", "sqrt"}).code == 2);
}
