#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stackvs/checkpoint.hpp"
#include "stackvs/dataset.hpp"
#include "stackvs/errors.hpp"
#include "stackvs/metrics.hpp"
#include "stackvs/run_config.hpp"
#include "stackvs/selfcheck.hpp"
#include "stackvs/synthetic.hpp"
#include "stackvs/tape.hpp"
#include "stackvs/trace.hpp"
#include "stackvs/trainer.hpp"

namespace stackvs::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_all(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw DataError("cannot write " + path.string());
}

nlohmann::json parse_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_all(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// A checkpoint together with data it can run on.
struct Loaded {
  Checkpoint ckpt;
  Dataset data;
};

Loaded load_pair(const fs::path& ckpt_path, const fs::path& manifest) {
  Loaded l{load_checkpoint(ckpt_path), load_dataset(manifest)};
  try {
    model_config_for(l.ckpt.model.config, l.data, l.ckpt.vocab);
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + ckpt_path.string() + " does not fit " + manifest.string() + ": " + e.what());
  }
  return l;
}

// Relative paths inside a config file are taken from the file's directory.
fs::path from_config(const fs::path& config_file, const fs::path& p) {
  return p.is_absolute() ? p : config_file.parent_path() / p;
}

struct GenArgs {
  fs::path out;
  SyntheticSpec spec;
  std::uint64_t seed = 0;
};

int gen_synthetic_cmd(const GenArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path manifest = gen_synthetic(a.spec, a.seed, a.out);
  err << "wrote " << a.spec.n_images << " synthetic records\n";
  out << manifest.string() << '\n';
  return kOk;
}

struct TrainArgs {
  fs::path config;
  std::string data;
  std::string out_dir;
  std::string resume;
  std::string phase = "both";
  std::optional<std::uint64_t> seed;
  std::size_t checkpoint_every = 1;
};

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  fs::path data_path, out_dir;
  if (!a.data.empty())
    data_path = a.data;
  else if (rc.data)
    data_path = from_config(a.config, *rc.data);
  else
    throw ConfigError("no dataset: pass --data or set paths.data");
  if (!a.out_dir.empty())
    out_dir = a.out_dir;
  else if (rc.out)
    out_dir = from_config(a.config, *rc.out);
  else
    throw ConfigError("no output directory: pass --out or set paths.out");

  const Dataset data = load_dataset(data_path);
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.phase = a.phase == "xe" ? Phase::Xe : a.phase == "scst" ? Phase::Scst : Phase::Both;
  if (!a.resume.empty()) opts.resume = a.resume;
  opts.checkpoint_every = a.checkpoint_every;
  opts.on_epoch = [&](const EpochLog& e) { err << e.to_json_line() << '\n'; };
  const TrainResult r = train(rc.train, rc.model, data, opts);
  if (r.log.empty()) {
    err << "nothing to train: the requested epochs are already done\n";
    return kOk;
  }
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04zu.svsc", r.log.back().epoch);
  out << (out_dir / name).string() << '\n';
  return kOk;
}

struct CaptionArgs {
  fs::path ckpt;
  fs::path data;
  std::size_t beam = 1;
  std::string out = "-";
};

int caption_cmd(const CaptionArgs& a, std::ostream& out, std::ostream& err) {
  const Loaded l = load_pair(a.ckpt, a.data);
  ordered_json result = ordered_json::array();
  for (const auto& rec : l.data.records) {
    const Rollout r = a.beam == 1 ? decode_greedy(l.ckpt.model, rec.features, rec.attribute_ids)
                                  : decode_beam(l.ckpt.model, rec.features, rec.attribute_ids, a.beam);
    result.push_back({{"image_id", rec.image_id}, {"caption", l.ckpt.vocab.decode(r.tokens)}});
  }
  const std::string text = result.dump(2) + "\n";
  if (a.out == "-") {
    out << text;
  } else {
    write_all(a.out, text);
    err << "captioned " << l.data.records.size() << " images into " << a.out << '\n';
  }
  return kOk;
}

std::map<std::string, std::vector<std::string>> caption_table(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array of {image_id, caption}");
  std::map<std::string, std::vector<std::string>> table;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("image_id") || !e.contains("caption") || !e["image_id"].is_string() ||
        !e["caption"].is_string()) {
      throw DataError(what + ": bad entry " + e.dump());
    }
    table[e["image_id"].get<std::string>()].push_back(e["caption"].get<std::string>());
  }
  return table;
}

struct EvalArgs {
  fs::path candidates;
  fs::path references;
  std::string metrics = "bleu,rouge_l,cider";
};

int eval_cmd(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> wanted;
  std::stringstream list(a.metrics);
  for (std::string m; std::getline(list, m, ',');) {
    if (m != "bleu" && m != "rouge_l" && m != "cider") {
      throw ConfigError("unknown metric '" + m + "' (choose from bleu, rouge_l, cider)");
    }
    if (std::find(wanted.begin(), wanted.end(), m) == wanted.end()) wanted.push_back(m);
  }
  if (wanted.empty()) throw ConfigError("no metrics requested");

  // Candidates keep file order; each image may appear once.
  const nlohmann::json cand_json = parse_json_file(a.candidates);
  caption_table(cand_json, a.candidates.string());
  std::vector<std::pair<std::string, std::string>> candidates;
  std::map<std::string, bool> seen;
  for (const auto& e : cand_json) {
    const auto id = e["image_id"].get<std::string>();
    if (seen[id]) throw DataError(a.candidates.string() + ": image_id '" + id + "' appears twice");
    seen[id] = true;
    candidates.emplace_back(id, e["caption"].get<std::string>());
  }
  if (candidates.empty()) throw DataError(a.candidates.string() + ": no candidates");

  // References: a caption array, or a dataset manifest.
  std::map<std::string, std::vector<std::string>> refs;
  const nlohmann::json ref_json = parse_json_file(a.references);
  if (ref_json.is_array()) {
    refs = caption_table(ref_json, a.references.string());
  } else {
    for (const auto& r : load_dataset(a.references).records) refs[r.image_id] = r.references;
  }

  std::vector<std::vector<TokenSeq>> corpus;
  for (const auto& [id, captions] : refs) {
    std::vector<TokenSeq> t;
    for (const auto& c : captions) t.push_back(tokenize(c));
    corpus.push_back(std::move(t));
  }
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> cand_refs;
  for (const auto& [id, caption] : candidates) {
    auto it = refs.find(id);
    if (it == refs.end()) throw DataError("no references for image_id '" + id + "'");
    cands.push_back(tokenize(caption));
    std::vector<TokenSeq> r;
    for (const auto& c : it->second) r.push_back(tokenize(c));
    cand_refs.push_back(std::move(r));
  }

  ordered_json scores;
  for (const auto& m : wanted) {
    if (m == "bleu") {
      const auto b = bleu(cands, cand_refs);
      for (std::size_t n = 0; n < b.size(); ++n) scores["BLEU-" + std::to_string(n + 1)] = b[n];
    } else if (m == "rouge_l") {
      double sum = 0.0;
      for (std::size_t i = 0; i < cands.size(); ++i) sum += rouge_l(cands[i], cand_refs[i]);
      scores["ROUGE-L"] = sum / static_cast<double>(cands.size());
    } else {
      scores["CIDEr"] = cider(cands, cand_refs, build_idf(corpus)).mean;
    }
  }
  scores["images"] = cands.size();
  err << "scored " << cands.size() << " candidates against " << refs.size() << " reference images\n";
  out << scores.dump() << '\n';
  return kOk;
}

struct TraceArgs {
  fs::path ckpt;
  fs::path data;
  std::string image_id;
  fs::path out;
};

int trace_cmd(const TraceArgs& a, std::ostream& out, std::ostream& err) {
  const Loaded l = load_pair(a.ckpt, a.data);
  const DatasetRecord& rec = l.data.find(a.image_id);
  const Rollout r = decode_greedy(l.ckpt.model, rec.features, rec.attribute_ids);
  export_trace(r.trace, a.out);
  err << a.image_id << ": \"" << l.ckpt.vocab.decode(r.tokens) << "\", " << r.trace.entries.size() << " stage-steps\n";
  out << a.out.string() << '\n';
  return kOk;
}

struct SelfcheckArgs {
  std::uint64_t seed = 0;
  std::string corrupt_op;
};

int selfcheck_cmd(const SelfcheckArgs& a, std::ostream& out, std::ostream& err) {
  struct Reset {
    ~Reset() { testing::gradient_corruption.reset(); }
  } reset;
  if (!a.corrupt_op.empty()) {
    const auto op = op_from_name(a.corrupt_op);
    if (!op) throw ConfigError("unknown op '" + a.corrupt_op + "'");
    testing::gradient_corruption = testing::GradientCorruption{*op, 1.5};
  }
  const auto start = std::chrono::steady_clock::now();
  std::size_t failed = 0;
  for (const CheckOutcome& c : run_selfcheck(a.seed)) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed && !c.detail.empty()) out << ": " << c.detail;
    out << '\n';
    failed += !c.passed;
  }
  const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
  err << (failed ? std::to_string(failed) + " checks failed" : std::string("all checks passed")) << " in "
      << took.count() << " s\n";
  return failed ? kSelfcheckFailed : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stacked visual-semantic attention captioner"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-synthetic", "Write a synthetic dataset with a known caption rule");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--images", gen.spec.n_images, "Number of images")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--n-v", gen.spec.n_v, "Feature rows per image")->capture_default_str();
  g->add_option("--d-v", gen.spec.d_v, "Feature width")->capture_default_str();
  g->add_option("--n-e", gen.spec.n_e, "Attributes per image")->capture_default_str();
  g->add_option("--attributes", gen.spec.n_attributes, "Attribute vocabulary size")->capture_default_str();
  g->add_option("--vocab", gen.spec.vocab_size, "Distinct caption words")->capture_default_str();
  g->add_option("--caption-len", gen.spec.caption_len, "Words per caption")->capture_default_str();
  g->add_option("--patterns", gen.spec.n_patterns, "Basis patterns")->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "Feature noise standard deviation")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train with cross-entropy, then self-critical sequence training");
  t->add_option("--config", tr.config, "Run config JSON")->required();
  t->add_option("--data", tr.data, "Dataset manifest (overrides paths.data)");
  t->add_option("--out", tr.out_dir, "Checkpoint and log directory (overrides paths.out)");
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");
  t->add_option("--phase", tr.phase, "Phases to run")
      ->check(CLI::IsMember({"xe", "scst", "both"}))
      ->capture_default_str();
  t->add_option("--seed", tr.seed, "Override the config seed");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints (epoch 0 and the last are kept)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CaptionArgs cap;
  auto* c = app.add_subcommand("caption", "Caption every image of a dataset");
  c->add_option("--ckpt", cap.ckpt, "Checkpoint")->required();
  c->add_option("--data", cap.data, "Dataset manifest")->required();
  c->add_option("--beam", cap.beam, "Beam width (1: greedy)")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--out", cap.out, "Candidate JSON file, - for standard output")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score candidates against references");
  e->add_option("--candidates", ev.candidates, "Candidate JSON")->required();
  e->add_option("--references", ev.references, "Dataset manifest or reference JSON")->required();
  e->add_option("--metrics", ev.metrics, "Comma-separated subset of bleu,rouge_l,cider")->capture_default_str();

  TraceArgs tc;
  auto* x = app.add_subcommand("trace", "Export the attention weights of one greedy caption as CSV");
  x->add_option("--ckpt", tc.ckpt, "Checkpoint")->required();
  x->add_option("--data", tc.data, "Dataset manifest")->required();
  x->add_option("--image-id", tc.image_id, "Image to caption")->required();
  x->add_option("--out", tc.out, "CSV file")->required();

  SelfcheckArgs sc;
  auto* s = app.add_subcommand("selfcheck", "Run the gradient checks and metric oracles");
  s->add_option("--seed", sc.seed, "Seed for the random trials")->capture_default_str();
  s->add_option("--corrupt-op", sc.corrupt_op)->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return gen_synthetic_cmd(gen, out, err);
    if (t->parsed()) return train_cmd(tr, out, err);
    if (c->parsed()) return caption_cmd(cap, out, err);
    if (e->parsed()) return eval_cmd(ev, out, err);
    if (x->parsed()) return trace_cmd(tc, out, err);
    return selfcheck_cmd(sc, out, err);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << '\n';
    return kNumericError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  }
}

}  // namespace stackvs::cli
