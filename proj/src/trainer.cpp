#include "stackvs/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "stackvs/checkpoint.hpp"
#include "stackvs/errors.hpp"

namespace stackvs {

namespace fs = std::filesystem;

namespace {

/// Runs body(i) for i in [0, n) on up to `threads` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void add_scaled(ModelParams& acc, const ModelParams& g, double c) {
  auto a = flatten(acc);
  auto b = flatten(g);
  for (std::size_t k = 0; k < a.size(); ++k) a[k].second->values() += c * b[k].second->values();
}

/// Per-item work in waves of `thread_budget()` items; results are folded in
/// item order, so the sum does not depend on the thread count.
template <typename Item, typename Work, typename Fold>
void ordered_waves(std::size_t n, Work&& work, Fold&& fold) {
  const std::size_t wave = std::max<std::size_t>(1, thread_budget());
  for (std::size_t begin = 0; begin < n; begin += wave) {
    const std::size_t count = std::min(wave, n - begin);
    std::vector<Item> results(count);
    parallel_for(count, wave, [&](std::size_t i) { results[i] = work(begin + i); });
    for (std::size_t i = 0; i < count; ++i) fold(begin + i, results[i]);
  }
}

Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
  return Rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(epoch) + 1)));
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.svsc", epoch);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("TrainConfig: ") + name + " must be positive");
  };
  positive(xe_lr, "xe_lr");
  positive(lr_decay, "lr_decay");
  positive(scst_lr, "scst_lr");
  positive(grad_clip, "grad_clip");
  if (!(ss_increment >= 0.0)) throw ConfigError("TrainConfig: ss_increment must be nonnegative");
  if (!(ss_cap >= 0.0 && ss_cap <= 1.0)) throw ConfigError("TrainConfig: ss_cap must lie in [0, 1]");
  if (lr_decay_every == 0) throw ConfigError("TrainConfig: lr_decay_every must be positive");
  if (ss_every == 0) throw ConfigError("TrainConfig: ss_every must be positive");
  if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
  if (vocab_min_count == 0) throw ConfigError("TrainConfig: vocab_min_count must be at least 1");
}

double lr_schedule(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.scst_start) return config.scst_lr;
  return config.xe_lr * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_every));
}

double ss_schedule(const TrainConfig& config, std::size_t epoch) {
  return std::min(config.ss_increment * static_cast<double>(epoch / config.ss_every), config.ss_cap);
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  auto p = flatten(params);
  auto g = flatten(grads);
  auto m = flatten(state.m);
  auto v = flatten(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment tables differ in layout");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Shape& shape = p[k].second->shape();
    if (g[k].second->shape() != shape || m[k].second->shape() != shape || v[k].second->shape() != shape) {
      throw ShapeError("adam_step: shape mismatch at " + p[k].first);
    }
    if (!g[k].second->all_finite()) throw NumericError("adam_step: non-finite gradient for " + p[k].first);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& gk = g[k].second->values();
    auto& mk = m[k].second->values();
    auto& vk = v[k].second->values();
    mk = state.beta1 * mk + (1.0 - state.beta1) * gk;
    vk = state.beta2 * vk + (1.0 - state.beta2) * gk.cwiseProduct(gk);
    p[k].second->values().array() -= lr * (mk.array() / c1) / ((vk.array() / c2).sqrt() + state.eps);
  }
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : flatten(grads)) sq += t->values().squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("clip_gradients: gradient norm is not finite");
  if (norm > max_norm) {
    for (auto& [name, t] : flatten(grads)) t->values() *= max_norm / norm;
  }
  return norm;
}

Vard xe_loss(const std::vector<std::vector<Vard>>& stage_dists, std::span<const std::size_t> gold) {
  if (stage_dists.empty()) throw ShapeError("xe_loss: no stages");
  if (gold.empty()) throw ShapeError("xe_loss: empty gold sequence");
  // Summed stage by stage, so the total is exactly the sum of per-stage losses.
  Vard total;
  for (std::size_t i = 0; i < stage_dists.size(); ++i) {
    if (stage_dists[i].size() != gold.size()) {
      throw ShapeError("xe_loss: stage " + std::to_string(i) + " has " + std::to_string(stage_dists[i].size()) +
                       " distributions for " + std::to_string(gold.size()) + " gold tokens");
    }
    Vard stage = nll_gather(stage_dists[i][0], gold[0]);
    for (std::size_t k = 1; k < gold.size(); ++k) stage = add(stage, nll_gather(stage_dists[i][k], gold[k]));
    total = total.valid() ? add(total, stage) : stage;
  }
  return total;
}

std::vector<TrainingItem> training_items(const Dataset& data, const Vocabulary& vocab, std::size_t t_max) {
  std::vector<TrainingItem> out;
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    for (const auto& caption : data.records[r].references) out.push_back({r, vocab.encode(caption, t_max)});
  }
  return out;
}

XeBatch xe_gradients(const Model& model, const Dataset& data, std::span<const TrainingItem> batch, double ss_prob,
                     Rng& rng) {
  if (batch.empty()) throw ConfigError("xe_gradients: empty batch");
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < batch.size(); ++i) rngs.push_back(rng.split());

  struct ItemResult {
    ModelParams grads;
    double loss = 0.0;
  };
  XeBatch out;
  out.grads = zeros_like(model.params);
  const double inv = 1.0 / static_cast<double>(batch.size());
  ordered_waves<ItemResult>(
      batch.size(),
      [&](std::size_t i) {
        const TrainingItem& item = batch[i];
        const DatasetRecord& rec = data.records.at(item.record);
        Taped tape;
        auto bound = bind<ModelParamsT>(tape, model.params);
        TeacherForced tf = forward_teacher_forced(tape, model.config, bound, rec.features, rec.attribute_ids, item.gold,
                                                  ss_prob, rngs[i]);
        Vard loss = xe_loss(tf.probs, item.gold);
        tape.backward(loss);
        return ItemResult{gradients<ModelParamsT>(tape, bound), loss.value().item()};
      },
      [&](std::size_t i, const ItemResult& r) {
        add_scaled(out.grads, r.grads, inv);
        out.loss_sum += r.loss;
        out.tokens += batch[i].gold.size();
      });
  return out;
}

RewardFn cider_reward(const Dataset& data, const Vocabulary& vocab) {
  auto refs = std::make_shared<const std::vector<std::vector<TokenSeq>>>(tokenized_references(data));
  auto idf = std::make_shared<const IdfTable>(build_idf(*refs));
  return [refs, idf, vocab](std::size_t record, const std::vector<std::size_t>& tokens) {
    return cider_single(tokenize(vocab.decode(tokens)), refs->at(record), *idf);
  };
}

ScstBatch scst_step(const Model& model, const Dataset& data, std::span<const std::size_t> records,
                    const RewardFn& reward, Rng& rng) {
  if (records.empty()) throw ConfigError("scst_step: empty batch");
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < records.size(); ++i) rngs.push_back(rng.split());

  struct ItemResult {
    std::optional<ModelParams> grads;  // absent when the advantage is zero
    double reward = 0.0;
    double baseline = 0.0;
  };
  ScstBatch out;
  out.grads = zeros_like(model.params);
  const double inv = 1.0 / static_cast<double>(records.size());
  ordered_waves<ItemResult>(
      records.size(),
      [&](std::size_t i) {
        const DatasetRecord& rec = data.records.at(records[i]);
        ItemResult r;
        r.baseline = reward(records[i], decode_greedy(model, rec.features, rec.attribute_ids).tokens);

        Taped tape;
        auto bound = bind<ModelParamsT>(tape, model.params);
        ImageInputs image = bind_image(tape, model.config, bound, rec.features, rec.attribute_ids);
        Rng& draw = rngs[i];
        TapedRollout sample = rollout_on_tape(tape, model.config, bound, image, [&](std::size_t, const Vectord& p) {
          return draw.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
        });
        r.reward = reward(records[i], sample.rollout.tokens);
        const double advantage = r.reward - r.baseline;
        if (advantage != 0.0) {
          tape.backward(scale(sample.log_prob, -advantage));
          r.grads = gradients<ModelParamsT>(tape, bound);
        }
        return r;
      },
      [&](std::size_t, const ItemResult& r) {
        if (r.grads) add_scaled(out.grads, *r.grads, inv);
        out.mean_reward += r.reward * inv;
        out.mean_baseline += r.baseline * inv;
        out.advantages.push_back(r.reward - r.baseline);
      });
  return out;
}

std::string EpochLog::to_json_line() const {
  nlohmann::ordered_json j = {{"epoch", epoch}, {"phase", phase}, {"lr", lr}, {"ss_prob", ss_prob}};
  if (xe_loss) j["xe_loss"] = *xe_loss;
  if (mean_reward) j["mean_reward"] = *mean_reward;
  if (mean_baseline) j["mean_baseline"] = *mean_baseline;
  j["updates"] = updates;
  return j.dump();
}

StackConfig model_config_for(const StackConfig& architecture, const Dataset& data, const Vocabulary& vocab) {
  StackConfig c = architecture;
  auto take = [](std::size_t& field, std::size_t value, const char* name) {
    if (field != 0 && field != value) {
      throw ConfigError(std::string("config sets ") + name + " = " + std::to_string(field) + " but the data implies " +
                        std::to_string(value));
    }
    field = value;
  };
  take(c.n_v, data.n_v, "n_v");
  take(c.d_v, data.d_v, "d_v");
  take(c.n_e, data.n_e, "n_e");
  take(c.n_attributes, data.attributes.size(), "n_attributes");
  take(c.d_p, vocab.size(), "d_p");
  c.validate();
  return c;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("STACKVS_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1)
      throw ConfigError(std::string("STACKVS_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

TrainResult train(const TrainConfig& config, const StackConfig& architecture, const Dataset& data,
                  const TrainOptions& options) {
  config.validate();
  data.validate();
  if (options.checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");

  TrainResult result;
  std::size_t start = 0;
  if (options.resume) {
    Checkpoint ckpt = load_checkpoint(*options.resume);
    result.vocab = std::move(ckpt.vocab);
    const StackConfig expected = model_config_for(architecture, data, result.vocab);
    if (!(expected == ckpt.model.config)) {
      throw ConfigError("resume: checkpoint config " + ckpt.model.config.describe() + " differs from " +
                        expected.describe());
    }
    result.model = std::move(ckpt.model);
    start = ckpt.epoch + 1;
  } else {
    std::vector<std::string> captions;
    for (const auto& r : data.records) captions.insert(captions.end(), r.references.begin(), r.references.end());
    result.vocab = Vocabulary::build(captions, config.vocab_min_count);
    result.model = init_model(model_config_for(architecture, data, result.vocab), config.seed);
  }
  const StackConfig& mc = result.model.config;

  std::size_t first = start, last = config.max_epochs;
  if (options.phase == Phase::Xe) last = std::min(last, config.scst_start);
  if (options.phase == Phase::Scst) first = std::max(first, config.scst_start);

  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    log_file.open(options.out_dir / "train_log.jsonl", std::ios::out | mode);
    if (!log_file) throw DataError("cannot open " + (options.out_dir / "train_log.jsonl").string());
  }

  const auto items = training_items(data, result.vocab, mc.t_max);
  const RewardFn reward = first < last && last > config.scst_start ? cider_reward(data, result.vocab) : RewardFn{};
  AdamState adam = AdamState::for_params(result.model.params);
  bool adam_in_scst = false;

  for (std::size_t epoch = first; epoch < last; ++epoch) {
    const bool scst = epoch >= config.scst_start;
    if (scst != adam_in_scst) {
      adam = AdamState::for_params(result.model.params);
      adam_in_scst = scst;
    }
    Rng rng = epoch_rng(config.seed, epoch);
    EpochLog entry;
    entry.epoch = epoch;
    entry.phase = scst ? "scst" : "xe";
    entry.lr = lr_schedule(config, epoch);
    entry.ss_prob = scst ? 0.0 : ss_schedule(config, epoch);

    std::vector<std::size_t> order(scst ? data.records.size() : items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);

    double loss_sum = 0.0, reward_sum = 0.0, baseline_sum = 0.0;
    std::size_t tokens = 0, seen = 0, batch_index = 0;
    bool stop = false;
    for (std::size_t begin = 0; begin < order.size() && !stop; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      try {
        ModelParams grads;
        if (scst) {
          std::span<const std::size_t> records(order.data() + begin, end - begin);
          ScstBatch b = scst_step(result.model, data, records, reward, rng);
          reward_sum += b.mean_reward * static_cast<double>(end - begin);
          baseline_sum += b.mean_baseline * static_cast<double>(end - begin);
          grads = std::move(b.grads);
        } else {
          std::vector<TrainingItem> batch;
          for (std::size_t i = begin; i < end; ++i) batch.push_back(items[order[i]]);
          XeBatch b = xe_gradients(result.model, data, batch, entry.ss_prob, rng);
          loss_sum += b.loss_sum;
          tokens += b.tokens;
          grads = std::move(b.grads);
        }
        clip_gradients(grads, config.grad_clip);
        adam_step(result.model.params, grads, adam, entry.lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " +
                           e.what());
      }
      seen += end - begin;
      ++entry.updates;
      ++result.updates;
      stop = options.max_updates != 0 && result.updates >= options.max_updates;
    }
    if (scst) {
      entry.mean_reward = reward_sum / static_cast<double>(seen);
      entry.mean_baseline = baseline_sum / static_cast<double>(seen);
    } else {
      entry.xe_loss = loss_sum / (static_cast<double>(tokens) * static_cast<double>(mc.n_stages));
    }

    if (!options.out_dir.empty()) {
      const bool final_epoch = stop || epoch + 1 == last;
      if (epoch % options.checkpoint_every == 0 || final_epoch) {
        save_checkpoint({result.model, result.vocab, epoch}, options.out_dir / checkpoint_name(epoch));
      }
      log_file << entry.to_json_line() << '\n' << std::flush;
    }
    if (options.on_epoch) options.on_epoch(entry);
    result.log.push_back(std::move(entry));
    if (stop) break;
  }
  return result;
}

}  // namespace stackvs
