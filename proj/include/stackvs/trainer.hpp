#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackvs/dataset.hpp"
#include "stackvs/metrics.hpp"
#include "stackvs/stack_decoder.hpp"
#include "stackvs/vocabulary.hpp"

namespace stackvs {

struct TrainConfig {
  double xe_lr = 5e-4;
  double lr_decay = 0.8;
  std::size_t lr_decay_every = 3;  // epochs
  double ss_increment = 0.05;
  std::size_t ss_every = 5;  // epochs
  double ss_cap = 0.25;
  std::size_t batch_size = 78;
  std::size_t max_epochs = 100;
  double scst_lr = 5e-5;
  std::size_t scst_start = 30;  // first SCST epoch; epochs before it are XE
  double grad_clip = 10.0;      // global L2 norm
  std::size_t vocab_min_count = 5;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// xe_lr * lr_decay^floor(epoch / lr_decay_every) before scst_start, scst_lr after.
double lr_schedule(const TrainConfig& config, std::size_t epoch);
/// min(ss_increment * floor(epoch / ss_every), ss_cap).
double ss_schedule(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update. Throws NumericError naming the first
/// parameter with a non-finite gradient, before anything is modified.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the norm before scaling.
double clip_gradients(ModelParams& grads, double max_norm);

/// -sum over stages i and steps k of log p_i,k[gold_k]. `stage_dists` is [stage][step].
Vard xe_loss(const std::vector<std::vector<Vard>>& stage_dists, std::span<const std::size_t> gold);

/// One gold caption of one record.
struct TrainingItem {
  std::size_t record = 0;
  std::vector<std::size_t> gold;  // content ids then <eos>
};

std::vector<TrainingItem> training_items(const Dataset& data, const Vocabulary& vocab, std::size_t t_max);

struct XeBatch {
  ModelParams grads;       // of the batch-mean loss
  double loss_sum = 0.0;   // summed over items, stages and steps
  std::size_t tokens = 0;  // gold tokens in the batch (not multiplied by stages)
};

XeBatch xe_gradients(const Model& model, const Dataset& data, std::span<const TrainingItem> batch, double ss_prob,
                     Rng& rng);

/// Reward of a decoded token sequence for a record.
using RewardFn = std::function<double(std::size_t record, const std::vector<std::size_t>& tokens)>;

/// CIDEr against the record's references, with document frequencies taken over all of `data`.
RewardFn cider_reward(const Dataset& data, const Vocabulary& vocab);

struct ScstBatch {
  ModelParams grads;  // of the batch-mean loss -(r - b) log p(sample)
  double mean_reward = 0.0;
  double mean_baseline = 0.0;
  std::vector<double> advantages;  // per record
};

/// One self-critical step: for each record, a sampled caption is scored
/// against the greedy caption; the loss attaches to the final stage's
/// log-probability of the sample.
ScstBatch scst_step(const Model& model, const Dataset& data, std::span<const std::size_t> records,
                    const RewardFn& reward, Rng& rng);

struct EpochLog {
  std::size_t epoch = 0;
  std::string phase;  // "xe" or "scst"
  double lr = 0.0;
  double ss_prob = 0.0;
  std::optional<double> xe_loss;  // nats per token per stage
  std::optional<double> mean_reward;
  std::optional<double> mean_baseline;
  std::size_t updates = 0;

  std::string to_json_line() const;
};

enum class Phase { Xe, Scst, Both };

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or log file
  Phase phase = Phase::Both;
  std::optional<std::filesystem::path> resume;
  std::function<void(const EpochLog&)> on_epoch;
  /// Stop after this many updates in total (0: no limit).
  std::size_t max_updates = 0;
  /// Write a checkpoint every this many epochs. Epoch 0 and the last epoch of the run are always written.
  std::size_t checkpoint_every = 1;
};

struct TrainResult {
  Model model;
  Vocabulary vocab;
  std::vector<EpochLog> log;
  std::size_t updates = 0;
};

/// XE epochs up to scst_start, then SCST epochs, each followed by a
/// checkpoint `epoch_NNNN.svsc` and a line in `train_log.jsonl`.
/// `architecture` supplies n_stages, d_e, d_h, d_a, d_s and t_max; the data
/// supplies the rest.
TrainResult train(const TrainConfig& config, const StackConfig& architecture, const Dataset& data,
                  const TrainOptions& options = {});

/// Architecture completed with the dimensions implied by `data` and `vocab`.
StackConfig model_config_for(const StackConfig& architecture, const Dataset& data, const Vocabulary& vocab);

/// Worker threads for per-record work: STACKVS_THREADS if set, else the processor count.
std::size_t thread_budget();

}  // namespace stackvs
