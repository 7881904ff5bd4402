#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gamekd/model.hpp"
#include "gamekd/rng.hpp"
#include "gamekd/tensor.hpp"

namespace gamekd {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay adaptive optimizer. Weight decay is applied only
// to parameters registered with decay=true (matrices); frozen parameters
// are never touched.
class AdamW {
public:
  explicit AdamW(std::vector<NamedParam> params, AdamWOptions opts = {});

  // One bias-corrected update at the given learning rate. Parameters whose
  // gradient buffer is absent are treated as zero-gradient. Throws
  // NumericError naming the parameter on non-finite gradients.
  void step(double lr);

  void zero_grad();
  long step_count() const { return step_count_; }

private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<NamedParam> params_;
  std::vector<Slot> slots_;
  AdamWOptions opts_;
  long step_count_ = 0;
};

// Triangular cyclical learning rate: linear lr_low -> lr_high over the first
// half cycle, back down over the second. Emitted LR stays in [lr_low, lr_high].
struct CyclicalSchedule {
  double lr_low = 1e-7;
  double lr_high = 1e-5;
  long cycle_length_steps = 1;

  double lr_at(long step) const;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double dropout = 0.1;
  // Cyclical bounds; fine-tuning defaults (1e-7, 1e-5). Distillation runs
  // use (1e-7, 1e-4).
  double lr_low = 1e-7;
  double lr_high = 1e-5;
  int cycle_epochs = 4; // cycle length in epochs of steps
  double weight_decay = 0.01;
  double clip_norm = 0.0; // 0 disables clipping
  std::optional<std::vector<double>> class_weights;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  long step = 0; // cumulative optimizer steps at epoch end
  double lr = 0.0;
  std::vector<std::pair<std::string, double>> losses; // ordered columns
  double train_metric = 0.0;
  std::optional<double> val_metric;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1; // -1 when no validation hook was given
  std::vector<std::vector<double>> best_values; // parameter snapshot at best epoch
};

// Scalar loss over one batch of instance indices. `components` receives the
// named sub-losses for history rows; `metric` accumulates a train metric
// numerator/denominator pair (e.g. correct/total).
using BatchLossFn = std::function<Tensor(std::span<const long> batch, Rng& rng,
                                         std::map<std::string, double>& components,
                                         std::pair<double, double>& metric)>;

// Shuffled mini-batch epoch loop with the cyclical schedule. Deterministic
// under a fixed config seed. A non-finite batch loss aborts with the
// offending instance ids.
TrainResult run_training(AdamW& optimizer, std::span<NamedParam> params, long n_instances,
                         const BatchLossFn& loss_fn, const TrainConfig& cfg,
                         const std::function<double()>& val_metric = {});

// Restores a parameter snapshot captured by run_training.
void restore_values(std::span<NamedParam> params,
                    const std::vector<std::vector<double>>& values);

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history);

} // namespace gamekd
