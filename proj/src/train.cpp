#include "gamekd/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gamekd/errors.hpp"

namespace gamekd {

AdamW::AdamW(std::vector<NamedParam> params, AdamWOptions opts)
    : params_(std::move(params)), opts_(opts) {
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].tensor.size(), 0.0);
    slots_[i].v.assign(params_[i].tensor.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_count_));

  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    NamedParam& p = params_[pi];
    if (!p.tensor.requires_grad()) continue; // frozen
    Slot& slot = slots_[pi];
    auto values = p.tensor.data();
    const auto grads = p.tensor.grad();
    const double wd = p.decay ? opts_.weight_decay : 0.0;

    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads.empty() ? 0.0 : grads[i];
      if (!std::isfinite(g))
        throw NumericError("optimizer: non-finite gradient in parameter '" + p.name +
                           "' at element " + std::to_string(i));
      slot.m[i] = opts_.beta1 * slot.m[i] + (1.0 - opts_.beta1) * g;
      slot.v[i] = opts_.beta2 * slot.v[i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      values[i] -= lr * (mhat / (std::sqrt(vhat) + opts_.epsilon) + wd * values[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (NamedParam& p : params_) p.tensor.zero_grad();
}

double CyclicalSchedule::lr_at(long step) const {
  if (step < 0) throw InputError("schedule: negative step");
  const long pos = step % cycle_length_steps;
  const double half = cycle_length_steps / 2.0;
  const double phase = pos <= half ? pos / half : (cycle_length_steps - pos) / half;
  return lr_low + (lr_high - lr_low) * phase;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (lr_low < 0 || lr_high < lr_low)
    throw ConfigError("train: need 0 <= lr_low <= lr_high");
  if (cycle_epochs < 1) throw ConfigError("train: cycle_epochs must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must be in [0, 1)");
}

TrainResult run_training(AdamW& optimizer, std::span<NamedParam> params, long n_instances,
                         const BatchLossFn& loss_fn, const TrainConfig& cfg,
                         const std::function<double()>& val_metric) {
  cfg.validate();
  if (cfg.epochs > 0 && n_instances < 1)
    throw DataError("train: empty corpus with epochs > 0");

  TrainResult result;
  const long steps_per_epoch =
      (n_instances + cfg.batch_size - 1) / std::max(1, cfg.batch_size);
  CyclicalSchedule schedule{cfg.lr_low, cfg.lr_high,
                            std::max<long>(1, cfg.cycle_epochs * steps_per_epoch)};

  Rng shuffle_rng(Rng::derive(cfg.seed, "shuffle"));
  Rng batch_rng(Rng::derive(cfg.seed, "batch"));

  std::vector<long> order(static_cast<std::size_t>(n_instances));
  for (long i = 0; i < n_instances; ++i) order[static_cast<std::size_t>(i)] = i;

  long global_step = 0;
  double best = -std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    std::map<std::string, double> epoch_components;
    double epoch_loss = 0.0;
    std::pair<double, double> metric{0.0, 0.0};
    double last_lr = schedule.lr_at(global_step);

    for (long b = 0; b < steps_per_epoch; ++b) {
      const long lo = b * cfg.batch_size;
      const long hi = std::min<long>(lo + cfg.batch_size, n_instances);
      std::span<const long> batch(order.data() + lo, static_cast<std::size_t>(hi - lo));

      std::map<std::string, double> components;
      Tensor loss = loss_fn(batch, batch_rng, components, metric);
      if (!std::isfinite(loss.value())) {
        std::ostringstream ids;
        for (long idx : batch) ids << ' ' << idx;
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           "; batch instances:" + ids.str());
      }
      loss.backward();

      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const NamedParam& p : params)
          if (p.tensor.requires_grad() && p.tensor.has_grad())
            for (double g : p.tensor.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const double f = cfg.clip_norm / norm;
          for (NamedParam& p : params)
            if (p.tensor.requires_grad() && p.tensor.has_grad()) {
              auto node = p.tensor.node_handle();
              for (double& g : node->grad) g *= f;
            }
        }
      }

      last_lr = schedule.lr_at(global_step);
      optimizer.step(last_lr);
      optimizer.zero_grad();
      ++global_step;

      const double weight = static_cast<double>(hi - lo) / n_instances;
      epoch_loss += loss.value() * weight;
      for (const auto& [k, v] : components) epoch_components[k] += v * weight;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.step = global_step;
    stats.lr = last_lr;
    stats.losses.emplace_back("loss", epoch_loss);
    for (const auto& [k, v] : epoch_components) stats.losses.emplace_back(k, v);
    stats.train_metric = metric.second > 0 ? metric.first / metric.second : 0.0;
    if (val_metric) {
      stats.val_metric = val_metric();
      if (*stats.val_metric > best) {
        best = *stats.val_metric;
        result.best_epoch = epoch;
        result.best_values.clear();
        for (const NamedParam& p : params)
          result.best_values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      }
    }
    result.history.push_back(std::move(stats));
  }
  return result;
}

void restore_values(std::span<NamedParam> params,
                    const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size())
    throw InputError("restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i].tensor.size())
      throw InputError("restore_values: parameter '" + params[i].name + "' size mismatch");
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.data().begin());
  }
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("history: cannot write '" + path.string() + "'");
  os << "epoch,step,lr";
  if (!history.empty()) {
    for (const auto& [name, _] : history.front().losses) os << ',' << name;
    os << ",train_metric";
    if (history.front().val_metric) os << ",val_metric";
  }
  os << '\n';
  os.precision(17);
  for (const EpochStats& s : history) {
    os << s.epoch << ',' << s.step << ',' << s.lr;
    for (const auto& [_, v] : s.losses) os << ',' << v;
    os << ',' << s.train_metric;
    if (s.val_metric) os << ',' << *s.val_metric;
    os << '\n';
  }
}

} // namespace gamekd
