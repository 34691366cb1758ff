#include "qprec/trainer.hpp"

#include "qprec/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>

namespace qprec {

void TrainConfig::validate(int users) const {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (symbols_per_channel < users + 1) throw InvalidArgument("N_s must be at least K + 1");
  if (batch_channels < 1 || epochs < 0) throw InvalidArgument("bad batch size or epoch count");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (val_symbols < users + 1) throw InvalidArgument("validation needs at least K + 1 symbols");
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelUniformClamp, 1.0 - kGumbelUniformClamp);
  return -std::log(-std::log(u));
}

GumbelDraw gumbel_sample(int antennas, int levels, Rng& rng) {
  GumbelDraw g;
  g.antennas = antennas;
  g.levels = levels;
  g.noise.resize(static_cast<std::size_t>(antennas) * 2 * levels);
  for (auto& v : g.noise) v = gumbel_from_uniform(rng.uniform());
  return g;
}

GumbelDraw gumbel_sample(int antennas, int levels, std::uint64_t seed) {
  Rng rng(seed, Stream::kGumbel);
  return gumbel_sample(antennas, levels, rng);
}

std::vector<GumbelDraw> gumbel_batch(int symbols, int antennas, int levels, std::uint64_t seed) {
  Rng rng(seed, Stream::kGumbel);
  std::vector<GumbelDraw> out;
  out.reserve(static_cast<std::size_t>(symbols));
  for (int n = 0; n < symbols; ++n) out.push_back(gumbel_sample(antennas, levels, rng));
  return out;
}

GumbelSelection st_gumbel_softmax(std::span<const double> logits, std::span<const double> noise,
                                  double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (logits.size() != noise.size() || logits.empty()) {
    throw InvalidArgument("logits and Gumbel noise must have the same non-zero length");
  }
  GumbelSelection sel;
  sel.soft.resize(logits.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i] + noise[i];
    sel.soft[i] = z;
    if (z > peak) {
      peak = z;
      sel.hard = static_cast<int>(i);
    }
  }
  double total = 0.0;
  for (auto& z : sel.soft) {
    z = std::exp((z - peak) / temperature);
    total += z;
  }
  for (auto& z : sel.soft) z /= total;
  return sel;
}

template <typename T>
TrainForward<T> forward_train(const ChannelMatrix& channel, const SymbolBatch& symbols,
                              const BasicGnnWeights<T>& weights, const GnnConfig& config,
                              const ScalarQuantizer& quantizer,
                              std::span<const GumbelDraw> noise, double temperature,
                              double total_power, SelectionMode mode) {
  const int M = channel.antennas();
  const int N = symbols.size();
  const int L = config.levels();
  if (quantizer.num_levels() != L) throw InvalidArgument("quantizer/network level mismatch");
  if (noise.size() != static_cast<std::size_t>(N)) {
    throw InvalidArgument("need one Gumbel draw per symbol");
  }
  if (channel.antennas() != config.antennas || channel.users() != config.users) {
    throw InvalidArgument("channel does not match the network's graph size");
  }

  TrainForward<T> fw;
  const RowMatrix<T> logits =
      forward_logits(init_inputs<T>(channel, symbols.symbols), weights, config, &fw.tape);

  fw.selected.resize(M, N);
  fw.soft.resize(static_cast<std::size_t>(N) * M * 2 * L);
  fw.soft_value.resize(static_cast<std::size_t>(N) * M * 2);
  fw.hard.resize(static_cast<std::size_t>(N) * M * 2);
  std::vector<double> a(static_cast<std::size_t>(L));
  for (int n = 0; n < N; ++n) {
    const auto& g = noise[static_cast<std::size_t>(n)];
    if (g.antennas != M || g.levels != L) throw InvalidArgument("Gumbel draw has wrong shape");
    for (int m = 0; m < M; ++m) {
      double value[2];
      for (int part = 0; part < 2; ++part) {
        for (int i = 0; i < L; ++i) {
          a[static_cast<std::size_t>(i)] =
              static_cast<double>(logits(static_cast<Eigen::Index>(n) * M + m, part * L + i));
        }
        const auto sel = st_gumbel_softmax(a, g.slice(m, part), temperature);
        const std::size_t slot = (static_cast<std::size_t>(n) * M + m) * 2 + part;
        double sv = 0.0;
        for (int i = 0; i < L; ++i) {
          fw.soft[slot * L + i] = sel.soft[static_cast<std::size_t>(i)];
          sv += sel.soft[static_cast<std::size_t>(i)] * quantizer.levels[static_cast<std::size_t>(i)];
        }
        fw.soft_value[slot] = sv;
        fw.hard[slot] = sel.hard;
        value[part] = mode == SelectionMode::kSoft
                          ? sv
                          : quantizer.levels[static_cast<std::size_t>(sel.hard)];
      }
      fw.selected(m, n) = {value[0], value[1]};
    }
  }
  const double mean_power = fw.selected.squaredNorm() / static_cast<double>(N);
  if (!(mean_power > 0.0)) throw NumericalError("training batch has zero output power");
  fw.alpha = std::sqrt(total_power / mean_power);
  fw.outputs = fw.alpha * fw.selected;
  return fw;
}

RateGradient sum_rate_gradient(const ChannelMatrix& channel, const SymbolBatch& symbols,
                               const CMatrix& outputs, double noise_variance,
                               GainEstimator estimator) {
  const auto& h = channel.entries;
  const Eigen::Index K = h.cols();
  const Eigen::Index N = outputs.cols();
  if (symbols.size() != N || symbols.users() != K || outputs.rows() != h.rows()) {
    throw InvalidArgument("sum-rate gradient: dimension mismatch");
  }
  if (!(noise_variance > 0.0)) throw InvalidArgument("noise variance must be positive");
  const double inv_n = 1.0 / static_cast<double>(N);
  const CMatrix s = symbols.symbols.transpose();  // K x N, columns are symbol vectors

  // G = Y P with P = (1/N) S^H R^{-1} (N x K).
  CMatrix p = inv_n * s.adjoint();
  if (estimator == GainEstimator::kSampleCovariance) {
    const CMatrix r = inv_n * s * s.adjoint();
    const Eigen::LLT<CMatrix> llt(r);
    if (llt.info() != Eigen::Success) throw NumericalError("symbol covariance is singular");
    p = llt.solve(p.adjoint()).adjoint();  // P R^{-1}, R Hermitian
  }
  const CMatrix v = h.transpose() * outputs;  // K x N
  const CMatrix t = v * p;                    // K x K, t(k, j) = h_k^T g_j
  const CMatrix u = v - t * s;                // K x N, rows h_k^T q_n

  RateGradient out;
  CMatrix dt = CMatrix::Zero(K, K);
  CMatrix du(K, N);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double signal = std::norm(t(k, k));
    const double interference = t.row(k).squaredNorm() - signal;
    const double distortion = inv_n * u.row(k).squaredNorm();
    const double denom = interference + distortion + noise_variance;
    const double sinr = signal / denom;
    out.rate += std::log2(1.0 + sinr);
    // d(rate)/d(sinr), then through sinr = A / B.
    const double c = 1.0 / (std::numbers::ln2 * (1.0 + sinr));
    const double d_signal = c / denom;
    const double d_denom = -c * signal / (denom * denom);
    for (Eigen::Index j = 0; j < K; ++j) {
      dt(k, j) = 2.0 * t(k, j) * (j == k ? d_signal : d_denom);
    }
    du.row(k) = (2.0 * inv_n * d_denom) * u.row(k);
  }
  dt -= du * s.adjoint();
  const CMatrix dv = du + dt * p.adjoint();
  out.d_outputs = h.conjugate() * dv;
  return out;
}

template <typename T>
LossAndGrad<T> loss_and_grad(const ChannelMatrix& channel, const SymbolBatch& symbols,
                             const BasicGnnWeights<T>& weights, const GnnConfig& config,
                             const TrainConfig& train, const ScalarQuantizer& quantizer,
                             std::span<const GumbelDraw> noise, SelectionMode mode) {
  const int M = channel.antennas();
  const int N = symbols.size();
  const int L = config.levels();
  const double power = train.power_for(M);
  const double tau = train.temperature;
  auto fw = forward_train(channel, symbols, weights, config, quantizer, noise, tau, power, mode);

  const auto rg = sum_rate_gradient(channel, symbols, fw.outputs, noise_variance(power, train.snr_train_db));
  LossAndGrad<T> out;
  out.rate = rg.rate;
  out.loss = -rg.rate;
  if (!std::isfinite(out.loss)) {
    throw NumericalError("non-finite training loss (output power " +
                         std::to_string(fw.selected.squaredNorm()) + ")");
  }

  // Through the power normalization Y = alpha * Ysel, alpha = sqrt(P_T / mean power).
  const CMatrix dy = -rg.d_outputs;  // dJ/dY
  const double mean_power = fw.selected.squaredNorm() / static_cast<double>(N);
  double d_alpha = 0.0;
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    d_alpha += (std::conj(dy.data()[i]) * fw.selected.data()[i]).real();
  }
  const CMatrix dsel =
      fw.alpha * dy - (d_alpha * fw.alpha / (mean_power * static_cast<double>(N))) * fw.selected;

  // Straight-through: the selected value's gradient flows through sum_i soft_i l_i.
  RowMatrix<T> d_logits(static_cast<Eigen::Index>(N) * M, 2 * L);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      const cdouble d = dsel(m, n);
      for (int part = 0; part < 2; ++part) {
        const double dval = part == 0 ? d.real() : d.imag();
        const std::size_t slot = (static_cast<std::size_t>(n) * M + m) * 2 + part;
        const double sv = fw.soft_value[slot];
        for (int i = 0; i < L; ++i) {
          const double p = fw.soft[slot * L + i];
          d_logits(static_cast<Eigen::Index>(n) * M + m, part * L + i) = static_cast<T>(
              p * (quantizer.levels[static_cast<std::size_t>(i)] - sv) * dval / tau);
        }
      }
    }
  }
  out.grads = BasicGnnWeights<T>::zeros(config);
  backward(fw.tape, weights, config, d_logits, out.grads);
  return out;
}

AdamOptimizer::AdamOptimizer(const GnnConfig& config, AdamParams params)
    : params_(params),
      state_{GnnWeights::zeros(config), GnnWeights::zeros(config), 0} {}

AdamOptimizer::AdamOptimizer(OptimizerState state, AdamParams params)
    : params_(params), state_(std::move(state)) {}

void AdamOptimizer::step(GnnWeights& weights, const GnnWeights& grads, double learning_rate) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(params_.beta1, t);
  const double c2 = 1.0 - std::pow(params_.beta2, t);
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    for (auto f : kWeightFamilies) {
      auto& w = weights.layers[l].get(f);
      const auto& g = grads.layers[l].get(f);
      auto& m1 = state_.first_moment.layers[l].get(f);
      auto& m2 = state_.second_moment.layers[l].get(f);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double gi = g.data()[i];
        const double a = params_.beta1 * m1.data()[i] + (1.0 - params_.beta1) * gi;
        const double b = params_.beta2 * m2.data()[i] + (1.0 - params_.beta2) * gi * gi;
        m1.data()[i] = static_cast<float>(a);
        m2.data()[i] = static_cast<float>(b);
        const double update = learning_rate * (a / c1) / (std::sqrt(b / c2) + params_.epsilon);
        w.data()[i] = static_cast<float>(w.data()[i] - update);
      }
    }
  }
}

double validation_rate(const ChannelDataset& channels, const GnnWeights& weights,
                       const GnnConfig& config, const ScalarQuantizer& quantizer,
                       double total_power, double snr_db, int symbols, std::uint64_t seed) {
  if (channels.channels.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double sigma2 = noise_variance(total_power, snr_db);
  double total = 0.0;
  for (std::size_t i = 0; i < channels.channels.size(); ++i) {
    const auto& h = channels.channels[i];
    const auto s = gen_symbols(h.users(), symbols, sub_seed(seed, Stream::kSymbol, i));
    const CMatrix y = normalize_power(infer_batch(h, s.symbols, weights, config, quantizer), total_power);
    total += sum_rate(h, estimate_bussgang(s, y), sigma2);
  }
  return total / static_cast<double>(channels.channels.size());
}

SymbolBatch training_symbols(const TrainConfig& train, int users, std::uint64_t index) {
  return gen_symbols(users, train.symbols_per_channel, sub_seed(train.seed, Stream::kSymbol, index));
}

namespace {

std::vector<std::uint32_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::uint32_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = count; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  return order;
}

void write_log_row(std::ofstream& out, const TrainLogRow& row) {
  out << row.epoch << ',' << row.step << ',' << std::setprecision(17) << row.loss << ',';
  if (!std::isnan(row.val_rate)) out << row.val_rate;
  out << ',' << std::setprecision(6) << std::fixed << row.wall_ms << std::defaultfloat << '\n';
  out.flush();
}

}  // namespace

TrainResult train(const ChannelDataset& train_set, const ChannelDataset& val_set,
                  const GnnConfig& config, const TrainConfig& tc,
                  const ScalarQuantizer& quantizer, const TrainOptions& options) {
  config.validate();
  tc.validate(config.users);
  if (train_set.channels.empty()) throw InvalidArgument("training set is empty");
  if (train_set.antennas != config.antennas || train_set.users != config.users) {
    throw InvalidArgument("training set dimensions do not match the network configuration");
  }
  const double power = tc.power_for(config.antennas);
  const std::uint64_t count = train_set.channels.size();
  const std::uint64_t batch = static_cast<std::uint64_t>(tc.batch_channels);
  const std::uint64_t steps_per_epoch = (count + batch - 1) / batch;
  const std::uint64_t total_steps = steps_per_epoch * static_cast<std::uint64_t>(tc.epochs);
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  const auto validate_now = [&](const GnnWeights& w) {
    return validation_rate(val_set, w, config, quantizer, power, tc.snr_train_db, tc.val_symbols,
                           val_set.seed);
  };

  TrainResult result;
  Checkpoint& last = result.last;
  last.config = config;
  last.meta.seed = tc.seed;
  std::optional<AdamOptimizer> adam;
  if (options.resume) {
    const auto& r = *options.resume;
    if (r.config.hidden_layers != config.hidden_layers || r.config.hidden_width != config.hidden_width ||
        r.config.bits != config.bits || r.config.antennas != config.antennas ||
        r.config.users != config.users) {
      throw InvalidArgument("resume checkpoint configuration differs from the requested one");
    }
    last.weights = r.weights;
    last.meta = r.meta;
    adam.emplace(r.optimizer ? *r.optimizer
                             : OptimizerState{GnnWeights::zeros(config), GnnWeights::zeros(config), 0},
                 tc.adam);
  } else {
    last.weights = init_weights(config, tc.seed);
    adam.emplace(config, tc.adam);
  }
  result.best = last;

  std::ofstream log_file;
  if (options.log_path) {
    const bool append = options.resume.has_value() && std::filesystem::exists(*options.log_path);
    log_file.open(*options.log_path, append ? std::ios::app : std::ios::trunc);
    if (!log_file) throw IoError("cannot open training log " + options.log_path->string());
    if (!append) log_file << "epoch,step,loss,val_rate,wall_ms\n";
  }
  const auto emit = [&](const TrainLogRow& row) {
    result.log.push_back(row);
    if (log_file.is_open()) write_log_row(log_file, row);
    if (options.on_log) options.on_log(row);
  };
  const auto save_last = [&] {
    last.optimizer = adam->state();
    if (options.checkpoint_path) save_checkpoint(*options.checkpoint_path, last);
  };

  if (!options.resume) {
    const double v0 = validate_now(last.weights);
    last.meta.last_val_rate = v0;
    last.meta.best_val_rate = v0;
    result.best = last;
    emit({0, 0, std::numeric_limits<double>::quiet_NaN(), v0, elapsed_ms()});
  }

  std::uint64_t step = last.meta.step;
  double epoch_loss = 0.0;
  std::uint64_t epoch_batches = 0;
  while (step < total_steps && (options.max_steps == 0 || step < options.max_steps)) {
    const int epoch = static_cast<int>(step / steps_per_epoch);
    const std::uint64_t b = step % steps_per_epoch;
    if (b == 0) {
      epoch_loss = 0.0;
      epoch_batches = 0;
    }
    const auto order = epoch_order(count, tc.seed, epoch);
    const std::uint64_t first = b * batch;
    const std::uint64_t last_idx = std::min(count, first + batch);

    GnnWeights grad_sum = GnnWeights::zeros(config);
    double loss_sum = 0.0;
    const std::uint64_t gumbel_seed = sub_seed(tc.seed, Stream::kGumbel, static_cast<std::uint64_t>(epoch));
    for (std::uint64_t j = first; j < last_idx; ++j) {
      const std::uint32_t idx = order[j];
      const auto& h = train_set.channels[idx];
      const auto s = training_symbols(tc, config.users, idx);
      const auto noise = gumbel_batch(s.size(), config.antennas, config.levels(),
                                      sub_seed(gumbel_seed, Stream::kGumbel, idx));
      const auto lg = loss_and_grad(h, s, last.weights, config, tc, quantizer, noise);
      loss_sum += lg.loss;
      for (std::size_t l = 0; l < grad_sum.layers.size(); ++l) {
        for (auto f : kWeightFamilies) grad_sum.layers[l].get(f) += lg.grads.layers[l].get(f);
      }
    }
    const double n_batch = static_cast<double>(last_idx - first);
    for (auto& layer : grad_sum.layers) {
      for (auto f : kWeightFamilies) layer.get(f) /= static_cast<float>(n_batch);
    }
    adam->step(last.weights, grad_sum, tc.learning_rate);
    if (!last.weights.all_finite()) throw NumericalError("weights became non-finite during training");
    ++step;
    last.meta.step = step;
    const double mean_loss = loss_sum / n_batch;
    epoch_loss += mean_loss;
    ++epoch_batches;
    emit({epoch + 1, step, mean_loss, std::numeric_limits<double>::quiet_NaN(), elapsed_ms()});

    const bool epoch_end = step % steps_per_epoch == 0;
    if (epoch_end) {
      last.meta.epoch = static_cast<std::uint32_t>(step / steps_per_epoch);
      const double v = validate_now(last.weights);
      last.meta.last_val_rate = v;
      if (v > last.meta.best_val_rate || result.best.meta.step == 0) {
        last.meta.best_val_rate = v;
        result.best = last;
        result.best.optimizer = adam->state();
        if (options.best_checkpoint_path) save_checkpoint(*options.best_checkpoint_path, result.best);
      }
      emit({epoch + 1, step, epoch_loss / static_cast<double>(std::max<std::uint64_t>(epoch_batches, 1)),
            v, elapsed_ms()});
      save_last();
    } else if (tc.checkpoint_every_steps > 0 &&
               step % static_cast<std::uint64_t>(tc.checkpoint_every_steps) == 0) {
      save_last();
    }
  }
  last.optimizer = adam->state();
  if (options.checkpoint_path) save_checkpoint(*options.checkpoint_path, last);
  return result;
}

#define QPREC_INSTANTIATE_TRAINER(T)                                                            \
  template TrainForward<T> forward_train<T>(const ChannelMatrix&, const SymbolBatch&,           \
                                            const BasicGnnWeights<T>&, const GnnConfig&,        \
                                            const ScalarQuantizer&, std::span<const GumbelDraw>, \
                                            double, double, SelectionMode);                     \
  template LossAndGrad<T> loss_and_grad<T>(const ChannelMatrix&, const SymbolBatch&,            \
                                           const BasicGnnWeights<T>&, const GnnConfig&,         \
                                           const TrainConfig&, const ScalarQuantizer&,          \
                                           std::span<const GumbelDraw>, SelectionMode);

QPREC_INSTANTIATE_TRAINER(float)
QPREC_INSTANTIATE_TRAINER(double)

#undef QPREC_INSTANTIATE_TRAINER

}  // namespace qprec
