#include "qprec/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace qprec;

namespace {

GnnConfig tiny(int m, int k, int dh, int nh, int b) {
  GnnConfig c;
  c.antennas = m;
  c.users = k;
  c.hidden_width = dh;
  c.hidden_layers = nh;
  c.bits = b;
  return c;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_channels = 4;
  t.symbols_per_channel = 16;
  t.epochs = 2;
  t.val_symbols = 32;
  t.seed = 5;
  return t;
}

bool same_weights(const GnnWeights& a, const GnnWeights& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (auto f : kWeightFamilies) {
      if (a.layers[l].get(f) != b.layers[l].get(f)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("Gumbel transform") {
  const double u = std::exp(-1.0);
  CHECK(gumbel_from_uniform(u) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(gumbel_from_uniform(1.0)));

  const auto draws = gumbel_sample(100, 100, 3);
  CHECK(draws.noise.size() == 100u * 2 * 100);
  double mean = 0.0;
  for (double g : draws.noise) mean += g;
  mean /= static_cast<double>(draws.noise.size());
  CHECK(std::abs(mean - std::numbers::egamma) < 0.02);
  CHECK(gumbel_sample(4, 2, 3).noise == gumbel_sample(4, 2, 3).noise);
  CHECK(gumbel_sample(4, 2, 3).noise != gumbel_sample(4, 2, 4).noise);
}

TEST_CASE("Gumbel-max samples the softmax") {
  const std::vector<double> logits = {0.3, -1.0, 1.2, 0.0};
  std::vector<double> p(4);
  double z = 0.0;
  for (std::size_t i = 0; i < 4; ++i) z += std::exp(logits[i]);
  for (std::size_t i = 0; i < 4; ++i) p[i] = std::exp(logits[i]) / z;

  Rng rng(8, Stream::kGumbel, 0);
  const int n = 200000;
  std::vector<int> hits(4, 0);
  for (int t = 0; t < n; ++t) {
    std::vector<double> g(4);
    for (auto& v : g) v = gumbel_from_uniform(rng.uniform());
    ++hits[static_cast<std::size_t>(st_gumbel_softmax(logits, g, 1.0).hard)];
  }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double e = p[i] * n;
    chi2 += (hits[i] - e) * (hits[i] - e) / e;
  }
  CHECK(chi2 < 16.27);  // 3 dof, p = 0.001
}

TEST_CASE("straight-through selection") {
  const std::vector<double> logits = {0.5, 0.1, -0.2, 0.4};
  const std::vector<double> noise = {0.0, 0.3, 0.0, 0.0};
  const auto s = st_gumbel_softmax(logits, noise, 1.0);
  CHECK(s.hard == 0);
  double sum = 0.0;
  for (double v : s.soft) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));

  const auto cold = st_gumbel_softmax(logits, noise, 1e-6);
  CHECK(cold.soft[0] == doctest::Approx(1.0));
  CHECK(cold.soft[1] < 1e-12);

  const std::vector<double> tied = {1.0, 1.0};
  const std::vector<double> zero = {0.0, 0.0};
  CHECK(st_gumbel_softmax(tied, zero, 1.0).hard == 0);
  CHECK_THROWS_AS(st_gumbel_softmax(tied, zero, 0.0), InvalidArgument);
}

TEST_CASE("derivative of the soft level value") {
  const std::vector<double> levels = {-1.5, -0.4, 0.4, 1.5};
  std::vector<double> a = {0.2, -0.7, 1.1, 0.3};
  const std::vector<double> g = {0.1, 0.5, -0.3, 0.9};
  const double tau = 0.7;
  const auto value = [&](const std::vector<double>& x) {
    const auto s = st_gumbel_softmax(x, g, tau);
    double v = 0.0;
    for (std::size_t i = 0; i < 4; ++i) v += s.soft[i] * levels[i];
    return v;
  };
  const auto s = st_gumbel_softmax(a, g, tau);
  const double mean = value(a);
  for (std::size_t i = 0; i < 4; ++i) {
    const double analytic = s.soft[i] * (levels[i] - mean) / tau;
    auto up = a, down = a;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(analytic == doctest::Approx((value(up) - value(down)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("training forward pass") {
  const auto cfg = tiny(6, 2, 8, 2, 2);
  const auto w = init_weights(cfg, 1);
  const auto q = lloyd_max(2);
  const auto h = gen_rayleigh(6, 2, 2);
  const auto s = gen_symbols(2, 32, 3);
  const auto noise = gumbel_batch(32, 6, 4, 4);
  const auto f = forward_train(h, s, w, cfg, q, noise, 1.0, 6.0, SelectionMode::kStraightThrough);
  CHECK(f.outputs.squaredNorm() / 32.0 == doctest::Approx(6.0).epsilon(1e-9));
  for (Eigen::Index i = 0; i < f.outputs.size(); ++i) {
    const cdouble y = f.outputs.data()[i] / f.alpha;
    CHECK(std::find(q.levels.begin(), q.levels.end(), y.real()) != q.levels.end());
    CHECK(std::find(q.levels.begin(), q.levels.end(), y.imag()) != q.levels.end());
  }
  CHECK_THROWS_AS(forward_train(h, s, w, cfg, q, std::span(noise).first(3), 1.0, 6.0,
                                SelectionMode::kStraightThrough),
                  InvalidArgument);
}

TEST_CASE("zero weights sample every level uniformly") {
  const auto cfg = tiny(8, 1, 4, 1, 1);
  const auto w = GnnWeights::zeros(cfg);
  const auto q = lloyd_max(1);
  const auto h = gen_rayleigh(8, 1, 5);
  const auto s = gen_symbols(1, 2000, 6);
  const auto noise = gumbel_batch(2000, 8, 2, 7);
  const auto f = forward_train(h, s, w, cfg, q, noise, 1.0, 8.0, SelectionMode::kStraightThrough);
  int low = 0;
  for (int idx : f.hard) low += idx == 0;
  const double frac = static_cast<double>(low) / static_cast<double>(f.hard.size());
  CHECK(std::abs(frac - 0.5) < 4.0 * std::sqrt(0.25 / static_cast<double>(f.hard.size())));
}

TEST_CASE("sum-rate gradient") {
  const auto h = gen_rayleigh(4, 2, 11);
  const auto s = gen_symbols(2, 12, 12);
  Rng rng(13, Stream::kChannel, 0);
  CMatrix y(4, 12);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.complex_normal();
  const double sigma2 = 0.3;
  const auto g = sum_rate_gradient(h, s, y, sigma2);
  CHECK(g.rate == doctest::Approx(sum_rate(h, estimate_bussgang(s, y), sigma2)).epsilon(1e-12));

  const auto rate = [&](const CMatrix& x) { return sum_rate(h, estimate_bussgang(s, x), sigma2); };
  double worst = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    for (int part = 0; part < 2; ++part) {
      const cdouble step = part == 0 ? cdouble(1e-6, 0.0) : cdouble(0.0, 1e-6);
      CMatrix up = y, down = y;
      up.data()[i] += step;
      down.data()[i] -= step;
      const double fd = (rate(up) - rate(down)) / 2e-6;
      const double an = part == 0 ? g.d_outputs.data()[i].real() : g.d_outputs.data()[i].imag();
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("soft-path gradient matches finite differences for every family") {
  const auto cfg = tiny(2, 1, 4, 2, 1);
  const auto w = init_weights(cfg, 17).cast<double>();
  const auto q = lloyd_max(1);
  const auto h = gen_rayleigh(2, 1, 18);
  const auto s = gen_symbols(1, 8, 19);
  const auto noise = gumbel_batch(8, 2, 2, 20);
  TrainConfig tc;
  tc.total_power = 2.0;
  const auto lg = loss_and_grad(h, s, w, cfg, tc, q, noise, SelectionMode::kSoft);
  const auto loss_at = [&](const BasicGnnWeights<double>& x) {
    return loss_and_grad(h, s, x, cfg, tc, q, noise, SelectionMode::kSoft).loss;
  };
  CHECK(lg.loss == doctest::Approx(-lg.rate));

  for (auto f : kWeightFamilies) {
    double worst = 0.0;
    int checked = 0;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto& m = w.layers[l].get(f);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        auto up = w, down = w;
        const double e = 1e-6;
        up.layers[l].get(f).data()[i] += e;
        down.layers[l].get(f).data()[i] -= e;
        const double fd = (loss_at(up) - loss_at(down)) / (2 * e);
        const double an = lg.grads.layers[l].get(f).data()[i];
        worst = std::max(worst, std::abs(fd - an) / std::max(1e-4, std::abs(fd)));
        ++checked;
      }
    }
    INFO(family_name(f));
    CHECK(checked > 0);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("gradients at zero and at initial weights") {
  const auto cfg = tiny(4, 1, 4, 1, 1);
  const auto q = lloyd_max(1);
  const auto h = gen_rayleigh(4, 1, 21);
  const auto s = gen_symbols(1, 16, 22);
  const auto noise = gumbel_batch(16, 4, 2, 23);
  TrainConfig tc;
  const auto zero = loss_and_grad(h, s, GnnWeights::zeros(cfg), cfg, tc, q, noise);
  for (const auto& layer : zero.grads.layers) {
    for (auto f : kWeightFamilies) CHECK(layer.get(f).isZero());
  }
  const auto init = loss_and_grad(h, s, init_weights(cfg, 24), cfg, tc, q, noise);
  CHECK(init.loss <= 0.0);
  CHECK(init.grads.layers.back().edge.norm() > 0.0f);
  CHECK(init.grads.layers.back().self_bs.norm() + init.grads.layers.back().neigh_bs.norm() > 0.0f);
}

TEST_CASE("Adam") {
  const auto cfg = tiny(2, 1, 3, 1, 1);
  auto w = init_weights(cfg, 1);
  const auto start = w;
  auto g = GnnWeights::zeros(cfg);
  for (auto& layer : g.layers) {
    for (auto f : kWeightFamilies) layer.get(f).setConstant(0.25f);
  }
  AdamOptimizer opt(cfg, AdamParams{});
  opt.step(w, g, 0.01);
  CHECK(opt.state().step == 1);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    for (auto f : kWeightFamilies) {
      const auto d = (w.layers[l].get(f) - start.layers[l].get(f)).eval();
      if (d.size() == 0) continue;
      CHECK(d.maxCoeff() <= 0.0f);
      CHECK(d.cwiseAbs().maxCoeff() <= 0.01f * 1.0001f);
      CHECK(d.cwiseAbs().minCoeff() >= 0.01f * 0.999f);
    }
  }
  auto w2 = w;
  opt.step(w2, GnnWeights::zeros(cfg), 0.01);
  CHECK_FALSE(same_weights(w, w2));  // momentum keeps moving

  auto a = start, b = start;
  AdamOptimizer oa(cfg, AdamParams{}), ob(cfg, AdamParams{});
  oa.step(a, g, 0.01);
  ob.step(b, g, 0.01);
  CHECK(same_weights(a, b));
}

TEST_CASE("training config checks") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate(1));
  t.symbols_per_channel = 1;
  CHECK_THROWS_AS(t.validate(1), InvalidArgument);
  t = TrainConfig{};
  t.learning_rate = 0.0;
  CHECK_THROWS_AS(t.validate(1), InvalidArgument);
  t = TrainConfig{};
  t.batch_channels = 0;
  CHECK_THROWS_AS(t.validate(1), InvalidArgument);
  CHECK(TrainConfig{}.power_for(32) == 32.0);
  CHECK(training_symbols(quick_train(), 1, 3).symbols == training_symbols(quick_train(), 1, 3).symbols);
}

TEST_CASE("training is deterministic and resumes exactly") {
  const auto cfg = tiny(4, 1, 4, 1, 1);
  const auto q = lloyd_max(1);
  const auto train_set = gen_rayleigh_dataset(4, 1, 16, 31);
  const auto val_set = gen_rayleigh_dataset(4, 1, 4, 32);
  const auto tc = quick_train();

  const auto dir = std::filesystem::temp_directory_path() / "qprec_trainer_test";
  std::filesystem::create_directories(dir);
  TrainOptions full_opts;
  full_opts.log_path = dir / "full.csv";
  full_opts.checkpoint_path = dir / "full.ckpt";
  full_opts.best_checkpoint_path = dir / "best.ckpt";
  const auto full = train(train_set, val_set, cfg, tc, q, full_opts);
  const auto again = train(train_set, val_set, cfg, tc, q);
  CHECK(same_weights(full.last.weights, again.last.weights));
  CHECK(full.last.meta.step == 8);
  CHECK(full.last.meta.epoch == 2);
  CHECK(load_checkpoint(dir / "full.ckpt").meta.step == 8);
  CHECK(std::filesystem::exists(dir / "best.ckpt"));
  CHECK(full.best.meta.best_val_rate >= full.last.meta.last_val_rate);

  std::ifstream log(dir / "full.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,step,loss,val_rate,wall_ms");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == static_cast<int>(full.log.size()));
  CHECK(full.log.front().step == 0);
  CHECK(std::isfinite(full.log.front().val_rate));

  for (std::uint64_t stop : {3u, 4u}) {
    TrainOptions first;
    first.max_steps = stop;
    const auto part = train(train_set, val_set, cfg, tc, q, first);
    CHECK(part.last.meta.step == stop);
    TrainOptions second;
    second.resume = part.last;
    const auto rest = train(train_set, val_set, cfg, tc, q, second);
    CHECK(rest.last.meta.step == 8);
    CHECK(same_weights(rest.last.weights, full.last.weights));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("validation rate") {
  const auto cfg = tiny(4, 1, 4, 1, 1);
  const auto q = lloyd_max(1);
  const auto val = gen_rayleigh_dataset(4, 1, 3, 40);
  const auto w = init_weights(cfg, 41);
  const double r = validation_rate(val, w, cfg, q, 4.0, 20.0, 64, 42);
  CHECK(r >= 0.0);
  CHECK(r == validation_rate(val, w, cfg, q, 4.0, 20.0, 64, 42));
}
