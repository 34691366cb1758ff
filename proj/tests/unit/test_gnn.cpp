#include "qprec/energy.hpp"
#include "qprec/gnn.hpp"
#include "qprec/rng.hpp"

#include "support/counting_gnn.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace qprec;

namespace {

GnnConfig small_config(int m, int k, int dh, int nh, int b) {
  GnnConfig c;
  c.antennas = m;
  c.users = k;
  c.hidden_width = dh;
  c.hidden_layers = nh;
  c.bits = b;
  return c;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(std::min(j, i))]);
  }
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qprec_gnn_" + name);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(small_config(4, 2, 8, 2, 1).validate());
  CHECK_THROWS_AS(small_config(4, 2, 0, 2, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(small_config(4, 2, 8, 0, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(small_config(4, 2, 8, 2, 0).validate(), InvalidArgument);
  CHECK_THROWS_AS(small_config(0, 2, 8, 2, 1).validate(), InvalidArgument);
  const auto c = small_config(4, 2, 8, 2, 3);
  CHECK(c.num_layers() == 4);
  CHECK(c.levels() == 8);
  CHECK(c.output_width() == 16);
}

TEST_CASE("input features") {
  CMatrix h(2, 2);
  h << cdouble(1, 2), cdouble(3, 4), cdouble(5, 6), cdouble(7, 8);
  ChannelMatrix ch;
  ch.entries = h;
  CVector s(2);
  s << cdouble(0.5, -0.5), cdouble(-1, 1);
  const auto in = init_inputs<double>(ch, s);
  CHECK(in.edge.rows() == 4);
  CHECK(in.edge(1, 0) == 3.0);
  CHECK(in.edge(1, 1) == 4.0);
  CHECK(in.edge(2, 0) == 5.0);
  CHECK(in.bs.isZero());
  CHECK(in.ue(1, 0) == -1.0);
  CHECK(in.ue(1, 1) == 1.0);
  CHECK_THROWS_AS(init_inputs<double>(ch, CVector(CVector::Zero(3))), InvalidArgument);
}

TEST_CASE("zero weights give uniform probabilities and the lowest level") {
  const auto cfg = small_config(4, 2, 8, 2, 2);
  const auto w = GnnWeights::zeros(cfg);
  const auto h = gen_rayleigh(4, 2, 1);
  const auto s = gen_symbols(2, 1, 2);
  const CVector sym = s.symbols.row(0).transpose();
  const auto p = forward(h, sym, w, cfg);
  CHECK((p.p_re.array() - 0.25).abs().maxCoeff() < 1e-12);
  CHECK((p.p_im.array() - 0.25).abs().maxCoeff() < 1e-12);
  const auto q = lloyd_max(2);
  const auto y = infer(h, sym, w, cfg, q);
  for (int m = 0; m < 4; ++m) CHECK(y[m] == cdouble(q.levels[0], q.levels[0]));
}

TEST_CASE("single user: the antenna message is the edge feature") {
  const auto cfg = small_config(3, 1, 4, 1, 1);
  const auto w = init_weights(cfg, 3).cast<double>();
  const auto in = init_inputs<double>(gen_rayleigh(3, 1, 4), CVector(gen_symbols(1, 1, 5).symbols.row(0).transpose()));
  LayerCache<double> cache;
  const auto next = layer_forward(in, w.layers[0], false, cfg.leaky_slope, &cache);
  CHECK(cache.msg_bs == next.edge);
}

TEST_CASE("hand-traced forward pass") {
  auto cfg = small_config(1, 1, 1, 1, 1);
  auto w = BasicGnnWeights<double>::zeros(cfg);
  auto& l0 = w.layers[0];
  l0.edge << 1.0, -0.5;
  l0.bs << 0.5, 0.5;
  l0.ue << 2.0, 0.0;
  l0.self_bs << 1.0, 1.0;
  l0.self_ue << 0.0, 1.0;
  l0.neigh_bs << 1.0;
  l0.neigh_ue << -1.0;
  auto& l1 = w.layers[1];
  l1.edge << 2.0;
  l1.bs << 1.0;
  l1.ue << 10.0;
  l1.self_bs << 3.0;
  l1.self_ue << 1.0;
  l1.neigh_bs << -1.0;
  l1.neigh_ue << 1.0;
  auto& l2 = w.layers[2];
  l2.edge << 1.0, -1.0, 0.0, 2.0;
  l2.bs.setZero();
  l2.ue << 1.0, 0.0, 0.0, 0.0;
  l2.self_bs << 1.0, 2.0, 3.0, 4.0;
  l2.neigh_bs.setIdentity();

  ChannelMatrix h;
  h.entries = CMatrix::Constant(1, 1, cdouble(1.0, 2.0));
  CVector s(1);
  s << cdouble(0.5, -1.0);
  // layer 0: edge 1, antenna 1, user lrelu(-2) = -0.02
  // layer 1: edge 2.8, antenna 0.2, user 2.78
  // output:  edge [5.58, -0.028, 0, 5.6], logits 0.2*[1 2 3 4] + edge
  const auto logits = forward_logits(init_inputs<double>(h, s), w, cfg);
  REQUIRE(logits.rows() == 1);
  REQUIRE(logits.cols() == 4);
  CHECK(logits(0, 0) == doctest::Approx(5.78).epsilon(1e-12));
  CHECK(logits(0, 1) == doctest::Approx(0.372).epsilon(1e-12));
  CHECK(logits(0, 2) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(logits(0, 3) == doctest::Approx(6.4).epsilon(1e-12));
}

TEST_CASE("antenna and user permutations are exact") {
  Rng rng(77, Stream::kInit, 0);
  for (int t = 0; t < 50; ++t) {
    const int M = 2 + t % 7, K = 1 + t % 4, N = 1 + t % 3;
    const auto cfg = small_config(M, K, 4 + t % 5, 1 + t % 3, 1 + t % 2);
    const auto w = init_weights(cfg, static_cast<std::uint64_t>(t));
    const auto h = gen_rayleigh(M, K, 1000 + t);
    const auto s = gen_symbols(K, N, 2000 + t);
    const auto base = forward_logits(init_inputs<float>(h, CMatrix(s.symbols)), w, cfg);

    const auto pm = random_permutation(M, rng);
    const auto pk = random_permutation(K, rng);
    ChannelMatrix hp = h;
    CMatrix sp = s.symbols;
    for (int m = 0; m < M; ++m) hp.entries.row(m) = h.entries.row(pm[static_cast<std::size_t>(m)]);
    const ChannelMatrix rows_only = hp;
    for (int k = 0; k < K; ++k) {
      hp.entries.col(k) = rows_only.entries.col(pk[static_cast<std::size_t>(k)]);
      sp.col(k) = s.symbols.col(pk[static_cast<std::size_t>(k)]);
    }
    const auto moved = forward_logits(init_inputs<float>(hp, sp), w, cfg);
    bool exact = true;
    for (int n = 0; n < N; ++n) {
      for (int m = 0; m < M; ++m) {
        exact = exact && (moved.row(n * M + m) == base.row(n * M + pm[static_cast<std::size_t>(m)]));
      }
    }
    CHECK(exact);
  }
}

TEST_CASE("probabilities") {
  const auto cfg = small_config(5, 2, 8, 2, 3);
  const auto w = init_weights(cfg, 9);
  const auto h = gen_rayleigh(5, 2, 10);
  const auto s = gen_symbols(2, 4, 11);
  auto logits = forward_logits(init_inputs<float>(h, CMatrix(s.symbols)), w, cfg);
  const auto probs = probabilities(logits, 4, 5, 8);
  REQUIRE(probs.size() == 4);
  for (const auto& p : probs) {
    CHECK((p.p_re.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK((p.p_im.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(p.p_re.minCoeff() >= 0.0);
  }
  logits.leftCols(8).array() += 3.0f;
  logits.rightCols(8).array() -= 2.0f;
  const auto shifted = probabilities(logits, 4, 5, 8);
  for (std::size_t n = 0; n < 4; ++n) {
    CHECK((shifted[n].p_re - probs[n].p_re).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((shifted[n].p_im - probs[n].p_im).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK_THROWS_AS(probabilities(logits, 3, 5, 8), InvalidArgument);
}

TEST_CASE("inference picks alphabet members and checks the graph") {
  const auto cfg = small_config(6, 2, 8, 2, 2);
  const auto w = init_weights(cfg, 12);
  const auto q = lloyd_max(2);
  const auto h = gen_rayleigh(6, 2, 13);
  const auto s = gen_symbols(2, 20, 14);
  const CMatrix y = infer_batch(h, s.symbols, w, cfg, q);
  REQUIRE(y.rows() == 6);
  REQUIRE(y.cols() == 20);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    CHECK(std::find(q.levels.begin(), q.levels.end(), y.data()[i].real()) != q.levels.end());
    CHECK(std::find(q.levels.begin(), q.levels.end(), y.data()[i].imag()) != q.levels.end());
  }
  const CVector one = infer(h, s.symbols.row(3).transpose(), w, cfg, q);
  CHECK(one == y.col(3));

  CHECK_THROWS_AS(infer_batch(gen_rayleigh(5, 2, 1), s.symbols, w, cfg, q), InvalidArgument);
  CHECK_THROWS_AS(infer_batch(h, s.symbols, w, cfg, lloyd_max(1)), InvalidArgument);

  const CMatrix scaled = normalize_power(y, 6.0);
  CHECK(scaled.squaredNorm() / 20.0 == doctest::Approx(6.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalize_power(CMatrix::Zero(3, 4), 1.0), NumericalError);
}

TEST_CASE("weights shape checks") {
  const auto cfg = small_config(4, 1, 8, 2, 1);
  auto w = init_weights(cfg, 1);
  CHECK(w.matches(cfg));
  CHECK(w.all_finite());
  CHECK_FALSE(w.matches(small_config(4, 1, 9, 2, 1)));
  CHECK(w.parameter_count() ==
        static_cast<std::size_t>(8 * 2 * 5 + 8 * 8 * 2 +          // input layer
                                 2 * (8 * 8 * 5 + 8 * 8 * 2) +     // hidden layers
                                 4 * 8 * 4 + 4 * 4));               // output layer
  w.layers[1].edge(0, 0) = std::nanf("");
  CHECK_FALSE(w.all_finite());
  const auto h = gen_rayleigh(4, 1, 2);
  CHECK_THROWS_AS(forward_logits(init_inputs<float>(h, CVector(CVector::Ones(1))),
                                 init_weights(small_config(4, 1, 9, 2, 1), 1), cfg),
                  InvalidArgument);
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.config = small_config(4, 2, 6, 2, 2);
  ck.weights = init_weights(ck.config, 21);
  ck.meta.seed = 99;
  ck.meta.epoch = 3;
  ck.meta.step = 1234;
  ck.meta.best_val_rate = 4.5;
  ck.meta.last_val_rate = 4.25;
  OptimizerState opt;
  opt.first_moment = init_weights(ck.config, 22);
  opt.second_moment = init_weights(ck.config, 23);
  opt.step = 1234;
  ck.optimizer = opt;

  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.config.hidden_width == 6);
  CHECK(back.config.bits == 2);
  CHECK(back.config.users == 2);
  CHECK(back.meta.seed == 99);
  CHECK(back.meta.step == 1234);
  CHECK(back.meta.best_val_rate == 4.5);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->step == 1234);
  for (std::size_t l = 0; l < ck.weights.layers.size(); ++l) {
    for (auto f : kWeightFamilies) {
      CHECK(back.weights.layers[l].get(f) == ck.weights.layers[l].get(f));
      CHECK(back.optimizer->second_moment.layers[l].get(f) == opt.second_moment.layers[l].get(f));
    }
  }

  ck.optimizer.reset();
  save_checkpoint(path, ck);
  CHECK_FALSE(load_checkpoint(path).optimizer.has_value());

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  write(bytes.substr(0, bytes.size() - 7));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointFormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointFormatError);
  bad = bytes;
  bad[4] = 7;
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointFormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("instrumented forward matches the network and the operation count") {
  Rng rng(31, Stream::kInit, 0);
  for (int t = 0; t < 20; ++t) {
    const int M = 1 + static_cast<int>(rng.uniform() * 6);
    const int K = 1 + static_cast<int>(rng.uniform() * 4);
    const int dh = 1 + static_cast<int>(rng.uniform() * 9);
    const int nh = 1 + static_cast<int>(rng.uniform() * 3);
    const int b = 1 + static_cast<int>(rng.uniform() * 3);
    const auto cfg = small_config(M, K, dh, nh, b);
    const auto w = init_weights(cfg, 40 + t).cast<double>();
    const auto h = gen_rayleigh(M, K, 50 + t);
    const CVector s = gen_symbols(K, 1, 60 + t).symbols.row(0).transpose();

    const auto counted = testing::counted_forward(h, s, w, cfg);
    const auto logits = forward_logits(init_inputs<double>(h, s), w, cfg);
    double worst = 0.0;
    for (int m = 0; m < M; ++m) {
      for (int i = 0; i < cfg.output_width(); ++i) {
        worst = std::max(worst, std::abs(counted.logits[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] - logits(m, i)));
      }
    }
    CHECK(worst < 1e-10);

    const auto f = gnn_flops(M, K, dh, nh, b);
    CHECK(counted.input.mul == f.input.mul);
    CHECK(counted.input.add == f.input.add);
    CHECK(counted.hidden_total.mul == f.hidden.mul * static_cast<std::uint64_t>(nh));
    CHECK(counted.hidden_total.add == f.hidden.add * static_cast<std::uint64_t>(nh));
    CHECK(counted.output.mul == f.output.mul);
    CHECK(counted.output.add == f.output.add);
  }
}

TEST_CASE("full-size network operation count") {
  const auto cfg = small_config(32, 1, 128, 4, 1);
  const auto w = BasicGnnWeights<double>::zeros(cfg);
  const auto counted = testing::counted_forward(gen_rayleigh(32, 1, 1), CVector(CVector::Ones(1)), w, cfg);
  const std::uint64_t total = counted.input.total() + counted.hidden_total.total() + counted.output.total();
  CHECK(total == 22512384u);
  CHECK(gnn_flops(32, 1, 128, 4, 1).total() == 22512384u);
}
