#include "support/counting_gnn.hpp"

#include <algorithm>

namespace qprec::testing {

namespace {

using Vec = std::vector<double>;

struct Counter {
  OpCount ops;
  double mul(double a, double b) {
    ++ops.mul;
    return a * b;
  }
  double add(double a, double b) {
    ++ops.add;
    return a + b;
  }

  Vec matvec(const RowMatrix<double>& w, const Vec& x) {
    Vec y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = mul(w(i, 0), x[0]);
      for (Eigen::Index j = 1; j < w.cols(); ++j) acc = add(acc, mul(w(i, j), x[static_cast<std::size_t>(j)]));
      y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
  }

  Vec sum(const Vec& a, const Vec& b) {
    Vec y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = add(a[i], b[i]);
    return y;
  }

  Vec mean(const std::vector<const Vec*>& items) {
    Vec y = *items[0];
    for (std::size_t n = 1; n < items.size(); ++n) y = sum(y, *items[n]);
    const double inv = 1.0 / static_cast<double>(items.size());
    for (auto& v : y) v = mul(v, inv);
    return y;
  }
};

Vec leaky(Vec v, double slope) {
  for (auto& x : v) x = x > 0.0 ? x : slope * x;
  return v;
}

}  // namespace

CountedForward counted_forward(const ChannelMatrix& channel, const CVector& symbol,
                               const BasicGnnWeights<double>& weights, const GnnConfig& config) {
  const int M = channel.antennas(), K = channel.users();
  std::vector<std::vector<Vec>> edge(static_cast<std::size_t>(M), std::vector<Vec>(static_cast<std::size_t>(K)));
  std::vector<Vec> bs(static_cast<std::size_t>(M), Vec{0.0, 0.0});
  std::vector<Vec> ue(static_cast<std::size_t>(K));
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      edge[m][k] = {channel.entries(m, k).real(), channel.entries(m, k).imag()};
    }
  }
  for (int k = 0; k < K; ++k) ue[k] = {symbol[k].real(), symbol[k].imag()};

  CountedForward out;
  for (int l = 0; l < config.num_layers(); ++l) {
    const auto& w = weights.layers[static_cast<std::size_t>(l)];
    const bool last = config.is_output(l);
    Counter c;
    std::vector<std::vector<Vec>> next_edge = edge;
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) {
        const Vec a = c.matvec(w.edge, edge[m][k]);
        const Vec b = c.matvec(w.bs, bs[m]);
        const Vec u = c.matvec(w.ue, ue[k]);
        next_edge[m][k] = leaky(c.sum(c.sum(a, b), u), config.leaky_slope);
      }
    }
    std::vector<Vec> next_bs(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      std::vector<const Vec*> items;
      for (int k = 0; k < K; ++k) items.push_back(&next_edge[m][k]);
      const Vec msg = c.mean(items);
      const Vec pre = c.sum(c.matvec(w.self_bs, bs[m]), c.matvec(w.neigh_bs, msg));
      next_bs[m] = last ? pre : leaky(pre, config.leaky_slope);
    }
    std::vector<Vec> next_ue = ue;
    if (!last) {
      for (int k = 0; k < K; ++k) {
        std::vector<const Vec*> items;
        for (int m = 0; m < M; ++m) items.push_back(&next_edge[m][k]);
        const Vec msg = c.mean(items);
        next_ue[k] = leaky(c.sum(c.matvec(w.self_ue, ue[k]), c.matvec(w.neigh_ue, msg)),
                           config.leaky_slope);
      }
    }
    edge = std::move(next_edge);
    bs = std::move(next_bs);
    ue = std::move(next_ue);
    if (l == 0) {
      out.input = c.ops;
    } else if (last) {
      out.output = c.ops;
    } else {
      out.hidden_total.mul += c.ops.mul;
      out.hidden_total.add += c.ops.add;
    }
  }
  out.logits = bs;
  return out;
}

}  // namespace qprec::testing
