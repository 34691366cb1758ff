#include "qprec/gnn.hpp"

#include "qprec/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace qprec {

void GnnConfig::validate() const {
  if (hidden_layers < 1 || hidden_width < 1) {
    throw InvalidArgument("GNN needs N_h >= 1 and d_h >= 1");
  }
  if (bits < 1 || bits > 8) throw InvalidArgument("GNN supports 1 <= b <= 8");
  if (antennas < 1 || users < 1) throw InvalidArgument("GNN graph needs M >= 1 and K >= 1");
  if (!(leaky_slope >= 0.0)) throw InvalidArgument("leaky slope must be non-negative");
}

std::string family_name(WeightFamily family) {
  switch (family) {
    case WeightFamily::kEdge: return "edge";
    case WeightFamily::kBs: return "bs";
    case WeightFamily::kUe: return "ue";
    case WeightFamily::kSelfBs: return "self_bs";
    case WeightFamily::kSelfUe: return "self_ue";
    case WeightFamily::kNeighBs: return "neigh_bs";
    case WeightFamily::kNeighUe: return "neigh_ue";
  }
  return "?";
}

template <typename T>
RowMatrix<T>& LayerWeights<T>::get(WeightFamily f) {
  return const_cast<RowMatrix<T>&>(std::as_const(*this).get(f));
}

template <typename T>
const RowMatrix<T>& LayerWeights<T>::get(WeightFamily f) const {
  switch (f) {
    case WeightFamily::kEdge: return edge;
    case WeightFamily::kBs: return bs;
    case WeightFamily::kUe: return ue;
    case WeightFamily::kSelfBs: return self_bs;
    case WeightFamily::kSelfUe: return self_ue;
    case WeightFamily::kNeighBs: return neigh_bs;
    case WeightFamily::kNeighUe: return neigh_ue;
  }
  return edge;
}

namespace {

struct Shape {
  int rows = 0;
  int cols = 0;
};

Shape family_shape(const GnnConfig& c, int layer, WeightFamily f) {
  const int in = c.in_width(layer);
  const int out = c.out_width(layer);
  const bool out_layer = c.is_output(layer);
  switch (f) {
    case WeightFamily::kEdge:
    case WeightFamily::kBs:
    case WeightFamily::kUe:
    case WeightFamily::kSelfBs: return {out, in};
    case WeightFamily::kSelfUe: return out_layer ? Shape{} : Shape{out, in};
    case WeightFamily::kNeighBs: return {out, out};
    case WeightFamily::kNeighUe: return out_layer ? Shape{} : Shape{out, out};
  }
  return {};
}

template <typename T>
T leaky(T x, T slope) {
  return x > T(0) ? x : slope * x;
}

template <typename T>
RowMatrix<T> activate(const RowMatrix<T>& pre, double slope) {
  const T s = static_cast<T>(slope);
  return pre.unaryExpr([s](T x) { return leaky(x, s); });
}

// d ⊙ σ'(pre)
template <typename T>
RowMatrix<T> activation_grad(const RowMatrix<T>& d, const RowMatrix<T>& pre, double slope) {
  const T s = static_cast<T>(slope);
  return d.binaryExpr(pre, [s](T g, T x) { return x > T(0) ? g : s * g; });
}

// x * w^T with every output row produced by the same instruction sequence, so a
// row's result does not depend on its position (a blocked GEMM does not promise
// that).
template <typename T>
RowMatrix<T> times_transposed(const RowMatrix<T>& x, const RowMatrix<T>& w) {
  const Eigen::Index rows = x.rows(), in = x.cols(), out = w.rows();
  const RowMatrix<T> wt = w.transpose();
  RowMatrix<T> y = RowMatrix<T>::Zero(rows, out);
  for (Eigen::Index r = 0; r < rows; ++r) {
    T* __restrict yr = y.data() + r * out;
    const T* xr = x.data() + r * in;
    for (Eigen::Index i = 0; i < in; ++i) {
      const T a = xr[i];
      const T* __restrict wi = wt.data() + i * out;
      for (Eigen::Index j = 0; j < out; ++j) yr[j] += a * wi[j];
    }
  }
  return y;
}

// Mean over a group of rows, summed in sorted order per feature.
// Group g collects rows row_of(g, i) for i in [0, count).
template <typename T, typename RowOf>
RowMatrix<T> sorted_group_mean(const RowMatrix<T>& src, int groups, int count, RowOf row_of) {
  const Eigen::Index d = src.cols();
  RowMatrix<T> out(groups, d);
  const T inv = T(1) / static_cast<T>(count);
  std::vector<T> buf(static_cast<std::size_t>(count));
  for (int g = 0; g < groups; ++g) {
    for (Eigen::Index f = 0; f < d; ++f) {
      for (int i = 0; i < count; ++i) buf[static_cast<std::size_t>(i)] = src(row_of(g, i), f);
      std::sort(buf.begin(), buf.end());
      T sum = buf[0];
      for (int i = 1; i < count; ++i) sum += buf[static_cast<std::size_t>(i)];
      out(g, f) = sum * inv;
    }
  }
  return out;
}

template <typename T>
RowMatrix<T> user_messages(const GraphState<T>& s, const RowMatrix<T>& edge) {
  const int M = s.antennas, K = s.users;
  return sorted_group_mean<T>(edge, s.symbols * K, M, [M, K](int g, int m) {
    const int n = g / K, k = g % K;
    return (n * M + m) * K + k;
  });
}

template <typename T>
RowMatrix<T> antenna_messages(const GraphState<T>& s, const RowMatrix<T>& edge) {
  const int K = s.users;
  return sorted_group_mean<T>(edge, s.symbols * s.antennas, K,
                              [K](int g, int k) { return g * K + k; });
}

}  // namespace

template <typename T>
BasicGnnWeights<T> BasicGnnWeights<T>::zeros(const GnnConfig& config) {
  config.validate();
  BasicGnnWeights<T> w;
  w.layers.resize(static_cast<std::size_t>(config.num_layers()));
  for (int l = 0; l < config.num_layers(); ++l) {
    for (auto f : kWeightFamilies) {
      const Shape sh = family_shape(config, l, f);
      w.layers[static_cast<std::size_t>(l)].get(f) = RowMatrix<T>::Zero(sh.rows, sh.cols);
    }
  }
  return w;
}

template <typename T>
std::size_t BasicGnnWeights<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (auto f : kWeightFamilies) n += static_cast<std::size_t>(layer.get(f).size());
  }
  return n;
}

template <typename T>
bool BasicGnnWeights<T>::all_finite() const {
  for (const auto& layer : layers) {
    for (auto f : kWeightFamilies) {
      if (!layer.get(f).allFinite()) return false;
    }
  }
  return true;
}

template <typename T>
bool BasicGnnWeights<T>::matches(const GnnConfig& config) const {
  if (layers.size() != static_cast<std::size_t>(config.num_layers())) return false;
  for (int l = 0; l < config.num_layers(); ++l) {
    for (auto f : kWeightFamilies) {
      const Shape sh = family_shape(config, l, f);
      const auto& m = layers[static_cast<std::size_t>(l)].get(f);
      if (m.rows() != sh.rows || m.cols() != sh.cols) return false;
    }
  }
  return true;
}

GnnWeights init_weights(const GnnConfig& config, std::uint64_t seed) {
  GnnWeights w = GnnWeights::zeros(config);
  for (int l = 0; l < config.num_layers(); ++l) {
    for (std::size_t fi = 0; fi < kWeightFamilies.size(); ++fi) {
      auto& m = w.layers[static_cast<std::size_t>(l)].get(kWeightFamilies[fi]);
      if (m.size() == 0) continue;
      const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      Rng rng(seed, Stream::kInit, static_cast<std::uint64_t>(l) * 16 + fi);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<float>(bound * (2.0 * rng.uniform() - 1.0));
      }
    }
  }
  return w;
}

template <typename T>
GraphState<T> init_inputs(const ChannelMatrix& channel, const CMatrix& symbols) {
  const int M = channel.antennas(), K = channel.users();
  if (symbols.cols() != K) {
    throw InvalidArgument("symbol vectors have " + std::to_string(symbols.cols()) +
                          " users, channel has " + std::to_string(K));
  }
  const int N = static_cast<int>(symbols.rows());
  GraphState<T> s;
  s.symbols = N;
  s.antennas = M;
  s.users = K;
  s.edge.resize(static_cast<Eigen::Index>(N) * M * K, 2);
  s.bs = RowMatrix<T>::Zero(static_cast<Eigen::Index>(N) * M, 2);
  s.ue.resize(static_cast<Eigen::Index>(N) * K, 2);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) {
        const Eigen::Index e = (static_cast<Eigen::Index>(n) * M + m) * K + k;
        s.edge(e, 0) = static_cast<T>(channel.entries(m, k).real());
        s.edge(e, 1) = static_cast<T>(channel.entries(m, k).imag());
      }
    }
    for (int k = 0; k < K; ++k) {
      s.ue(n * K + k, 0) = static_cast<T>(symbols(n, k).real());
      s.ue(n * K + k, 1) = static_cast<T>(symbols(n, k).imag());
    }
  }
  return s;
}

template <typename T>
GraphState<T> init_inputs(const ChannelMatrix& channel, const CVector& symbol) {
  return init_inputs<T>(channel, CMatrix(symbol.transpose()));
}

template <typename T>
GraphState<T> layer_forward(const GraphState<T>& state, const LayerWeights<T>& w, bool is_output,
                            double leaky_slope, LayerCache<T>* cache) {
  const int N = state.symbols, M = state.antennas, K = state.users;
  if (w.edge.cols() != state.edge.cols() || w.bs.cols() != state.bs.cols() ||
      w.ue.cols() != state.ue.cols() || w.self_bs.cols() != state.bs.cols()) {
    throw InvalidArgument("layer weights do not match feature width");
  }

  const RowMatrix<T> from_edge = times_transposed(state.edge, w.edge);
  const RowMatrix<T> from_bs = times_transposed(state.bs, w.bs);
  const RowMatrix<T> from_ue = times_transposed(state.ue, w.ue);
  RowMatrix<T> pre_edge(from_edge.rows(), from_edge.cols());
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) {
        const Eigen::Index e = (static_cast<Eigen::Index>(n) * M + m) * K + k;
        pre_edge.row(e) = from_edge.row(e) + from_bs.row(n * M + m) + from_ue.row(n * K + k);
      }
    }
  }

  GraphState<T> next;
  next.symbols = N;
  next.antennas = M;
  next.users = K;
  next.edge = activate(pre_edge, leaky_slope);

  RowMatrix<T> msg_bs = antenna_messages(state, next.edge);
  RowMatrix<T> pre_bs = times_transposed(state.bs, w.self_bs) + times_transposed(msg_bs, w.neigh_bs);
  next.bs = is_output ? pre_bs : activate(pre_bs, leaky_slope);

  RowMatrix<T> msg_ue, pre_ue;
  if (!is_output) {
    msg_ue = user_messages(state, next.edge);
    pre_ue = times_transposed(state.ue, w.self_ue) + times_transposed(msg_ue, w.neigh_ue);
    next.ue = activate(pre_ue, leaky_slope);
  }
  if (cache != nullptr) {
    cache->pre_edge = std::move(pre_edge);
    cache->pre_bs = std::move(pre_bs);
    cache->pre_ue = std::move(pre_ue);
    cache->msg_bs = std::move(msg_bs);
    cache->msg_ue = std::move(msg_ue);
  }
  return next;
}

template <typename T>
RowMatrix<T> forward_logits(const GraphState<T>& inputs, const BasicGnnWeights<T>& weights,
                            const GnnConfig& config, GnnTape<T>* tape) {
  if (!weights.matches(config)) throw InvalidArgument("GNN weights do not match configuration");
  if (tape != nullptr) {
    tape->states.clear();
    tape->caches.assign(static_cast<std::size_t>(config.num_layers()), {});
    tape->states.push_back(inputs);
  }
  GraphState<T> state = inputs;
  for (int l = 0; l < config.num_layers(); ++l) {
    LayerCache<T>* cache = tape ? &tape->caches[static_cast<std::size_t>(l)] : nullptr;
    state = layer_forward(state, weights.layers[static_cast<std::size_t>(l)], config.is_output(l),
                          config.leaky_slope, cache);
    if (tape != nullptr) tape->states.push_back(state);
  }
  return state.bs;
}

template <typename T>
void backward(const GnnTape<T>& tape, const BasicGnnWeights<T>& weights, const GnnConfig& config,
              const RowMatrix<T>& d_logits, BasicGnnWeights<T>& grads) {
  const int layers = config.num_layers();
  if (tape.caches.size() != static_cast<std::size_t>(layers) ||
      tape.states.size() != static_cast<std::size_t>(layers) + 1) {
    throw InvalidArgument("tape does not match network depth");
  }
  const double slope = config.leaky_slope;
  RowMatrix<T> d_edge, d_bs = d_logits, d_ue;  // gradients w.r.t. the current layer's outputs

  for (int l = layers - 1; l >= 0; --l) {
    const auto& w = weights.layers[static_cast<std::size_t>(l)];
    auto& g = grads.layers[static_cast<std::size_t>(l)];
    const auto& c = tape.caches[static_cast<std::size_t>(l)];
    const auto& prev = tape.states[static_cast<std::size_t>(l)];
    const int N = prev.symbols, M = prev.antennas, K = prev.users;
    const bool out_layer = config.is_output(l);

    const RowMatrix<T> d_pre_bs = out_layer ? d_bs : activation_grad(d_bs, c.pre_bs, slope);
    g.self_bs.noalias() += d_pre_bs.transpose() * prev.bs;
    g.neigh_bs.noalias() += d_pre_bs.transpose() * c.msg_bs;
    RowMatrix<T> d_prev_bs = d_pre_bs * w.self_bs;
    const RowMatrix<T> d_msg_bs = d_pre_bs * w.neigh_bs;

    RowMatrix<T> d_prev_ue, d_msg_ue;
    if (!out_layer) {
      const RowMatrix<T> d_pre_ue = activation_grad(d_ue, c.pre_ue, slope);
      g.self_ue.noalias() += d_pre_ue.transpose() * prev.ue;
      g.neigh_ue.noalias() += d_pre_ue.transpose() * c.msg_ue;
      d_prev_ue = d_pre_ue * w.self_ue;
      d_msg_ue = d_pre_ue * w.neigh_ue;
    }

    // Scatter the mean messages back onto their edges.
    RowMatrix<T> d_edge_total =
        d_edge.size() ? d_edge : RowMatrix<T>::Zero(c.pre_edge.rows(), c.pre_edge.cols());
    const T inv_k = T(1) / static_cast<T>(K);
    const T inv_m = T(1) / static_cast<T>(M);
    for (int n = 0; n < N; ++n) {
      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < K; ++k) {
          const Eigen::Index e = (static_cast<Eigen::Index>(n) * M + m) * K + k;
          d_edge_total.row(e) += inv_k * d_msg_bs.row(n * M + m);
          if (!out_layer) d_edge_total.row(e) += inv_m * d_msg_ue.row(n * K + k);
        }
      }
    }
    const RowMatrix<T> d_pre_edge = activation_grad(d_edge_total, c.pre_edge, slope);

    // Sum the edge pre-activation gradient per antenna and per user.
    RowMatrix<T> d_from_bs = RowMatrix<T>::Zero(prev.bs.rows(), d_pre_edge.cols());
    RowMatrix<T> d_from_ue = RowMatrix<T>::Zero(prev.ue.rows(), d_pre_edge.cols());
    for (int n = 0; n < N; ++n) {
      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < K; ++k) {
          const Eigen::Index e = (static_cast<Eigen::Index>(n) * M + m) * K + k;
          d_from_bs.row(n * M + m) += d_pre_edge.row(e);
          d_from_ue.row(n * K + k) += d_pre_edge.row(e);
        }
      }
    }
    g.edge.noalias() += d_pre_edge.transpose() * prev.edge;
    g.bs.noalias() += d_from_bs.transpose() * prev.bs;
    g.ue.noalias() += d_from_ue.transpose() * prev.ue;

    if (l == 0) break;
    d_edge = d_pre_edge * w.edge;
    d_prev_bs.noalias() += d_from_bs * w.bs;
    RowMatrix<T> d_ue_next = d_from_ue * w.ue;
    if (!out_layer) d_ue_next += d_prev_ue;
    d_bs = std::move(d_prev_bs);
    d_ue = std::move(d_ue_next);
  }
}

std::vector<ProbOutput> probabilities(const RowMatrix<float>& logits, int symbols, int antennas,
                                      int levels) {
  if (logits.rows() != static_cast<Eigen::Index>(symbols) * antennas ||
      logits.cols() != 2 * levels) {
    throw InvalidArgument("logit matrix has unexpected shape");
  }
  std::vector<ProbOutput> out(static_cast<std::size_t>(symbols));
  for (int n = 0; n < symbols; ++n) {
    auto& p = out[static_cast<std::size_t>(n)];
    p.p_re.resize(antennas, levels);
    p.p_im.resize(antennas, levels);
    for (int m = 0; m < antennas; ++m) {
      for (int half = 0; half < 2; ++half) {
        const auto a = logits.row(static_cast<Eigen::Index>(n) * antennas + m)
                           .segment(half * levels, levels)
                           .cast<double>();
        const double peak = a.maxCoeff();
        RVector e = (a.array() - peak).exp().transpose();
        e /= e.sum();
        (half == 0 ? p.p_re : p.p_im).row(m) = e.transpose();
      }
    }
  }
  return out;
}

namespace {

int argmax_row(const RMatrix& p, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index i = 1; i < p.cols(); ++i) {
    if (p(row, i) > p(row, best)) best = static_cast<int>(i);
  }
  return best;
}

void check_graph(const ChannelMatrix& channel, const GnnConfig& config) {
  if (channel.antennas() != config.antennas || channel.users() != config.users) {
    throw InvalidArgument("channel is " + std::to_string(channel.antennas()) + "x" +
                          std::to_string(channel.users()) + " but the network was built for " +
                          std::to_string(config.antennas) + "x" + std::to_string(config.users));
  }
}

}  // namespace

ProbOutput forward(const ChannelMatrix& channel, const CVector& symbol, const GnnWeights& weights,
                   const GnnConfig& config) {
  check_graph(channel, config);
  const auto logits = forward_logits(init_inputs<float>(channel, symbol), weights, config);
  return probabilities(logits, 1, channel.antennas(), config.levels()).front();
}

CVector infer(const ChannelMatrix& channel, const CVector& symbol, const GnnWeights& weights,
              const GnnConfig& config, const ScalarQuantizer& quantizer) {
  return infer_batch(channel, CMatrix(symbol.transpose()), weights, config, quantizer).col(0);
}

CMatrix infer_batch(const ChannelMatrix& channel, const CMatrix& symbols,
                    const GnnWeights& weights, const GnnConfig& config,
                    const ScalarQuantizer& quantizer) {
  check_graph(channel, config);
  if (quantizer.num_levels() != config.levels()) {
    throw InvalidArgument("quantizer has " + std::to_string(quantizer.num_levels()) +
                          " levels, network outputs " + std::to_string(config.levels()));
  }
  const int M = channel.antennas();
  const int N = static_cast<int>(symbols.rows());
  const auto logits = forward_logits(init_inputs<float>(channel, symbols), weights, config);
  const auto probs = probabilities(logits, N, M, config.levels());
  CMatrix y(M, N);
  for (int n = 0; n < N; ++n) {
    const auto& p = probs[static_cast<std::size_t>(n)];
    for (int m = 0; m < M; ++m) {
      y(m, n) = {quantizer.levels[static_cast<std::size_t>(argmax_row(p.p_re, m))],
                 quantizer.levels[static_cast<std::size_t>(argmax_row(p.p_im, m))]};
    }
  }
  return y;
}

CMatrix normalize_power(const CMatrix& outputs, double total_power) {
  const double mean_power = outputs.squaredNorm() / static_cast<double>(outputs.cols());
  if (!(mean_power > 0.0)) throw NumericalError("cannot normalize a zero-power output batch");
  return std::sqrt(total_power / mean_power) * outputs;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kCkptMagic[4] = {'Q', 'P', 'G', 'N'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (static_cast<std::size_t>(in.gcount()) != sizeof(T)) {
    throw CheckpointFormatError("checkpoint truncated");
  }
  return v;
}

void put_weights(std::ostream& out, const GnnWeights& w) {
  for (const auto& layer : w.layers) {
    for (auto f : kWeightFamilies) {
      const auto& m = layer.get(f);
      put(out, static_cast<std::uint32_t>(m.rows()));
      put(out, static_cast<std::uint32_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(float)));
    }
  }
}

GnnWeights take_weights(std::istream& in, const GnnConfig& config) {
  GnnWeights w = GnnWeights::zeros(config);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    for (auto f : kWeightFamilies) {
      auto& m = w.layers[l].get(f);
      const auto rows = take<std::uint32_t>(in);
      const auto cols = take<std::uint32_t>(in);
      if (rows != m.rows() || cols != m.cols()) {
        throw CheckpointFormatError("layer " + std::to_string(l) + " " + family_name(f) +
                                    " has shape " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", configuration expects " +
                                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
      }
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
      if (static_cast<std::size_t>(in.gcount()) != m.size() * sizeof(float)) {
        throw CheckpointFormatError("checkpoint truncated");
      }
    }
  }
  return w;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (!ckpt.weights.matches(ckpt.config)) {
    throw InvalidArgument("checkpoint weights do not match its configuration");
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kCkptMagic, 4);
    put(out, kCkptVersion);
    const auto& c = ckpt.config;
    put(out, static_cast<std::uint32_t>(c.hidden_layers));
    put(out, static_cast<std::uint32_t>(c.hidden_width));
    put(out, static_cast<std::uint32_t>(c.bits));
    put(out, static_cast<std::uint32_t>(c.antennas));
    put(out, static_cast<std::uint32_t>(c.users));
    put(out, c.leaky_slope);
    put(out, ckpt.meta.seed);
    put(out, ckpt.meta.epoch);
    put(out, ckpt.meta.step);
    put(out, ckpt.meta.best_val_rate);
    put(out, ckpt.meta.last_val_rate);
    put(out, static_cast<std::uint32_t>(ckpt.weights.layers.size()));
    put_weights(out, ckpt.weights);
    put(out, static_cast<std::uint8_t>(ckpt.optimizer ? 1 : 0));
    if (ckpt.optimizer) {
      put(out, ckpt.optimizer->step);
      put_weights(out, ckpt.optimizer->first_moment);
      put_weights(out, ckpt.optimizer->second_moment);
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCkptMagic, 4) != 0) {
    throw CheckpointFormatError("not a GNN checkpoint: " + path.string());
  }
  const auto version = take<std::uint32_t>(in);
  if (version != kCkptVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& c = ckpt.config;
  c.hidden_layers = static_cast<int>(take<std::uint32_t>(in));
  c.hidden_width = static_cast<int>(take<std::uint32_t>(in));
  c.bits = static_cast<int>(take<std::uint32_t>(in));
  c.antennas = static_cast<int>(take<std::uint32_t>(in));
  c.users = static_cast<int>(take<std::uint32_t>(in));
  c.leaky_slope = take<double>(in);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw CheckpointFormatError(std::string("invalid checkpoint configuration: ") + e.what());
  }
  ckpt.meta.seed = take<std::uint64_t>(in);
  ckpt.meta.epoch = take<std::uint32_t>(in);
  ckpt.meta.step = take<std::uint64_t>(in);
  ckpt.meta.best_val_rate = take<double>(in);
  ckpt.meta.last_val_rate = take<double>(in);
  const auto layers = take<std::uint32_t>(in);
  if (layers != static_cast<std::uint32_t>(c.num_layers())) {
    throw CheckpointFormatError("checkpoint layer count does not match its configuration");
  }
  ckpt.weights = take_weights(in, c);
  const auto has_opt = take<std::uint8_t>(in);
  if (has_opt == 1) {
    OptimizerState opt;
    opt.step = take<std::uint64_t>(in);
    opt.first_moment = take_weights(in, c);
    opt.second_moment = take_weights(in, c);
    ckpt.optimizer = std::move(opt);
  } else if (has_opt != 0) {
    throw CheckpointFormatError("bad optimizer flag");
  }
  return ckpt;
}

#define QPREC_INSTANTIATE_GNN(T)                                                                \
  template struct LayerWeights<T>;                                                              \
  template struct BasicGnnWeights<T>;                                                           \
  template GraphState<T> init_inputs<T>(const ChannelMatrix&, const CMatrix&);                  \
  template GraphState<T> init_inputs<T>(const ChannelMatrix&, const CVector&);                  \
  template GraphState<T> layer_forward<T>(const GraphState<T>&, const LayerWeights<T>&, bool,   \
                                          double, LayerCache<T>*);                              \
  template RowMatrix<T> forward_logits<T>(const GraphState<T>&, const BasicGnnWeights<T>&,      \
                                          const GnnConfig&, GnnTape<T>*);                       \
  template void backward<T>(const GnnTape<T>&, const BasicGnnWeights<T>&, const GnnConfig&,     \
                            const RowMatrix<T>&, BasicGnnWeights<T>&);

QPREC_INSTANTIATE_GNN(float)
QPREC_INSTANTIATE_GNN(double)

#undef QPREC_INSTANTIATE_GNN

}  // namespace qprec
