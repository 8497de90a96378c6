#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdqn/common.hpp"
#include "sdqn/tensor.hpp"

namespace sdqn {

// ---------------------------------------------------------------------------
// Layer specs
// ---------------------------------------------------------------------------

enum class LayerKind {
  kConv2d,     // 3x3-style conv, stride 1, same padding
  kAvgPool2d,  // no padding, floor output extents
  kDense,
  kLstmCell,   // runs a (T x D) sequence, emits the final hidden state
  kFlatten,
  kConcatAux,  // appends the auxiliary input vector
  kRelu,
  kTanh,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kAvgPool2d: return "avgpool2d";
    case LayerKind::kDense: return "dense";
    case LayerKind::kLstmCell: return "lstm-cell";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kConcatAux: return "concat-aux";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kTanh: return "tanh";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t units = 0;  // filters for conv2d, units for dense/lstm-cell

  bool trainable() const {
    return kind == LayerKind::kConv2d || kind == LayerKind::kDense ||
           kind == LayerKind::kLstmCell;
  }
};

// ---------------------------------------------------------------------------
// Network parameters
// ---------------------------------------------------------------------------

/// A trainable layer owns exactly two tensors: "<name>.w" and "<name>.b".
/// The LSTM cell packs its input and recurrent matrices into one weight of
/// shape (4*units, input+units); gate blocks are ordered [i, f, g, o].
template <typename T>
struct NetworkT {
  std::vector<LayerSpec> layers;
  std::map<std::string, TensorT<T>> weights;
  std::uint64_t rng_seed = 0;

  Shape input_shape;
  std::size_t aux_size = 0;
  std::vector<Shape> layer_out_shapes;

  // Bumped whenever weights mutate; open tapes become stale.
  std::uint64_t version = 0;

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& [k, v] : weights) n += v.numel();
    return n;
  }

  const Shape& output_shape() const { return layer_out_shapes.back(); }

  bool has_concat_aux() const {
    for (const auto& l : layers)
      if (l.kind == LayerKind::kConcatAux) return true;
    return false;
  }

  template <typename U>
  NetworkT<U> cast() const {
    NetworkT<U> out;
    out.layers = layers;
    out.rng_seed = rng_seed;
    out.input_shape = input_shape;
    out.aux_size = aux_size;
    out.layer_out_shapes = layer_out_shapes;
    for (const auto& [k, v] : weights) out.weights.emplace(k, v.template cast<U>());
    return out;
  }
};

using Network = NetworkT<float>;

// ---------------------------------------------------------------------------
// Builder: assembles layer stacks, infers shapes, initializes weights
// ---------------------------------------------------------------------------

namespace detail {

inline Shape conv2d_out_shape(const Shape& in, const LayerSpec& l, const std::string& who) {
  if (in.size() != 3)
    throw ShapeError(who + ": conv2d expects a (C,H,W) input, got " + shape_str(in));
  if (l.stride_h != 1 || l.stride_w != 1)
    throw ShapeError(who + ": conv2d supports stride 1 only");
  if (l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0)
    throw ShapeError(who + ": same-padded conv needs odd kernel extents");
  return {l.units, in[1], in[2]};
}

inline Shape avgpool_out_shape(const Shape& in, const LayerSpec& l, const std::string& who) {
  if (in.size() != 3)
    throw ShapeError(who + ": avgpool2d expects a (C,H,W) input, got " + shape_str(in));
  if (in[1] < l.kernel_h || in[2] < l.kernel_w)
    throw ShapeError(who + ": pool kernel " + std::to_string(l.kernel_h) + "x" +
                     std::to_string(l.kernel_w) + " exceeds input " + shape_str(in));
  return {in[0], (in[1] - l.kernel_h) / l.stride_h + 1,
          (in[2] - l.kernel_w) / l.stride_w + 1};
}

}  // namespace detail

template <typename T>
class NetBuilderT {
 public:
  explicit NetBuilderT(Shape input_shape, std::size_t aux_size = 0) {
    net_.input_shape = std::move(input_shape);
    net_.aux_size = aux_size;
    cur_ = net_.input_shape;
  }

  NetBuilderT& conv2d(std::size_t filters, std::size_t kh = 3, std::size_t kw = 3) {
    LayerSpec l{LayerKind::kConv2d, next_name("conv"), kh, kw, 1, 1, filters};
    cur_ = detail::conv2d_out_shape(cur_, l, l.name);
    push(l);
    return *this;
  }
  NetBuilderT& avgpool2d(std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
    LayerSpec l{LayerKind::kAvgPool2d, next_name("avgp"), kh, kw, sh, sw, 0};
    cur_ = detail::avgpool_out_shape(cur_, l, l.name);
    push(l);
    return *this;
  }
  NetBuilderT& flatten() {
    LayerSpec l{LayerKind::kFlatten, next_name("flat")};
    cur_ = {shape_numel(cur_)};
    push(l);
    return *this;
  }
  NetBuilderT& concat_aux() {
    if (cur_.size() != 1) throw ShapeError("concat-aux requires a flat input");
    if (net_.aux_size == 0) throw ShapeError("concat-aux in a net built without aux input");
    LayerSpec l{LayerKind::kConcatAux, next_name("cat")};
    cur_ = {cur_[0] + net_.aux_size};
    push(l);
    return *this;
  }
  NetBuilderT& dense(std::size_t units) {
    if (cur_.size() != 1) throw ShapeError("dense requires a flat input");
    LayerSpec l{LayerKind::kDense, next_name("fc"), 0, 0, 1, 1, units};
    cur_ = {units};
    push(l);
    return *this;
  }
  NetBuilderT& lstm_cell(std::size_t units) {
    if (cur_.size() != 2)
      throw ShapeError("lstm-cell requires a (T,D) sequence input, got " + shape_str(cur_));
    LayerSpec l{LayerKind::kLstmCell, next_name("lstm"), 0, 0, 1, 1, units};
    cur_ = {units};
    push(l);
    return *this;
  }
  NetBuilderT& relu() {
    push({LayerKind::kRelu, next_name("relu")});
    return *this;
  }
  NetBuilderT& tanh_act() {
    push({LayerKind::kTanh, next_name("tanh")});
    return *this;
  }

  /// Seeded He-style uniform fan-in init; LSTM forget-gate bias starts at 1.
  NetworkT<T> build(std::uint64_t seed) {
    NetworkT<T> net = net_;
    net.rng_seed = seed;
    std::size_t layer_idx = 0;
    Shape in = net.input_shape;
    for (const auto& l : net.layers) {
      if (l.trainable()) {
        Shape wshape, bshape;
        std::size_t fan_in = 0;
        if (l.kind == LayerKind::kConv2d) {
          wshape = {l.units, in[0], l.kernel_h, l.kernel_w};
          bshape = {l.units};
          fan_in = in[0] * l.kernel_h * l.kernel_w;
        } else if (l.kind == LayerKind::kDense) {
          wshape = {l.units, in[0]};
          bshape = {l.units};
          fan_in = in[0];
        } else {  // lstm-cell
          const std::size_t d = in[1], h = l.units;
          wshape = {4 * h, d + h};
          bshape = {4 * h};
          fan_in = d + h;
        }
        TensorT<T> w(wshape), b(bshape);
        Rng rng = make_rng(derive_seed(seed, layer_idx));
        const double limit = std::sqrt(6.0 / double(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : w.data) v = T(dist(rng));
        if (l.kind == LayerKind::kLstmCell)
          for (std::size_t i = l.units; i < 2 * l.units; ++i) b.data[i] = T(1);
        net.weights.emplace(l.name + ".w", std::move(w));
        net.weights.emplace(l.name + ".b", std::move(b));
      }
      in = net.layer_out_shapes[layer_idx];
      ++layer_idx;
    }
    return net;
  }

 private:
  void push(LayerSpec l) {
    net_.layers.push_back(std::move(l));
    net_.layer_out_shapes.push_back(cur_);
  }
  std::string next_name(const std::string& stem) {
    return stem + std::to_string(++counts_[stem]);
  }

  NetworkT<T> net_;
  Shape cur_;
  std::map<std::string, int> counts_;
};

using NetBuilder = NetBuilderT<float>;

// ---------------------------------------------------------------------------
// Forward + activation tape
// ---------------------------------------------------------------------------

template <typename T>
struct LstmSavesT {
  // One entry per timestep.
  std::vector<std::vector<T>> x_comb;  // [x_t ; h_{t-1}], size D+H
  std::vector<std::vector<T>> gate_i, gate_f, gate_g, gate_o;
  std::vector<std::vector<T>> c_prev, c_cur, tanh_c;
};

template <typename T>
struct TapeT {
  std::uint64_t net_version = 0;
  std::vector<TensorT<T>> layer_inputs;  // tensor fed into each layer
  std::map<std::size_t, LstmSavesT<T>> lstm;  // keyed by layer index
  TensorT<T> aux;
  TensorT<T> output;
};

using Tape = TapeT<float>;

namespace detail {

template <typename T>
void conv2d_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                    TensorT<T>& out) {
  const std::size_t F = w.shape[0], C = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const std::size_t H = in.shape[1], W = in.shape[2];
  const std::ptrdiff_t ph = std::ptrdiff_t(kh) / 2, pw = std::ptrdiff_t(kw) / 2;
  for (std::size_t f = 0; f < F; ++f) {
    T* o = &out.data[f * H * W];
    std::fill(o, o + H * W, b.data[f]);
    for (std::size_t c = 0; c < C; ++c) {
      const T* x = &in.data[c * H * W];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = w.data[((f * C + c) * kh + ky) * kw + kx];
          const std::ptrdiff_t dy = std::ptrdiff_t(ky) - ph;
          const std::ptrdiff_t dx = std::ptrdiff_t(kx) - pw;
          const std::size_t oy0 = dy < 0 ? std::size_t(-dy) : 0;
          const std::size_t oy1 = dy > 0 ? H - std::size_t(dy) : H;
          const std::size_t ox0 = dx < 0 ? std::size_t(-dx) : 0;
          const std::size_t ox1 = dx > 0 ? W - std::size_t(dx) : W;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            T* orow = o + oy * W;
            const T* xrow = x + (oy + dy) * W + dx;
            for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xrow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& dout,
                     TensorT<T>& din, TensorT<T>& dw, TensorT<T>& db) {
  const std::size_t F = w.shape[0], C = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const std::size_t H = in.shape[1], W = in.shape[2];
  const std::ptrdiff_t ph = std::ptrdiff_t(kh) / 2, pw = std::ptrdiff_t(kw) / 2;
  for (std::size_t f = 0; f < F; ++f) {
    const T* go = &dout.data[f * H * W];
    T acc_b = T(0);
    for (std::size_t i = 0; i < H * W; ++i) acc_b += go[i];
    db.data[f] = acc_b;
    for (std::size_t c = 0; c < C; ++c) {
      const T* x = &in.data[c * H * W];
      T* gi = &din.data[c * H * W];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t dy = std::ptrdiff_t(ky) - ph;
          const std::ptrdiff_t dx = std::ptrdiff_t(kx) - pw;
          const std::size_t oy0 = dy < 0 ? std::size_t(-dy) : 0;
          const std::size_t oy1 = dy > 0 ? H - std::size_t(dy) : H;
          const std::size_t ox0 = dx < 0 ? std::size_t(-dx) : 0;
          const std::size_t ox1 = dx > 0 ? W - std::size_t(dx) : W;
          const T wv = w.data[((f * C + c) * kh + ky) * kw + kx];
          T acc_w = T(0);
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const T* grow = go + oy * W;
            const T* xrow = x + (oy + dy) * W + dx;
            T* girow = gi + (oy + dy) * W + dx;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              acc_w += grow[ox] * xrow[ox];
              girow[ox] += wv * grow[ox];
            }
          }
          dw.data[((f * C + c) * kh + ky) * kw + kx] += acc_w;
        }
      }
    }
  }
}

template <typename T>
void lstm_forward(const TensorT<T>& seq, const TensorT<T>& w, const TensorT<T>& b,
                  std::size_t units, LstmSavesT<T>& sv, TensorT<T>& out) {
  const std::size_t steps = seq.shape[0], dim = seq.shape[1], h = units;
  std::vector<T> hid(h, T(0)), cell(h, T(0));
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<T> xc(dim + h);
    for (std::size_t i = 0; i < dim; ++i) xc[i] = seq.data[t * dim + i];
    for (std::size_t i = 0; i < h; ++i) xc[dim + i] = hid[i];
    std::vector<T> gi(h), gf(h), gg(h), go(h), cn(h), tc(h);
    for (std::size_t u = 0; u < 4 * h; ++u) {
      const T* wrow = &w.data[u * (dim + h)];
      T z = b.data[u];
      for (std::size_t i = 0; i < dim + h; ++i) z += wrow[i] * xc[i];
      const std::size_t blk = u / h, j = u % h;
      if (blk == 2) {
        gg[j] = std::tanh(z);
      } else {
        const T s = T(1) / (T(1) + std::exp(-z));
        (blk == 0 ? gi[j] : blk == 1 ? gf[j] : go[j]) = s;
      }
    }
    sv.c_prev.push_back(cell);
    for (std::size_t j = 0; j < h; ++j) {
      cn[j] = gf[j] * cell[j] + gi[j] * gg[j];
      tc[j] = std::tanh(cn[j]);
      hid[j] = go[j] * tc[j];
    }
    cell = cn;
    sv.x_comb.push_back(std::move(xc));
    sv.gate_i.push_back(std::move(gi));
    sv.gate_f.push_back(std::move(gf));
    sv.gate_g.push_back(std::move(gg));
    sv.gate_o.push_back(std::move(go));
    sv.c_cur.push_back(cn);
    sv.tanh_c.push_back(std::move(tc));
  }
  out = TensorT<T>({units}, std::vector<T>(hid.begin(), hid.end()));
}

template <typename T>
void lstm_backward(const TensorT<T>& w, std::size_t units, std::size_t dim,
                   const LstmSavesT<T>& sv, const TensorT<T>& dout, TensorT<T>& dseq,
                   TensorT<T>& dw, TensorT<T>& db) {
  const std::size_t steps = sv.x_comb.size(), h = units;
  std::vector<T> dh(dout.data.begin(), dout.data.end());
  std::vector<T> dc(h, T(0));
  for (std::size_t tt = steps; tt-- > 0;) {
    const auto& gi = sv.gate_i[tt];
    const auto& gf = sv.gate_f[tt];
    const auto& gg = sv.gate_g[tt];
    const auto& go = sv.gate_o[tt];
    const auto& tc = sv.tanh_c[tt];
    const auto& cp = sv.c_prev[tt];
    const auto& xc = sv.x_comb[tt];
    std::vector<T> dz(4 * h);
    for (std::size_t j = 0; j < h; ++j) {
      const T dcj = dc[j] + dh[j] * go[j] * (T(1) - tc[j] * tc[j]);
      const T doj = dh[j] * tc[j];
      const T dij = dcj * gg[j];
      const T dfj = dcj * cp[j];
      const T dgj = dcj * gi[j];
      dz[0 * h + j] = dij * gi[j] * (T(1) - gi[j]);
      dz[1 * h + j] = dfj * gf[j] * (T(1) - gf[j]);
      dz[2 * h + j] = dgj * (T(1) - gg[j] * gg[j]);
      dz[3 * h + j] = doj * go[j] * (T(1) - go[j]);
      dc[j] = dcj * gf[j];
    }
    std::vector<T> dxc(dim + h, T(0));
    for (std::size_t u = 0; u < 4 * h; ++u) {
      const T g = dz[u];
      if (g == T(0)) continue;
      const T* wrow = &w.data[u * (dim + h)];
      T* dwrow = &dw.data[u * (dim + h)];
      for (std::size_t i = 0; i < dim + h; ++i) {
        dxc[i] += wrow[i] * g;
        dwrow[i] += xc[i] * g;
      }
      db.data[u] += g;
    }
    for (std::size_t i = 0; i < dim; ++i) dseq.data[tt * dim + i] = dxc[i];
    for (std::size_t j = 0; j < h; ++j) dh[j] = dxc[dim + j];
  }
}

}  // namespace detail

/// Runs the net on one sample. `aux` must be present iff the net contains a
/// concat-aux layer. Returns the output and the activation tape needed by
/// backward().
template <typename T>
std::pair<TensorT<T>, TapeT<T>> forward(const NetworkT<T>& net, const TensorT<T>& input,
                                        const TensorT<T>* aux = nullptr) {
  if (input.shape != net.input_shape)
    throw ShapeError("input: expected " + shape_str(net.input_shape) + ", got " +
                     shape_str(input.shape));
  const bool wants_aux = net.has_concat_aux();
  if (wants_aux && (aux == nullptr || aux->numel() != net.aux_size))
    throw ShapeError("aux input of size " + std::to_string(net.aux_size) + " required");
  if (!wants_aux && aux != nullptr)
    throw ShapeError("aux input supplied to a net without concat-aux");
  require_finite(input, "forward");
  if (aux) require_finite(*aux, "forward(aux)");

  TapeT<T> tape;
  tape.net_version = net.version;
  if (aux) tape.aux = *aux;

  TensorT<T> cur = input;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& l = net.layers[li];
    tape.layer_inputs.push_back(cur);
    const Shape& oshape = net.layer_out_shapes[li];
    switch (l.kind) {
      case LayerKind::kConv2d: {
        TensorT<T> out(oshape);
        detail::conv2d_forward(cur, net.weights.at(l.name + ".w"),
                               net.weights.at(l.name + ".b"), out);
        cur = std::move(out);
        break;
      }
      case LayerKind::kAvgPool2d: {
        TensorT<T> out(oshape);
        const std::size_t C = cur.shape[0], H = cur.shape[1], W = cur.shape[2];
        const std::size_t OH = oshape[1], OW = oshape[2];
        const T inv = T(1) / T(l.kernel_h * l.kernel_w);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
              T acc = T(0);
              for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                const T* row = &cur.data[(c * H + oy * l.stride_h + ky) * W + ox * l.stride_w];
                for (std::size_t kx = 0; kx < l.kernel_w; ++kx) acc += row[kx];
              }
              out.data[(c * OH + oy) * OW + ox] = acc * inv;
            }
        cur = std::move(out);
        break;
      }
      case LayerKind::kDense: {
        const auto& w = net.weights.at(l.name + ".w");
        const auto& b = net.weights.at(l.name + ".b");
        if (w.shape[1] != cur.numel())
          throw ShapeError(l.name + ": expected input of " + std::to_string(w.shape[1]) +
                           ", got " + std::to_string(cur.numel()));
        TensorT<T> out(oshape);
        for (std::size_t u = 0; u < l.units; ++u) {
          const T* wrow = &w.data[u * w.shape[1]];
          T acc = b.data[u];
          for (std::size_t i = 0; i < w.shape[1]; ++i) acc += wrow[i] * cur.data[i];
          out.data[u] = acc;
        }
        cur = std::move(out);
        break;
      }
      case LayerKind::kLstmCell: {
        LstmSavesT<T> sv;
        TensorT<T> out;
        detail::lstm_forward(cur, net.weights.at(l.name + ".w"),
                             net.weights.at(l.name + ".b"), l.units, sv, out);
        tape.lstm.emplace(li, std::move(sv));
        cur = std::move(out);
        break;
      }
      case LayerKind::kFlatten:
        cur = TensorT<T>(oshape, std::move(cur.data));
        break;
      case LayerKind::kConcatAux: {
        TensorT<T> out(oshape);
        std::copy(cur.data.begin(), cur.data.end(), out.data.begin());
        std::copy(tape.aux.data.begin(), tape.aux.data.end(),
                  out.data.begin() + std::ptrdiff_t(cur.numel()));
        cur = std::move(out);
        break;
      }
      case LayerKind::kRelu:
        for (auto& v : cur.data) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::kTanh:
        for (auto& v : cur.data) v = std::tanh(v);
        break;
    }
  }
  tape.output = cur;
  return {std::move(cur), std::move(tape)};
}

using GradMap = std::map<std::string, Tensor>;
template <typename T>
using GradMapT = std::map<std::string, TensorT<T>>;

/// Reverse pass. `output_grad` is dLoss/dOutput; returns one gradient tensor
/// per weight tensor. Throws StateError if the net mutated since forward.
template <typename T>
GradMapT<T> backward(const NetworkT<T>& net, const TapeT<T>& tape,
                     const TensorT<T>& output_grad) {
  if (tape.net_version != net.version)
    throw StateError("stale tape: network weights changed since forward");
  if (output_grad.shape != net.output_shape())
    throw ShapeError("output_grad: expected " + shape_str(net.output_shape()) + ", got " +
                     shape_str(output_grad.shape));

  GradMapT<T> grads;
  for (const auto& [k, v] : net.weights) grads.emplace(k, TensorT<T>(v.shape));

  TensorT<T> d = output_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const LayerSpec& l = net.layers[li];
    const TensorT<T>& in = tape.layer_inputs[li];
    switch (l.kind) {
      case LayerKind::kConv2d: {
        TensorT<T> din(in.shape);
        detail::conv2d_backward(in, net.weights.at(l.name + ".w"), d, din,
                                grads.at(l.name + ".w"), grads.at(l.name + ".b"));
        d = std::move(din);
        break;
      }
      case LayerKind::kAvgPool2d: {
        TensorT<T> din(in.shape);
        const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
        const std::size_t OH = d.shape[1], OW = d.shape[2];
        const T inv = T(1) / T(l.kernel_h * l.kernel_w);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
              const T g = d.data[(c * OH + oy) * OW + ox] * inv;
              for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                T* row = &din.data[(c * H + oy * l.stride_h + ky) * W + ox * l.stride_w];
                for (std::size_t kx = 0; kx < l.kernel_w; ++kx) row[kx] += g;
              }
            }
        d = std::move(din);
        break;
      }
      case LayerKind::kDense: {
        const auto& w = net.weights.at(l.name + ".w");
        auto& dw = grads.at(l.name + ".w");
        auto& db = grads.at(l.name + ".b");
        TensorT<T> din(in.shape);
        for (std::size_t u = 0; u < l.units; ++u) {
          const T g = d.data[u];
          db.data[u] += g;
          const T* wrow = &w.data[u * w.shape[1]];
          T* dwrow = &dw.data[u * w.shape[1]];
          for (std::size_t i = 0; i < w.shape[1]; ++i) {
            din.data[i] += wrow[i] * g;
            dwrow[i] += in.data[i] * g;
          }
        }
        d = std::move(din);
        break;
      }
      case LayerKind::kLstmCell: {
        TensorT<T> dseq(in.shape);
        detail::lstm_backward(net.weights.at(l.name + ".w"), l.units, in.shape[1],
                              tape.lstm.at(li), d, dseq, grads.at(l.name + ".w"),
                              grads.at(l.name + ".b"));
        d = std::move(dseq);
        break;
      }
      case LayerKind::kFlatten:
        d = TensorT<T>(in.shape, std::move(d.data));
        break;
      case LayerKind::kConcatAux: {
        // Gradient w.r.t. the aux input is dropped: aux is an input, not a
        // parameter.
        TensorT<T> din(in.shape);
        std::copy(d.data.begin(), d.data.begin() + std::ptrdiff_t(in.numel()),
                  din.data.begin());
        d = std::move(din);
        break;
      }
      case LayerKind::kRelu: {
        for (std::size_t i = 0; i < d.data.size(); ++i)
          if (in.data[i] <= T(0)) d.data[i] = T(0);
        break;
      }
      case LayerKind::kTanh: {
        for (std::size_t i = 0; i < d.data.size(); ++i) {
          const T y = std::tanh(in.data[i]);
          d.data[i] *= (T(1) - y * y);
        }
        break;
      }
    }
  }
  return grads;
}

template <typename T>
std::size_t argmax(const TensorT<T>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i)
    if (t.data[i] > t.data[best]) best = i;  // ties keep the lowest index
  return best;
}

}  // namespace sdqn
