// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "phantomdiff/errors.hpp"
#include "phantomdiff/rng.hpp"

namespace phantomdiff {

namespace {

// Channel-major plane stack: v[(c*h + y)*w + x].
struct Buf {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;

  Buf() = default;
  Buf(int ch_, int h_, int w_) : ch(ch_), h(h_), w(w_), v(static_cast<std::size_t>(ch_) * h_ * w_, 0.0) {}
  double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
  const double* plane(int c) const { return v.data() + static_cast<std::size_t>(c) * h * w; }
  std::size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

double act_eval(double z, Activation a) {
  switch (a) {
    case Activation::Silu: return z / (1.0 + std::exp(-z));
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
  }
  return z;
}

double act_grad(double z, Activation a) {
  switch (a) {
    case Activation::Silu: {
      double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      double th = std::tanh(z);
      return 1.0 - th * th;
    }
  }
  return 1.0;
}

// 3x3 convolution, stride 1, zero padding 1.
void conv3x3_forward(const Buf& in, Buf& out, const double* W, const double* b) {
  const int H = in.h, Wd = in.w;
  for (int oc = 0; oc < out.ch; ++oc) {
    double* op = out.plane(oc);
    std::fill(op, op + static_cast<std::size_t>(H) * Wd, b[oc]);
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      const double* wk = W + (static_cast<std::size_t>(oc) * in.ch + ic) * 9;
      for (int k = 0; k < 9; ++k) {
        const int dy = k / 3 - 1, dx = k % 3 - 1;
        const double wv = wk[k];
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(Wd, Wd - dx);
        for (int y = y0; y < y1; ++y) {
          double* orow = op + static_cast<std::size_t>(y) * Wd;
          const double* irow = ip + static_cast<std::size_t>(y + dy) * Wd + dx;
          for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
        }
      }
    }
  }
}

// Gradients of conv3x3_forward. din may be null when input grads are unused.
void conv3x3_backward(const Buf& in, const Buf& dout, const double* W, double* dW, double* db,
                      Buf* din) {
  const int H = in.h, Wd = in.w;
  for (int oc = 0; oc < dout.ch; ++oc) {
    const double* dop = dout.plane(oc);
    double s = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(H) * Wd; ++i) s += dop[i];
    db[oc] += s;
    for (int ic = 0; ic < in.ch; ++ic) {
      const double* ip = in.plane(ic);
      double* dwk = dW + (static_cast<std::size_t>(oc) * in.ch + ic) * 9;
      const double* wk = W + (static_cast<std::size_t>(oc) * in.ch + ic) * 9;
      double* dip = din ? din->plane(ic) : nullptr;
      for (int k = 0; k < 9; ++k) {
        const int dy = k / 3 - 1, dx = k % 3 - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(Wd, Wd - dx);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y) {
          const double* drow = dop + static_cast<std::size_t>(y) * Wd;
          const double* irow = ip + static_cast<std::size_t>(y + dy) * Wd + dx;
          for (int x = x0; x < x1; ++x) acc += drow[x] * irow[x];
        }
        dwk[k] += acc;
        if (dip) {
          const double wv = wk[k];
          for (int y = y0; y < y1; ++y) {
            const double* drow = dop + static_cast<std::size_t>(y) * Wd;
            double* irow = dip + static_cast<std::size_t>(y + dy) * Wd + dx;
            for (int x = x0; x < x1; ++x) irow[x] += wv * drow[x];
          }
        }
      }
    }
  }
}

void avgpool2_forward(const Buf& in, Buf& out) {
  for (int c = 0; c < in.ch; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const double* r0 = ip + static_cast<std::size_t>(2 * y) * in.w + 2 * x;
        const double* r1 = r0 + in.w;
        op[static_cast<std::size_t>(y) * out.w + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
}

void avgpool2_backward(const Buf& dout, Buf& din) {
  for (int c = 0; c < dout.ch; ++c) {
    const double* dop = dout.plane(c);
    double* dip = din.plane(c);
    for (int y = 0; y < dout.h; ++y) {
      for (int x = 0; x < dout.w; ++x) {
        double g = 0.25 * dop[static_cast<std::size_t>(y) * dout.w + x];
        double* r0 = dip + static_cast<std::size_t>(2 * y) * din.w + 2 * x;
        double* r1 = r0 + din.w;
        r0[0] += g;
        r0[1] += g;
        r1[0] += g;
        r1[1] += g;
      }
    }
  }
}

void upsample2_forward(const Buf& in, Buf& out) {  // nearest neighbor
  for (int c = 0; c < in.ch; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    for (int y = 0; y < out.h; ++y) {
      const double* irow = ip + static_cast<std::size_t>(y / 2) * in.w;
      double* orow = op + static_cast<std::size_t>(y) * out.w;
      for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
    }
  }
}

void upsample2_backward(const Buf& dout, Buf& din) {
  for (int c = 0; c < dout.ch; ++c) {
    const double* dop = dout.plane(c);
    double* dip = din.plane(c);
    for (int y = 0; y < dout.h; ++y) {
      const double* drow = dop + static_cast<std::size_t>(y) * dout.w;
      double* irow = dip + static_cast<std::size_t>(y / 2) * din.w;
      for (int x = 0; x < dout.w; ++x) irow[x / 2] += drow[x];
    }
  }
}

// Parameter walker: fixed traversal order shared by init/forward/backward.
struct ParamCursor {
  const double* p;
  std::size_t left;
  const double* take(std::size_t n) {
    if (n > left) throw std::logic_error("parameter vector exhausted");
    const double* out = p;
    p += n;
    left -= n;
    return out;
  }
};

struct GradCursor {
  double* p;
  std::size_t left;
  double* take(std::size_t n) {
    if (n > left) throw std::logic_error("gradient vector exhausted");
    double* out = p;
    p += n;
    left -= n;
    return out;
  }
};

struct BlockDims {
  int cin, cout;
  std::size_t size(int temb) const {
    return 9ull * cin * cout + cout + static_cast<std::size_t>(cout) * temb + cout +
           9ull * cout * cout + cout;
  }
};

struct UnetDims {
  BlockDims b1, b2, b3, b4, b5;
  int c;
  explicit UnetDims(int base) : c(base) {
    b1 = {1, c};
    b2 = {c, 2 * c};
    b3 = {2 * c, 4 * c};
    b4 = {6 * c, 2 * c};
    b5 = {3 * c, c};
  }
};

// Double-conv block activations kept for the backward pass.
struct BlockCache {
  Buf in;      // block input
  Buf za, ha;  // first conv pre-activation (after temb add) and activation
  Buf zb, hb;  // second conv pre-activation and activation
};

struct BlockParams {
  const double* wa;
  const double* ba;
  const double* wt;
  const double* bt;
  const double* wb;
  const double* bb;
};

BlockParams take_block(ParamCursor& cur, const BlockDims& d, int temb) {
  BlockParams p;
  p.wa = cur.take(9ull * d.cin * d.cout);
  p.ba = cur.take(d.cout);
  p.wt = cur.take(static_cast<std::size_t>(d.cout) * temb);
  p.bt = cur.take(d.cout);
  p.wb = cur.take(9ull * d.cout * d.cout);
  p.bb = cur.take(d.cout);
  return p;
}

struct BlockGrads {
  double* wa;
  double* ba;
  double* wt;
  double* bt;
  double* wb;
  double* bb;
};

BlockGrads take_block(GradCursor& cur, const BlockDims& d, int temb) {
  BlockGrads g;
  g.wa = cur.take(9ull * d.cin * d.cout);
  g.ba = cur.take(d.cout);
  g.wt = cur.take(static_cast<std::size_t>(d.cout) * temb);
  g.bt = cur.take(d.cout);
  g.wb = cur.take(9ull * d.cout * d.cout);
  g.bb = cur.take(d.cout);
  return g;
}

void block_forward(const BlockParams& p, const BlockDims& d, const std::vector<double>& temb,
                   Activation act, BlockCache& cc, const Buf& input) {
  const int H = input.h, W = input.w;
  cc.in = input;
  cc.za = Buf(d.cout, H, W);
  conv3x3_forward(cc.in, cc.za, p.wa, p.ba);
  for (int c = 0; c < d.cout; ++c) {
    double bias = p.bt[c];
    const double* wt = p.wt + static_cast<std::size_t>(c) * temb.size();
    for (std::size_t e = 0; e < temb.size(); ++e) bias += wt[e] * temb[e];
    double* zp = cc.za.plane(c);
    for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) zp[i] += bias;
  }
  cc.ha = Buf(d.cout, H, W);
  for (std::size_t i = 0; i < cc.za.size(); ++i) cc.ha.v[i] = act_eval(cc.za.v[i], act);
  cc.zb = Buf(d.cout, H, W);
  conv3x3_forward(cc.ha, cc.zb, p.wb, p.bb);
  cc.hb = Buf(d.cout, H, W);
  for (std::size_t i = 0; i < cc.zb.size(); ++i) cc.hb.v[i] = act_eval(cc.zb.v[i], act);
}

// dout = dL/d(block output). Returns dL/d(block input) in din.
void block_backward(const BlockParams& p, const BlockGrads& g, const BlockDims& d,
                    const std::vector<double>& temb, Activation act, const BlockCache& cc,
                    const Buf& dout, Buf& din) {
  Buf dzb(d.cout, cc.in.h, cc.in.w);
  for (std::size_t i = 0; i < dzb.size(); ++i) dzb.v[i] = dout.v[i] * act_grad(cc.zb.v[i], act);
  Buf dha(d.cout, cc.in.h, cc.in.w);
  conv3x3_backward(cc.ha, dzb, p.wb, g.wb, g.bb, &dha);
  Buf dza(d.cout, cc.in.h, cc.in.w);
  for (std::size_t i = 0; i < dza.size(); ++i) dza.v[i] = dha.v[i] * act_grad(cc.za.v[i], act);
  // temb projection receives the per-channel sum of dza.
  for (int c = 0; c < d.cout; ++c) {
    const double* zp = dza.plane(c);
    double s = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cc.in.h) * cc.in.w; ++i) s += zp[i];
    g.bt[c] += s;
    double* wt = g.wt + static_cast<std::size_t>(c) * temb.size();
    for (std::size_t e = 0; e < temb.size(); ++e) wt[e] += s * temb[e];
  }
  din = Buf(d.cin, cc.in.h, cc.in.w);
  conv3x3_backward(cc.in, dza, p.wa, g.wa, g.ba, &din);
}

void concat(const Buf& a, const Buf& b, Buf& out) {
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
}

struct UnetCache {
  BlockCache b1, b2, b3, b4, b5;
  Buf p1, p2, u2, cat2, u1, cat1, out_in;
  Buf zout;  // final conv output (= prediction)
};

struct MlpCache {
  std::vector<std::vector<double>> z;  // pre-activations per layer
  std::vector<std::vector<double>> h;  // activations per layer (h[0] = input)
};

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::Silu;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Silu: return "silu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

std::vector<double> time_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even >= 2");
  std::vector<double> emb(static_cast<std::size_t>(dim));
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    emb[2 * i] = std::sin(t * freq);
    emb[2 * i + 1] = std::cos(t * freq);
  }
  return emb;
}

std::size_t SmallDenoiserNet::expected_parameter_count(const NetDescriptor& desc) {
  if (desc.kind == NetDescriptor::Kind::Unet) {
    UnetDims d(desc.base_channels);
    std::size_t n = d.b1.size(desc.temb_dim) + d.b2.size(desc.temb_dim) +
                    d.b3.size(desc.temb_dim) + d.b4.size(desc.temb_dim) +
                    d.b5.size(desc.temb_dim);
    n += 9ull * d.c * 1 + 1;  // output conv
    return n;
  }
  const std::size_t D = static_cast<std::size_t>(desc.width) * desc.height;
  std::vector<std::size_t> widths;
  widths.push_back(D);
  for (int w : desc.hidden_widths) widths.push_back(static_cast<std::size_t>(w));
  widths.push_back(D);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
  if (!desc.hidden_widths.empty()) {
    n += static_cast<std::size_t>(desc.hidden_widths[0]) * desc.temb_dim +
         desc.hidden_widths[0];
  }
  return n;
}

namespace {

void validate_descriptor(const NetDescriptor& d) {
  if (d.width < 1 || d.height < 1) {
    throw std::invalid_argument("net: dimensions must be positive");
  }
  if (d.temb_dim < 2 || d.temb_dim % 2 != 0) {
    throw std::invalid_argument("net: temb_dim must be even and >= 2");
  }
  if (d.kind == NetDescriptor::Kind::Unet) {
    if (d.width % 4 != 0 || d.height % 4 != 0) {
      throw std::invalid_argument("unet: width and height must be divisible by 4");
    }
    if (d.base_channels < 1) throw std::invalid_argument("unet: base_channels must be >= 1");
  } else {
    if (d.hidden_widths.empty()) {
      throw std::invalid_argument("mlp: at least one hidden layer required");
    }
    for (int w : d.hidden_widths) {
      if (w < 1) throw std::invalid_argument("mlp: hidden widths must be positive");
    }
  }
}

}  // namespace

SmallDenoiserNet::SmallDenoiserNet(NetDescriptor desc, std::vector<double> params)
    : desc_(std::move(desc)), params_(std::move(params)) {
  validate_descriptor(desc_);
  if (params_.size() != expected_parameter_count(desc_)) {
    throw std::invalid_argument("net: parameter vector length " + std::to_string(params_.size()) +
                                " does not match architecture (" +
                                std::to_string(expected_parameter_count(desc_)) + ")");
  }
}

SmallDenoiserNet SmallDenoiserNet::from_parameters(NetDescriptor desc, std::vector<double> params) {
  return SmallDenoiserNet(std::move(desc), std::move(params));
}

SmallDenoiserNet SmallDenoiserNet::create(const NetDescriptor& desc, std::uint64_t init_seed) {
  validate_descriptor(desc);
  std::vector<double> params(expected_parameter_count(desc), 0.0);
  NoiseStream stream(init_seed);

  auto he_fill = [&](double* p, std::size_t n, std::size_t fan_in, double scale) {
    double std = scale * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) p[i] = std * stream.normal();
  };

  if (desc.kind == NetDescriptor::Kind::Unet) {
    UnetDims d(desc.base_channels);
    GradCursor cur{params.data(), params.size()};
    for (const BlockDims* bd : {&d.b1, &d.b2, &d.b3, &d.b4, &d.b5}) {
      BlockGrads g = take_block(cur, *bd, desc.temb_dim);
      he_fill(g.wa, 9ull * bd->cin * bd->cout, 9ull * bd->cin, 1.0);
      he_fill(g.wt, static_cast<std::size_t>(bd->cout) * desc.temb_dim, desc.temb_dim, 0.1);
      he_fill(g.wb, 9ull * bd->cout * bd->cout, 9ull * bd->cout, 1.0);
    }
    double* wout = cur.take(9ull * d.c);
    he_fill(wout, 9ull * d.c, 9ull * d.c, 1e-3);
    cur.take(1);  // output bias stays zero
  } else {
    const std::size_t D = static_cast<std::size_t>(desc.width) * desc.height;
    std::vector<std::size_t> widths{D};
    for (int w : desc.hidden_widths) widths.push_back(static_cast<std::size_t>(w));
    widths.push_back(D);
    GradCursor cur{params.data(), params.size()};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      double* W = cur.take(widths[l] * widths[l + 1]);
      double scale = (l + 2 == widths.size()) ? 1e-3 : 1.0;
      he_fill(W, widths[l] * widths[l + 1], widths[l], scale);
      cur.take(widths[l + 1]);  // bias zero
    }
    double* wt = cur.take(static_cast<std::size_t>(desc.hidden_widths[0]) * desc.temb_dim);
    he_fill(wt, static_cast<std::size_t>(desc.hidden_widths[0]) * desc.temb_dim, desc.temb_dim,
            0.1);
    cur.take(static_cast<std::size_t>(desc.hidden_widths[0]));
  }
  return SmallDenoiserNet(desc, std::move(params));
}

namespace {

void unet_forward(const NetDescriptor& desc, const std::vector<double>& params, const Buf& input,
                  int t, UnetCache& cc) {
  UnetDims d(desc.base_channels);
  std::vector<double> temb = time_embedding(t, desc.temb_dim);
  ParamCursor cur{params.data(), params.size()};
  const Activation act = desc.activation;
  const int H = input.h, W = input.w;

  BlockParams p1 = take_block(cur, d.b1, desc.temb_dim);
  BlockParams p2 = take_block(cur, d.b2, desc.temb_dim);
  BlockParams p3 = take_block(cur, d.b3, desc.temb_dim);
  BlockParams p4 = take_block(cur, d.b4, desc.temb_dim);
  BlockParams p5 = take_block(cur, d.b5, desc.temb_dim);
  const double* wout = cur.take(9ull * d.c);
  const double* bout = cur.take(1);

  block_forward(p1, d.b1, temb, act, cc.b1, input);
  cc.p1 = Buf(d.c, H / 2, W / 2);
  avgpool2_forward(cc.b1.hb, cc.p1);
  block_forward(p2, d.b2, temb, act, cc.b2, cc.p1);
  cc.p2 = Buf(2 * d.c, H / 4, W / 4);
  avgpool2_forward(cc.b2.hb, cc.p2);
  block_forward(p3, d.b3, temb, act, cc.b3, cc.p2);
  cc.u2 = Buf(4 * d.c, H / 2, W / 2);
  upsample2_forward(cc.b3.hb, cc.u2);
  cc.cat2 = Buf(6 * d.c, H / 2, W / 2);
  concat(cc.u2, cc.b2.hb, cc.cat2);
  block_forward(p4, d.b4, temb, act, cc.b4, cc.cat2);
  cc.u1 = Buf(2 * d.c, H, W);
  upsample2_forward(cc.b4.hb, cc.u1);
  cc.cat1 = Buf(3 * d.c, H, W);
  concat(cc.u1, cc.b1.hb, cc.cat1);
  block_forward(p5, d.b5, temb, act, cc.b5, cc.cat1);
  cc.zout = Buf(1, H, W);
  conv3x3_forward(cc.b5.hb, cc.zout, wout, bout);
}

void unet_backward(const NetDescriptor& desc, const std::vector<double>& params,
                   const UnetCache& cc, int t, const Buf& dpred, std::span<double> grad) {
  UnetDims d(desc.base_channels);
  std::vector<double> temb = time_embedding(t, desc.temb_dim);
  ParamCursor cur{params.data(), params.size()};
  GradCursor gcur{grad.data(), grad.size()};
  const Activation act = desc.activation;
  const int H = cc.b1.in.h, W = cc.b1.in.w;

  BlockParams p1 = take_block(cur, d.b1, desc.temb_dim);
  BlockParams p2 = take_block(cur, d.b2, desc.temb_dim);
  BlockParams p3 = take_block(cur, d.b3, desc.temb_dim);
  BlockParams p4 = take_block(cur, d.b4, desc.temb_dim);
  BlockParams p5 = take_block(cur, d.b5, desc.temb_dim);
  const double* wout = cur.take(9ull * d.c);
  cur.take(1);
  BlockGrads g1 = take_block(gcur, d.b1, desc.temb_dim);
  BlockGrads g2 = take_block(gcur, d.b2, desc.temb_dim);
  BlockGrads g3 = take_block(gcur, d.b3, desc.temb_dim);
  BlockGrads g4 = take_block(gcur, d.b4, desc.temb_dim);
  BlockGrads g5 = take_block(gcur, d.b5, desc.temb_dim);
  double* gwout = gcur.take(9ull * d.c);
  double* gbout = gcur.take(1);

  Buf dh5(d.c, H, W);
  conv3x3_backward(cc.b5.hb, dpred, wout, gwout, gbout, &dh5);
  Buf dcat1;
  block_backward(p5, g5, d.b5, temb, act, cc.b5, dh5, dcat1);
  // split cat1 = [u1 | b1.hb]
  Buf du1(2 * d.c, H, W);
  std::copy(dcat1.v.begin(), dcat1.v.begin() + du1.size(), du1.v.begin());
  Buf dskip1(d.c, H, W);
  std::copy(dcat1.v.begin() + du1.size(), dcat1.v.end(), dskip1.v.begin());
  Buf dh4(2 * d.c, H / 2, W / 2);
  upsample2_backward(du1, dh4);
  Buf dcat2;
  block_backward(p4, g4, d.b4, temb, act, cc.b4, dh4, dcat2);
  Buf du2(4 * d.c, H / 2, W / 2);
  std::copy(dcat2.v.begin(), dcat2.v.begin() + du2.size(), du2.v.begin());
  Buf dskip2(2 * d.c, H / 2, W / 2);
  std::copy(dcat2.v.begin() + du2.size(), dcat2.v.end(), dskip2.v.begin());
  Buf dh3(4 * d.c, H / 4, W / 4);
  upsample2_backward(du2, dh3);
  Buf dp2;
  block_backward(p3, g3, d.b3, temb, act, cc.b3, dh3, dp2);
  Buf dh2(2 * d.c, H / 2, W / 2);
  avgpool2_backward(dp2, dh2);
  for (std::size_t i = 0; i < dh2.size(); ++i) dh2.v[i] += dskip2.v[i];
  Buf dp1;
  block_backward(p2, g2, d.b2, temb, act, cc.b2, dh2, dp1);
  Buf dh1(d.c, H, W);
  avgpool2_backward(dp1, dh1);
  for (std::size_t i = 0; i < dh1.size(); ++i) dh1.v[i] += dskip1.v[i];
  Buf dinput;
  block_backward(p1, g1, d.b1, temb, act, cc.b1, dh1, dinput);
}

struct MlpLayout {
  std::vector<std::size_t> widths;
};

MlpLayout mlp_layout(const NetDescriptor& desc) {
  MlpLayout lay;
  const std::size_t D = static_cast<std::size_t>(desc.width) * desc.height;
  lay.widths.push_back(D);
  for (int w : desc.hidden_widths) lay.widths.push_back(static_cast<std::size_t>(w));
  lay.widths.push_back(D);
  return lay;
}

void mlp_forward(const NetDescriptor& desc, const std::vector<double>& params,
                 const std::vector<double>& input, int t, MlpCache& cc) {
  MlpLayout lay = mlp_layout(desc);
  std::vector<double> temb = time_embedding(t, desc.temb_dim);
  ParamCursor cur{params.data(), params.size()};
  const Activation act = desc.activation;
  const std::size_t L = lay.widths.size() - 1;

  cc.h.assign(L + 1, {});
  cc.z.assign(L, {});
  cc.h[0] = input;

  std::vector<std::pair<const double*, const double*>> layers;
  for (std::size_t l = 0; l < L; ++l) {
    const double* W = cur.take(lay.widths[l] * lay.widths[l + 1]);
    const double* b = cur.take(lay.widths[l + 1]);
    layers.emplace_back(W, b);
  }
  const double* wt = cur.take(lay.widths[1] * desc.temb_dim);
  const double* bt = cur.take(lay.widths[1]);

  for (std::size_t l = 0; l < L; ++l) {
    const auto [W, b] = layers[l];
    const std::size_t nin = lay.widths[l], nout = lay.widths[l + 1];
    cc.z[l].assign(nout, 0.0);
    for (std::size_t j = 0; j < nout; ++j) {
      double s = b[j];
      const double* wrow = W + j * nin;
      for (std::size_t i = 0; i < nin; ++i) s += wrow[i] * cc.h[l][i];
      cc.z[l][j] = s;
    }
    if (l == 0) {
      for (std::size_t j = 0; j < nout; ++j) {
        double s = bt[j];
        const double* wrow = wt + j * desc.temb_dim;
        for (int e = 0; e < desc.temb_dim; ++e) s += wrow[e] * temb[e];
        cc.z[l][j] += s;
      }
    }
    cc.h[l + 1].assign(nout, 0.0);
    const bool last = (l + 1 == L);
    for (std::size_t j = 0; j < nout; ++j) {
      cc.h[l + 1][j] = last ? cc.z[l][j] : act_eval(cc.z[l][j], act);
    }
  }
}

void mlp_backward(const NetDescriptor& desc, const std::vector<double>& params,
                  const MlpCache& cc, int t, const std::vector<double>& dpred,
                  std::span<double> grad) {
  MlpLayout lay = mlp_layout(desc);
  std::vector<double> temb = time_embedding(t, desc.temb_dim);
  ParamCursor cur{params.data(), params.size()};
  GradCursor gcur{grad.data(), grad.size()};
  const Activation act = desc.activation;
  const std::size_t L = lay.widths.size() - 1;

  std::vector<std::pair<const double*, const double*>> layers;
  std::vector<std::pair<double*, double*>> glayers;
  for (std::size_t l = 0; l < L; ++l) {
    const double* W = cur.take(lay.widths[l] * lay.widths[l + 1]);
    const double* b = cur.take(lay.widths[l + 1]);
    layers.emplace_back(W, b);
  }
  const double* wt = cur.take(lay.widths[1] * desc.temb_dim);
  cur.take(lay.widths[1]);
  for (std::size_t l = 0; l < L; ++l) {
    double* W = gcur.take(lay.widths[l] * lay.widths[l + 1]);
    double* b = gcur.take(lay.widths[l + 1]);
    glayers.emplace_back(W, b);
  }
  double* gwt = gcur.take(lay.widths[1] * desc.temb_dim);
  double* gbt = gcur.take(lay.widths[1]);
  (void)wt;

  std::vector<double> dz = dpred;  // last layer is linear
  for (std::size_t l = L; l-- > 0;) {
    const auto [W, b] = layers[l];
    (void)b;
    const auto [gW, gb] = glayers[l];
    const std::size_t nin = lay.widths[l], nout = lay.widths[l + 1];
    if (l + 1 != L) {
      for (std::size_t j = 0; j < nout; ++j) dz[j] *= act_grad(cc.z[l][j], act);
    }
    for (std::size_t j = 0; j < nout; ++j) {
      gb[j] += dz[j];
      double* grow = gW + j * nin;
      const double g = dz[j];
      for (std::size_t i = 0; i < nin; ++i) grow[i] += g * cc.h[l][i];
    }
    if (l == 0) {
      for (std::size_t j = 0; j < nout; ++j) {
        gbt[j] += dz[j];
        double* grow = gwt + j * desc.temb_dim;
        for (int e = 0; e < desc.temb_dim; ++e) grow[e] += dz[j] * temb[e];
      }
      break;  // input gradient unused
    }
    std::vector<double> dh(nin, 0.0);
    for (std::size_t j = 0; j < nout; ++j) {
      const double* wrow = W + j * nin;
      const double g = dz[j];
      for (std::size_t i = 0; i < nin; ++i) dh[i] += g * wrow[i];
    }
    dz = std::move(dh);
  }
}

}  // namespace

ImageGrid SmallDenoiserNet::predict(const ImageGrid& x_t, int t) const {
  if (x_t.width() != desc_.width || x_t.height() != desc_.height) {
    throw std::invalid_argument("net: input shape mismatch");
  }
  ImageGrid out(desc_.width, desc_.height, x_t.range());
  if (desc_.kind == NetDescriptor::Kind::Unet) {
    Buf input(1, desc_.height, desc_.width);
    input.v = x_t.values();
    UnetCache cc;
    unet_forward(desc_, params_, input, t, cc);
    out.values() = cc.zout.v;
  } else {
    MlpCache cc;
    mlp_forward(desc_, params_, x_t.values(), t, cc);
    out.values() = cc.h.back();
  }
  out.require_finite("net prediction at t=" + std::to_string(t));
  return out;
}

double SmallDenoiserNet::loss_grad_single(const ImageGrid& x_t, int t, const ImageGrid& target,
                                          double weight, std::span<double> grad_accum) const {
  require_same_shape(x_t, target, "loss_grad_single");
  if (grad_accum.size() != params_.size()) {
    throw std::invalid_argument("loss_grad_single: gradient buffer size mismatch");
  }
  double loss = 0.0;
  if (desc_.kind == NetDescriptor::Kind::Unet) {
    Buf input(1, desc_.height, desc_.width);
    input.v = x_t.values();
    UnetCache cc;
    unet_forward(desc_, params_, input, t, cc);
    Buf dpred(1, desc_.height, desc_.width);
    for (std::size_t i = 0; i < dpred.size(); ++i) {
      double r = cc.zout.v[i] - target[i];
      loss += r * r;
      dpred.v[i] = 2.0 * weight * r;
    }
    unet_backward(desc_, params_, cc, t, dpred, grad_accum);
  } else {
    MlpCache cc;
    mlp_forward(desc_, params_, x_t.values(), t, cc);
    std::vector<double> dpred(cc.h.back().size());
    for (std::size_t i = 0; i < dpred.size(); ++i) {
      double r = cc.h.back()[i] - target[i];
      loss += r * r;
      dpred[i] = 2.0 * weight * r;
    }
    mlp_backward(desc_, params_, cc, t, dpred, grad_accum);
  }
  return loss;
}

}  // namespace phantomdiff
