#include <cmath>
#include <cstring>
#include <stdexcept>

#include "canseg/kernels.hpp"
#include "canseg/tensor.hpp"

namespace canseg::nn {

namespace {

using detail::op_output;

void expect(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct Dhw {
  int c, d, h, w;
  std::size_t vox() const { return std::size_t(d) * h * w; }
};

Dhw dhw(const Tensor& t) {
  expect(t.shape().size() == 4, "op: expected a (C,D,H,W) tensor");
  const auto& s = t.shape();
  return {s[0], s[1], s[2], s[3]};
}

// Zero-bordered copy of all channels with margin p per side.
std::vector<float> pad_channels(const float* src, int c, int d, int h, int w, int p) {
  const int pd = d + 2 * p, ph = h + 2 * p, pw = w + 2 * p;
  std::vector<float> out(std::size_t(c) * pd * ph * pw, 0.f);
  for (int ci = 0; ci < c; ++ci)
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y) {
        const float* s = src + ((std::size_t(ci) * d + z) * h + y) * w;
        float* o = out.data() + ((std::size_t(ci) * pd + z + p) * ph + y + p) * pw + p;
        std::memcpy(o, s, sizeof(float) * w);
      }
  return out;
}

void flip27(const float* w, float* out) {
  for (int i = 0; i < 27; ++i) out[i] = w[26 - i];
}

}  // namespace

// ---- convolution ---------------------------------------------------------

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Dhw in = dhw(x);
  expect(w.shape().size() == 5, "conv3d: weight must be (Co,Ci,k,k,k)");
  const int co = w.shape()[0], ci = w.shape()[1], k = w.shape()[2];
  expect(w.shape()[3] == k && w.shape()[4] == k, "conv3d: kernel must be cubic");
  expect(k == 1 || k == 3, "conv3d: kernel extent must be 1 or 3");
  expect(ci == in.c, "conv3d: input channel mismatch");
  expect(b.shape().size() == 1 && b.shape()[0] == co, "conv3d: bias must be (Co)");
  expect(stride == 1 || stride == 2, "conv3d: stride must be 1 or 2");
  expect(pad == 0 || pad == 1, "conv3d: pad must be 0 or 1");
  if (k == 1) expect(stride == 1 && pad == 0, "conv3d: 1^3 kernel requires stride 1, pad 0");

  int od, oh, ow;
  if (k == 1) {
    od = in.d;
    oh = in.h;
    ow = in.w;
  } else if (stride == 1) {
    od = in.d + 2 * pad - 2;
    oh = in.h + 2 * pad - 2;
    ow = in.w + 2 * pad - 2;
    expect(od > 0 && oh > 0 && ow > 0, "conv3d: input smaller than receptive field");
  } else {
    expect(pad == 1, "conv3d: stride 2 requires pad 1");
    od = (in.d - 1) / 2 + 1;
    oh = (in.h - 1) / 2 + 1;
    ow = (in.w - 1) / 2 + 1;
  }

  Tensor out = op_output({co, od, oh, ow}, {x.n, w.n, b.n});
  const std::size_t ovox = std::size_t(od) * oh * ow;
  const auto& kt = kern::active();

  // forward
  for (int c = 0; c < co; ++c)
    std::fill_n(out.data() + c * ovox, ovox, b.data()[c]);

  if (k == 1) {
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < ci; ++i)
        kt.axpy(w.data()[c * ci + i], x.data() + i * in.vox(), out.data() + c * ovox, ovox);
  } else if (stride == 1) {
    std::vector<float> padded;
    const float* src = x.data();
    std::size_t svox = in.vox();
    if (pad == 1) {
      padded = pad_channels(x.data(), in.c, in.d, in.h, in.w, 1);
      src = padded.data();
      svox = std::size_t(in.d + 2) * (in.h + 2) * (in.w + 2);
    }
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < ci; ++i)
        kt.conv3_acc(src + i * svox, out.data() + c * ovox,
                     w.data() + (std::size_t(c) * ci + i) * 27, ow, oh, od);
  } else {
    // stride 2, pad 1: direct gather
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < ci; ++i) {
        const float* wp = w.data() + (std::size_t(c) * ci + i) * 27;
        const float* xin = x.data() + i * in.vox();
        float* o = out.data() + c * ovox;
        for (int oz = 0; oz < od; ++oz)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              float acc = 0.f;
              for (int kz = 0; kz < 3; ++kz) {
                int z = 2 * oz + kz - 1;
                if (z < 0 || z >= in.d) continue;
                for (int ky = 0; ky < 3; ++ky) {
                  int y = 2 * oy + ky - 1;
                  if (y < 0 || y >= in.h) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    int xx = 2 * ox + kx - 1;
                    if (xx < 0 || xx >= in.w) continue;
                    acc += wp[(kz * 3 + ky) * 3 + kx] * xin[(std::size_t(z) * in.h + y) * in.w + xx];
                  }
                }
              }
              o[(std::size_t(oz) * oh + oy) * ow + ox] += acc;
            }
      }
  }

  if (!out.n->requires_grad) return out;

  Node* self = out.n.get();
  NodePtr xn = x.n, wn = w.n, bn = b.n;
  out.n->backward_fn = [self, xn, wn, bn, in, co, ci, k, stride, pad, od, oh, ow]() {
    const auto& kt2 = kern::active();
    const float* go = self->grad.data();
    const std::size_t ovox = std::size_t(od) * oh * ow;

    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int c = 0; c < co; ++c) bn->grad[c] += float(kt2.sum(go + c * ovox, ovox));
    }

    if (k == 1) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < ci; ++i)
          for (int c = 0; c < co; ++c)
            kt2.axpy(wn->value[c * ci + i], go + c * ovox, xn->grad.data() + i * in.vox(),
                     ovox);
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int c = 0; c < co; ++c)
          for (int i = 0; i < ci; ++i)
            wn->grad[c * ci + i] +=
                float(kt2.dot(go + c * ovox, xn->value.data() + i * in.vox(), ovox));
      }
      return;
    }

    if (stride == 1) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        auto gpad = pad_channels(go, co, od, oh, ow, 2 - pad);
        const std::size_t gvox = std::size_t(in.d + 2) * (in.h + 2) * (in.w + 2);
        float wf[27];
        for (int i = 0; i < ci; ++i)
          for (int c = 0; c < co; ++c) {
            flip27(wn->value.data() + (std::size_t(c) * ci + i) * 27, wf);
            kt2.conv3_acc(gpad.data() + c * gvox, xn->grad.data() + i * in.vox(), wf, in.w,
                          in.h, in.d);
          }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        std::vector<float> padded;
        const float* src = xn->value.data();
        std::size_t svox = in.vox();
        if (pad == 1) {
          padded = pad_channels(src, in.c, in.d, in.h, in.w, 1);
          src = padded.data();
          svox = std::size_t(in.d + 2) * (in.h + 2) * (in.w + 2);
        }
        for (int c = 0; c < co; ++c)
          for (int i = 0; i < ci; ++i)
            kt2.conv3_wgrad(src + i * svox, go + c * ovox,
                            wn->grad.data() + (std::size_t(c) * ci + i) * 27, ow, oh, od);
      }
      return;
    }

    // stride 2
    if (xn->requires_grad) xn->ensure_grad();
    if (wn->requires_grad) wn->ensure_grad();
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < ci; ++i) {
        const float* wp = wn->value.data() + (std::size_t(c) * ci + i) * 27;
        float* gw = wn->requires_grad ? wn->grad.data() + (std::size_t(c) * ci + i) * 27 : nullptr;
        const float* xin = xn->value.data() + i * in.vox();
        float* gx = xn->requires_grad ? xn->grad.data() + i * in.vox() : nullptr;
        const float* g = go + c * ovox;
        for (int oz = 0; oz < od; ++oz)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              float gv = g[(std::size_t(oz) * oh + oy) * ow + ox];
              if (gv == 0.f) continue;
              for (int kz = 0; kz < 3; ++kz) {
                int z = 2 * oz + kz - 1;
                if (z < 0 || z >= in.d) continue;
                for (int ky = 0; ky < 3; ++ky) {
                  int y = 2 * oy + ky - 1;
                  if (y < 0 || y >= in.h) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    int xx = 2 * ox + kx - 1;
                    if (xx < 0 || xx >= in.w) continue;
                    std::size_t si = (std::size_t(z) * in.h + y) * in.w + xx;
                    int t = (kz * 3 + ky) * 3 + kx;
                    if (gx) gx[si] += wp[t] * gv;
                    if (gw) gw[t] += xin[si] * gv;
                  }
                }
              }
            }
      }
  };
  return out;
}

// ---- elementwise ---------------------------------------------------------

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor out = op_output(x.shape(), {x.n});
  kern::active().leaky_relu_fwd(x.data(), out.data(), slope, x.size());
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, slope]() {
      xn->ensure_grad();
      kern::active().leaky_relu_bwd(xn->value.data(), self->grad.data(), xn->grad.data(),
                                    slope, xn->value.size());
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = op_output(x.shape(), {x.n});
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = 1.f / (1.f + std::exp(-x.data()[i]));
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->value.size(); ++i) {
        float y = self->value[i];
        xn->grad[i] += self->grad[i] * y * (1.f - y);
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out = op_output(a.shape(), {a.n, b.n});
  kern::active().add(a.data(), b.data(), out.data(), a.size());
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr an = a.n, bn = b.n;
    out.n->backward_fn = [self, an, bn]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kern::active().axpy(1.f, self->grad.data(), an->grad.data(), self->grad.size());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kern::active().axpy(1.f, self->grad.data(), bn->grad.data(), self->grad.size());
      }
    };
  }
  return out;
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
  const Dhw da = dhw(a), db = dhw(b);
  expect(da.d == db.d && da.h == db.h && da.w == db.w, "concat_c: grid mismatch");
  Tensor out = op_output({da.c + db.c, da.d, da.h, da.w}, {a.n, b.n});
  std::memcpy(out.data(), a.data(), a.size() * sizeof(float));
  std::memcpy(out.data() + a.size(), b.data(), b.size() * sizeof(float));
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr an = a.n, bn = b.n;
    const std::size_t na = a.size();
    out.n->backward_fn = [self, an, bn, na]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kern::active().axpy(1.f, self->grad.data(), an->grad.data(), na);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kern::active().axpy(1.f, self->grad.data() + na, bn->grad.data(),
                            self->grad.size() - na);
      }
    };
  }
  return out;
}

// ---- normalization / dropout ---------------------------------------------

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const Dhw in = dhw(x);
  expect(gamma.shape().size() == 1 && gamma.shape()[0] == in.c, "instance_norm: gamma (C)");
  expect(beta.shape().size() == 1 && beta.shape()[0] == in.c, "instance_norm: beta (C)");
  Tensor out = op_output(x.shape(), {x.n, gamma.n, beta.n});
  const std::size_t n = in.vox();
  const auto& kt = kern::active();

  auto stats = std::make_shared<std::vector<float>>(std::size_t(in.c) * 2);  // mean, inv_std
  for (int c = 0; c < in.c; ++c) {
    const float* xc = x.data() + c * n;
    double mean = kt.sum(xc, n) / double(n);
    double var = kt.sumsq(xc, n) / double(n) - mean * mean;
    if (var < 0) var = 0;
    float istd = float(1.0 / std::sqrt(var + eps));
    (*stats)[2 * c] = float(mean);
    (*stats)[2 * c + 1] = istd;
    float s = gamma.data()[c] * istd;
    kt.affine(xc, out.data() + c * n, s, beta.data()[c] - float(mean) * s, n);
  }

  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n, gn = gamma.n, bn = beta.n;
    out.n->backward_fn = [self, xn, gn, bn, stats, in, n]() {
      const auto& kt2 = kern::active();
      for (int c = 0; c < in.c; ++c) {
        const float* go = self->grad.data() + c * n;
        const float* xc = xn->value.data() + c * n;
        const float mean = (*stats)[2 * c], istd = (*stats)[2 * c + 1];
        double sg = kt2.sum(go, n);
        double sgx = (kt2.dot(go, xc, n) - mean * sg) * istd;  // sum go * xhat
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[c] += float(sg);
        }
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[c] += float(sgx);
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          float* gx = xn->grad.data() + c * n;
          const float g = gn->value[c];
          const float a = g * istd;
          const float cf = -g * istd * istd * float(sgx) / float(n);
          const float b0 = -a * float(sg) / float(n) - cf * mean;
          for (std::size_t i = 0; i < n; ++i) gx[i] += a * go[i] + cf * xc[i] + b0;
        }
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, float p, std::mt19937_64& rng, bool training) {
  expect(p >= 0.f && p < 1.f, "dropout: p must be in [0,1)");
  if (!training || p == 0.f) return x;
  Tensor out = op_output(x.shape(), {x.n});
  auto mask = std::make_shared<std::vector<std::uint8_t>>(x.size());
  std::uniform_real_distribution<float> u(0.f, 1.f);
  const float inv = 1.f / (1.f - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = u(rng) >= p;
    out.data()[i] = (*mask)[i] ? x.data()[i] * inv : 0.f;
  }
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, mask, inv]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        if ((*mask)[i]) xn->grad[i] += self->grad[i] * inv;
    };
  }
  return out;
}

// ---- pooling / gating -----------------------------------------------------

Tensor global_avg_pool(const Tensor& x) {
  const Dhw in = dhw(x);
  Tensor out = op_output({in.c, 1, 1, 1}, {x.n});
  const std::size_t n = in.vox();
  for (int c = 0; c < in.c; ++c)
    out.data()[c] = float(kern::active().sum(x.data() + c * n, n) / double(n));
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, in, n]() {
      xn->ensure_grad();
      for (int c = 0; c < in.c; ++c) {
        const float g = self->grad[c] / float(n);
        float* gx = xn->grad.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
      }
    };
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& gates) {
  const Dhw in = dhw(x);
  expect(std::size_t(gates.size()) == std::size_t(in.c), "scale_channels: gate count mismatch");
  Tensor out = op_output(x.shape(), {x.n, gates.n});
  const std::size_t n = in.vox();
  for (int c = 0; c < in.c; ++c)
    kern::active().affine(x.data() + c * n, out.data() + c * n, gates.data()[c], 0.f, n);
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n, gn = gates.n;
    out.n->backward_fn = [self, xn, gn, in, n]() {
      const auto& kt = kern::active();
      for (int c = 0; c < in.c; ++c) {
        const float* go = self->grad.data() + c * n;
        if (xn->requires_grad) {
          xn->ensure_grad();
          kt.axpy(gn->value[c], go, xn->grad.data() + c * n, n);
        }
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[c] += float(kt.dot(go, xn->value.data() + c * n, n));
        }
      }
    };
  }
  return out;
}

// ---- resampling ------------------------------------------------------------

namespace {

struct Lin1D {
  std::vector<int> i0, i1;
  std::vector<float> w1;
};

Lin1D linear_2x_taps(int n_in) {
  Lin1D t;
  const int n_out = 2 * n_in;
  t.i0.resize(n_out);
  t.i1.resize(n_out);
  t.w1.resize(n_out);
  for (int o = 0; o < n_out; ++o) {
    double s = (o + 0.5) / 2.0 - 0.5;
    double f = std::floor(s);
    int i0 = std::clamp(int(f), 0, n_in - 1);
    t.i0[o] = i0;
    t.i1[o] = std::clamp(i0 + 1, 0, n_in - 1);
    t.w1[o] = float(std::clamp(s - f, 0.0, 1.0));
    if (int(f) < 0) t.w1[o] = 0.f;  // both taps clamp to 0; weight on i0
  }
  return t;
}

// axis: 0 = x (fastest), 1 = y, 2 = z. Shapes are per-channel (d,h,w).
void axis2x_fwd(const float* in, float* out, int c, int d, int h, int w, int axis,
                const Lin1D& t) {
  const auto& kt = kern::active();
  if (axis == 0) {
    const int ow = 2 * w;
    for (std::size_t r = 0; r < std::size_t(c) * d * h; ++r) {
      const float* src = in + r * w;
      float* dst = out + r * ow;
      for (int o = 0; o < ow; ++o)
        dst[o] = (1.f - t.w1[o]) * src[t.i0[o]] + t.w1[o] * src[t.i1[o]];
    }
  } else if (axis == 1) {
    const int oh = 2 * h;
    for (int ci = 0; ci < c; ++ci)
      for (int z = 0; z < d; ++z) {
        const float* plane = in + (std::size_t(ci) * d + z) * h * w;
        float* oplane = out + (std::size_t(ci) * d + z) * oh * w;
        for (int o = 0; o < oh; ++o) {
          float* dst = oplane + std::size_t(o) * w;
          kt.affine(plane + std::size_t(t.i0[o]) * w, dst, 1.f - t.w1[o], 0.f, w);
          kt.axpy(t.w1[o], plane + std::size_t(t.i1[o]) * w, dst, w);
        }
      }
  } else {
    const int od = 2 * d;
    const std::size_t pl = std::size_t(h) * w;
    for (int ci = 0; ci < c; ++ci) {
      const float* vol = in + std::size_t(ci) * d * pl;
      float* ovol = out + std::size_t(ci) * od * pl;
      for (int o = 0; o < od; ++o) {
        float* dst = ovol + std::size_t(o) * pl;
        kt.affine(vol + std::size_t(t.i0[o]) * pl, dst, 1.f - t.w1[o], 0.f, pl);
        kt.axpy(t.w1[o], vol + std::size_t(t.i1[o]) * pl, dst, pl);
      }
    }
  }
}

void axis2x_bwd(const float* go, float* gin, int c, int d, int h, int w, int axis,
                const Lin1D& t) {
  // Adjoint of axis2x_fwd; (d,h,w) are the *input* extents, go has the axis doubled.
  const auto& kt = kern::active();
  if (axis == 0) {
    const int ow = 2 * w;
    for (std::size_t r = 0; r < std::size_t(c) * d * h; ++r) {
      const float* g = go + r * ow;
      float* gi = gin + r * w;
      for (int o = 0; o < ow; ++o) {
        gi[t.i0[o]] += (1.f - t.w1[o]) * g[o];
        gi[t.i1[o]] += t.w1[o] * g[o];
      }
    }
  } else if (axis == 1) {
    const int oh = 2 * h;
    for (int ci = 0; ci < c; ++ci)
      for (int z = 0; z < d; ++z) {
        const float* gplane = go + (std::size_t(ci) * d + z) * oh * w;
        float* giplane = gin + (std::size_t(ci) * d + z) * h * w;
        for (int o = 0; o < oh; ++o) {
          const float* g = gplane + std::size_t(o) * w;
          kt.axpy(1.f - t.w1[o], g, giplane + std::size_t(t.i0[o]) * w, w);
          kt.axpy(t.w1[o], g, giplane + std::size_t(t.i1[o]) * w, w);
        }
      }
  } else {
    const int od = 2 * d;
    const std::size_t pl = std::size_t(h) * w;
    for (int ci = 0; ci < c; ++ci) {
      const float* gvol = go + std::size_t(ci) * od * pl;
      float* givol = gin + std::size_t(ci) * d * pl;
      for (int o = 0; o < od; ++o) {
        const float* g = gvol + std::size_t(o) * pl;
        kt.axpy(1.f - t.w1[o], g, givol + std::size_t(t.i0[o]) * pl, pl);
        kt.axpy(t.w1[o], g, givol + std::size_t(t.i1[o]) * pl, pl);
      }
    }
  }
}

}  // namespace

Tensor upsample_trilinear2x(const Tensor& x) {
  const Dhw in = dhw(x);
  Tensor out = op_output({in.c, 2 * in.d, 2 * in.h, 2 * in.w}, {x.n});
  const Lin1D tx = linear_2x_taps(in.w), ty = linear_2x_taps(in.h), tz = linear_2x_taps(in.d);
  std::vector<float> t1(std::size_t(in.c) * in.d * in.h * 2 * in.w);
  std::vector<float> t2(std::size_t(in.c) * in.d * 2 * in.h * 2 * in.w);
  axis2x_fwd(x.data(), t1.data(), in.c, in.d, in.h, in.w, 0, tx);
  axis2x_fwd(t1.data(), t2.data(), in.c, in.d, in.h, 2 * in.w, 1, ty);
  axis2x_fwd(t2.data(), out.data(), in.c, in.d, 2 * in.h, 2 * in.w, 2, tz);
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, in, tx, ty, tz]() {
      xn->ensure_grad();
      std::vector<float> g2(std::size_t(in.c) * in.d * 2 * in.h * 2 * in.w, 0.f);
      std::vector<float> g1(std::size_t(in.c) * in.d * in.h * 2 * in.w, 0.f);
      axis2x_bwd(self->grad.data(), g2.data(), in.c, in.d, 2 * in.h, 2 * in.w, 2, tz);
      axis2x_bwd(g2.data(), g1.data(), in.c, in.d, in.h, 2 * in.w, 1, ty);
      axis2x_bwd(g1.data(), xn->grad.data(), in.c, in.d, in.h, in.w, 0, tx);
    };
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  expect(factor >= 1, "upsample_nearest: factor must be >= 1");
  const Dhw in = dhw(x);
  Tensor out = op_output({in.c, factor * in.d, factor * in.h, factor * in.w}, {x.n});
  const int od = factor * in.d, oh = factor * in.h, ow = factor * in.w;
  for (int c = 0; c < in.c; ++c)
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y) {
        const float* src =
            x.data() + ((std::size_t(c) * in.d + z / factor) * in.h + y / factor) * in.w;
        float* dst = out.data() + ((std::size_t(c) * od + z) * oh + y) * ow;
        for (int xx = 0; xx < ow; ++xx) dst[xx] = src[xx / factor];
      }
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, in, factor, od, oh, ow]() {
      xn->ensure_grad();
      for (int c = 0; c < in.c; ++c)
        for (int z = 0; z < od; ++z)
          for (int y = 0; y < oh; ++y) {
            const float* g = self->grad.data() + ((std::size_t(c) * od + z) * oh + y) * ow;
            float* gi = xn->grad.data() +
                        ((std::size_t(c) * in.d + z / factor) * in.h + y / factor) * in.w;
            for (int xx = 0; xx < ow; ++xx) gi[xx / factor] += g[xx];
          }
    };
  }
  return out;
}

// ---- classification heads ---------------------------------------------------

Tensor softmax_c(const Tensor& x) {
  const Dhw in = dhw(x);
  Tensor out = op_output(x.shape(), {x.n});
  const std::size_t n = in.vox();
  for (std::size_t v = 0; v < n; ++v) {
    float mx = x.data()[v];
    for (int c = 1; c < in.c; ++c) mx = std::max(mx, x.data()[c * n + v]);
    float denom = 0.f;
    for (int c = 0; c < in.c; ++c) {
      float e = std::exp(x.data()[c * n + v] - mx);
      out.data()[c * n + v] = e;
      denom += e;
    }
    for (int c = 0; c < in.c; ++c) out.data()[c * n + v] /= denom;
  }
  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = x.n;
    out.n->backward_fn = [self, xn, in, n]() {
      xn->ensure_grad();
      for (std::size_t v = 0; v < n; ++v) {
        float dotpg = 0.f;
        for (int c = 0; c < in.c; ++c)
          dotpg += self->value[c * n + v] * self->grad[c * n + v];
        for (int c = 0; c < in.c; ++c) {
          float p = self->value[c * n + v];
          xn->grad[c * n + v] += p * (self->grad[c * n + v] - dotpg);
        }
      }
    };
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::uint8_t* target) {
  const Dhw in = dhw(logits);
  const std::size_t n = in.vox();
  Tensor out = op_output({1}, {logits.n});
  auto probs = std::make_shared<std::vector<float>>(logits.size());
  auto tgt = std::make_shared<std::vector<std::uint8_t>>(target, target + n);

  double loss = 0;
  for (std::size_t v = 0; v < n; ++v) {
    expect((*tgt)[v] < in.c, "cross_entropy: target class out of range");
    float mx = logits.data()[v];
    for (int c = 1; c < in.c; ++c) mx = std::max(mx, logits.data()[c * n + v]);
    float denom = 0.f;
    for (int c = 0; c < in.c; ++c) {
      float e = std::exp(logits.data()[c * n + v] - mx);
      (*probs)[c * n + v] = e;
      denom += e;
    }
    for (int c = 0; c < in.c; ++c) (*probs)[c * n + v] /= denom;
    loss -= std::log(std::max((*probs)[(*tgt)[v] * n + v], 1e-30f));
  }
  out.data()[0] = float(loss / double(n));

  if (out.n->requires_grad) {
    Node* self = out.n.get();
    NodePtr xn = logits.n;
    const int nc = in.c;
    out.n->backward_fn = [self, xn, probs, tgt, n, nc]() {
      xn->ensure_grad();
      const float seed = self->grad[0] / float(n);
      for (std::size_t v = 0; v < n; ++v)
        for (int c = 0; c < nc; ++c)
          xn->grad[c * n + v] +=
              seed * ((*probs)[c * n + v] - (c == (*tgt)[v] ? 1.f : 0.f));
    };
  }
  return out;
}

}  // namespace canseg::nn
