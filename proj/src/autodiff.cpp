#include "tvin/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tvin {

Tensor& GradSink::slot(Param* p) {
  auto it = slots_.find(p);
  if (it == slots_.end()) {
    it = slots_.emplace(p, Tensor(p->value.shape())).first;
    order_.push_back(p);
  }
  return it->second;
}

void GradSink::flush() {
  for (Param* p : order_) p->grad.add_inplace(slots_.at(p));
}

ValueId Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&, ValueId)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) {
    n.grad = Tensor(n.value.shape());
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

ValueId Tape::leaf(Param& p) {
  ValueId id = push(p.value, true, {});
  node(id).param = &p;
  return id;
}

namespace kernels {

void conv2d_forward(const Tensor& x, const Tensor& w, const float* bias, Tensor& out) {
  const int c_in = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int c_out = w.dim(0), F = w.dim(2);
  const int pad = (F - 1) / 2;
  std::vector<double> acc(static_cast<size_t>(H * W));
  for (int o = 0; o < c_out; ++o) {
    std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias[o]) : 0.0);
    for (int c = 0; c < c_in; ++c) {
      const float* xc = x.data() + c * H * W;
      for (int dy = 0; dy < F; ++dy) {
        for (int dx = 0; dx < F; ++dx) {
          const float wv = w.at(o, c, dy, dx);
          if (wv == 0.0f) continue;
          const int y0 = std::max(0, pad - dy), y1 = std::min(H, H + pad - dy);
          const int x0 = std::max(0, pad - dx), x1 = std::min(W, W + pad - dx);
          for (int y = y0; y < y1; ++y) {
            const float* row = xc + (y + dy - pad) * W + (dx - pad);
            double* arow = acc.data() + y * W;
            for (int xx = x0; xx < x1; ++xx) arow[xx] += static_cast<double>(wv) * row[xx];
          }
        }
      }
    }
    float* orow = out.data() + o * H * W;
    for (int i = 0; i < H * W; ++i) orow[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
  }
}

void conv2d_backward_input(const Tensor& g, const Tensor& w, Tensor& dx) {
  const int c_in = dx.dim(0), H = dx.dim(1), W = dx.dim(2);
  const int c_out = w.dim(0), F = w.dim(2);
  const int pad = (F - 1) / 2;
  // dX[c, y+dy-p, x+dx-p] += g[o, y, x] * W[o, c, dy, dx]
  std::vector<double> acc(static_cast<size_t>(H * W));
  for (int c = 0; c < c_in; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int o = 0; o < c_out; ++o) {
      const float* go = g.data() + o * H * W;
      for (int dy = 0; dy < F; ++dy) {
        for (int dx = 0; dx < F; ++dx) {
          const float wv = w.at(o, c, dy, dx);
          if (wv == 0.0f) continue;
          const int y0 = std::max(0, pad - dy), y1 = std::min(H, H + pad - dy);
          const int x0 = std::max(0, pad - dx), x1 = std::min(W, W + pad - dx);
          for (int y = y0; y < y1; ++y) {
            const float* grow = go + y * W;
            double* arow = acc.data() + (y + dy - pad) * W + (dx - pad);
            for (int xx = x0; xx < x1; ++xx) arow[xx] += static_cast<double>(wv) * grow[xx];
          }
        }
      }
    }
    float* drow = dx.data() + c * H * W;
    for (int i = 0; i < H * W; ++i)
      drow[i] += static_cast<float>(acc[static_cast<size_t>(i)]);
  }
}

void conv2d_backward_kernel(const Tensor& g, const Tensor& x, Tensor& dw) {
  const int c_in = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int c_out = dw.dim(0), F = dw.dim(2);
  const int pad = (F - 1) / 2;
  for (int o = 0; o < c_out; ++o) {
    const float* go = g.data() + o * H * W;
    for (int c = 0; c < c_in; ++c) {
      const float* xc = x.data() + c * H * W;
      for (int dy = 0; dy < F; ++dy) {
        for (int dx = 0; dx < F; ++dx) {
          const int y0 = std::max(0, pad - dy), y1 = std::min(H, H + pad - dy);
          const int x0 = std::max(0, pad - dx), x1 = std::min(W, W + pad - dx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const float* grow = go + y * W;
            const float* xrow = xc + (y + dy - pad) * W + (dx - pad);
            for (int xx = x0; xx < x1; ++xx)
              acc += static_cast<double>(grow[xx]) * xrow[xx];
          }
          dw.at(o, c, dy, dx) += static_cast<float>(acc);
        }
      }
    }
  }
}

}  // namespace kernels

ValueId Tape::conv2d(ValueId input, ValueId kernel, ValueId bias) {
  const Tensor& x = value(input);
  const Tensor& w = value(kernel);
  if (x.rank() != 3 || w.rank() != 4)
    throw std::invalid_argument("conv2d: expected (C,H,W) input and (O,C,F,F) kernel");
  if (w.dim(1) != x.dim(0))
    throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(0)) +
                                " != kernel channels " + std::to_string(w.dim(1)));
  if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw std::invalid_argument("conv2d: kernel must be square with odd size");
  if (bias != kNoValue && value(bias).numel() != w.dim(0))
    throw std::invalid_argument("conv2d: bias length != output channels");

  Tensor out({w.dim(0), x.dim(1), x.dim(2)});
  kernels::conv2d_forward(x, w, bias != kNoValue ? value(bias).data() : nullptr, out);

  bool needs = wants_grad(input) || wants_grad(kernel) || (bias != kNoValue && wants_grad(bias));
  return push(std::move(out), needs, [input, kernel, bias](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    if (t.wants_grad(input))
      kernels::conv2d_backward_input(g, t.value(kernel), t.grad_mut(input));
    if (t.wants_grad(kernel))
      kernels::conv2d_backward_kernel(g, t.value(input), t.grad_mut(kernel));
    if (bias != kNoValue && t.wants_grad(bias)) {
      Tensor& db = t.grad_mut(bias);
      const int c_out = g.dim(0), hw = g.dim(1) * g.dim(2);
      for (int o = 0; o < c_out; ++o) {
        double acc = 0.0;
        const float* go = g.data() + o * hw;
        for (int i = 0; i < hw; ++i) acc += go[i];
        db[o] += static_cast<float>(acc);
      }
    }
  });
}

ValueId Tape::relu(ValueId x) {
  const Tensor& in = value(x);
  Tensor out(in.shape());
  const int n = in.numel();
  for (int i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
  return push(std::move(out), wants_grad(x), [x](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    Tensor& dx = t.grad_mut(x);
    const int n = g.numel();
    for (int i = 0; i < n; ++i)
      if (in[i] > 0.0f) dx[i] += g[i];
  });
}

ValueId Tape::concat_channels(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(1) != tb.dim(1) || ta.dim(2) != tb.dim(2))
    throw std::invalid_argument("concat_channels: spatial shapes differ");
  Tensor out({ta.dim(0) + tb.dim(0), ta.dim(1), ta.dim(2)});
  std::memcpy(out.data(), ta.data(), sizeof(float) * static_cast<size_t>(ta.numel()));
  std::memcpy(out.data() + ta.numel(), tb.data(), sizeof(float) * static_cast<size_t>(tb.numel()));
  return push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    const int na = t.value(a).numel();
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_mut(a);
      for (int i = 0; i < na; ++i) da[i] += g[i];
    }
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_mut(b);
      const int nb = t.value(b).numel();
      for (int i = 0; i < nb; ++i) db[i] += g[na + i];
    }
  });
}

ValueId Tape::channel_group_max(ValueId x, int groups, std::vector<int>* argmax_out) {
  const Tensor& in = value(x);
  if (in.rank() != 3 || groups < 1 || in.dim(0) % groups != 0)
    throw std::invalid_argument("channel_group_max: channels not divisible by groups");
  const int a_count = in.dim(0) / groups;
  const int H = in.dim(1), W = in.dim(2), hw = H * W;
  Tensor out({groups, H, W});
  // Winner channel per output pixel; kept by shared_ptr so the backward
  // closure and the caller can both see it.
  auto winners = std::make_shared<std::vector<int>>(static_cast<size_t>(groups * hw));
  for (int g = 0; g < groups; ++g) {
    for (int p = 0; p < hw; ++p) {
      float best = in[g * hw + p];
      int best_c = g;
      for (int a = 1; a < a_count; ++a) {
        const int c = a * groups + g;
        const float v = in[c * hw + p];
        if (v > best) {
          best = v;
          best_c = c;
        }
      }
      out[g * hw + p] = best;
      (*winners)[static_cast<size_t>(g * hw + p)] = best_c;
    }
  }
  if (argmax_out) *argmax_out = *winners;
  return push(std::move(out), wants_grad(x), [x, winners, hw](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    Tensor& dx = t.grad_mut(x);
    const int n = g.numel();
    for (int i = 0; i < n; ++i) {
      const int p = i % hw;
      dx[(*winners)[static_cast<size_t>(i)] * hw + p] += g[i];
    }
  });
}

ValueId Tape::linear(ValueId x, ValueId weight, ValueId bias) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (w.rank() != 2 || in.numel() != w.dim(1) || b.numel() != w.dim(0))
    throw std::invalid_argument("linear: shape mismatch");
  const int d_out = w.dim(0), d_in = w.dim(1);
  Tensor out({d_out});
  for (int o = 0; o < d_out; ++o) {
    double acc = b[o];
    const float* wr = w.data() + o * d_in;
    for (int i = 0; i < d_in; ++i) acc += static_cast<double>(wr[i]) * in[i];
    out[o] = static_cast<float>(acc);
  }
  bool needs = wants_grad(x) || wants_grad(weight) || wants_grad(bias);
  return push(std::move(out), needs, [x, weight, bias, d_out, d_in](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    const Tensor& w = t.value(weight);
    const Tensor& in = t.value(x);
    if (t.wants_grad(x)) {
      Tensor& dx = t.grad_mut(x);
      for (int i = 0; i < d_in; ++i) {
        double acc = 0.0;
        for (int o = 0; o < d_out; ++o)
          acc += static_cast<double>(g[o]) * w[o * d_in + i];
        dx[i] += static_cast<float>(acc);
      }
    }
    if (t.wants_grad(weight)) {
      Tensor& dw = t.grad_mut(weight);
      for (int o = 0; o < d_out; ++o)
        for (int i = 0; i < d_in; ++i) dw[o * d_in + i] += g[o] * in[i];
    }
    if (t.wants_grad(bias)) {
      Tensor& db = t.grad_mut(bias);
      for (int o = 0; o < d_out; ++o) db[o] += g[o];
    }
  });
}

ValueId Tape::scalar_scale(ValueId x, ValueId s) {
  const Tensor& in = value(x);
  const Tensor& sc = value(s);
  if (sc.numel() != 1) throw std::invalid_argument("scalar_scale: scale must be one element");
  const double sv = sc[0];
  Tensor out(in.shape());
  const int n = in.numel();
  for (int i = 0; i < n; ++i) out[i] = static_cast<float>(sv * in[i]);
  return push(std::move(out), wants_grad(x) || wants_grad(s), [x, s](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    const float sv = t.value(s)[0];
    const int n = g.numel();
    if (t.wants_grad(x)) {
      Tensor& dx = t.grad_mut(x);
      for (int i = 0; i < n; ++i) dx[i] += sv * g[i];
    }
    if (t.wants_grad(s)) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += static_cast<double>(in[i]) * g[i];
      t.grad_mut(s)[0] += static_cast<float>(acc);
    }
  });
}

ValueId Tape::stack_rows(const std::vector<ValueId>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("stack_rows: no blocks");
  int rows = 0;
  const Tensor& first = value(blocks[0]);
  if (first.rank() != 4) throw std::invalid_argument("stack_rows: expected 4-D blocks");
  bool needs = false;
  for (ValueId b : blocks) {
    const Tensor& t = value(b);
    if (t.rank() != 4 || t.dim(1) != first.dim(1) || t.dim(2) != first.dim(2) ||
        t.dim(3) != first.dim(3))
      throw std::invalid_argument("stack_rows: block shapes differ");
    rows += t.dim(0);
    needs = needs || wants_grad(b);
  }
  Tensor out({rows, first.dim(1), first.dim(2), first.dim(3)});
  int off = 0;
  for (ValueId b : blocks) {
    const Tensor& t = value(b);
    std::memcpy(out.data() + off, t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
    off += t.numel();
  }
  auto ids = std::make_shared<std::vector<ValueId>>(blocks);
  return push(std::move(out), needs, [ids](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    int off = 0;
    for (ValueId b : *ids) {
      const int n = t.value(b).numel();
      if (t.wants_grad(b)) {
        Tensor& db = t.grad_mut(b);
        for (int i = 0; i < n; ++i) db[i] += g[off + i];
      }
      off += n;
    }
  });
}

ValueId Tape::select_state(ValueId q, int i, int j, int o, int groups) {
  const Tensor& in = value(q);
  if (in.rank() != 3 || in.dim(0) % groups != 0)
    throw std::invalid_argument("select_state: bad q shape");
  const int H = in.dim(1), W = in.dim(2);
  if (i < 0 || i >= H || j < 0 || j >= W || o < 0 || o >= groups)
    throw std::invalid_argument("select_state: state out of range");
  const int a_count = in.dim(0) / groups;
  const int hw = H * W;
  Tensor out({a_count});
  for (int a = 0; a < a_count; ++a) out[a] = in[(a * groups + o) * hw + i * W + j];
  return push(std::move(out), wants_grad(q), [q, i, j, o, groups, hw](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    Tensor& dq = t.grad_mut(q);
    const int W = t.value(q).dim(2);
    const int n = g.numel();
    for (int a = 0; a < n; ++a) dq[(a * groups + o) * hw + i * W + j] += g[a];
  });
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(ta.shape());
  const int n = ta.numel();
  for (int i = 0; i < n; ++i) out[i] = ta[i] + tb[i];
  return push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](Tape& t, ValueId self) {
    const Tensor& g = t.grad(self);
    const int n = g.numel();
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_mut(a);
      for (int i = 0; i < n; ++i) da[i] += g[i];
    }
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_mut(b);
      for (int i = 0; i < n; ++i) db[i] += g[i];
    }
  });
}

ValueId Tape::weighted_sum(ValueId x, Tensor weights) {
  const Tensor& in = value(x);
  if (!in.same_shape(weights)) throw std::invalid_argument("weighted_sum: shape mismatch");
  double acc = 0.0;
  const int n = in.numel();
  for (int i = 0; i < n; ++i) acc += static_cast<double>(in[i]) * weights[i];
  auto w = std::make_shared<Tensor>(std::move(weights));
  return push(Tensor::scalar(static_cast<float>(acc)), wants_grad(x),
              [x, w](Tape& t, ValueId self) {
                const float g = t.grad(self)[0];
                Tensor& dx = t.grad_mut(x);
                const int n = dx.numel();
                for (int i = 0; i < n; ++i) dx[i] += g * (*w)[i];
              });
}

ValueId Tape::softmax_cross_entropy(ValueId logits, int target, Tensor* probs_out) {
  const Tensor& l = value(logits);
  const int a_count = l.numel();
  if (a_count < 2) throw std::invalid_argument("softmax_cross_entropy: need at least 2 logits");
  if (target < 0 || target >= a_count)
    throw std::invalid_argument("softmax_cross_entropy: target out of range");
  double m = l[0];
  for (int i = 1; i < a_count; ++i) m = std::max(m, static_cast<double>(l[i]));
  double sum = 0.0;
  for (int i = 0; i < a_count; ++i) sum += std::exp(static_cast<double>(l[i]) - m);
  const double lse = m + std::log(sum);
  auto probs = std::make_shared<Tensor>(std::vector<int>{a_count});
  for (int i = 0; i < a_count; ++i)
    (*probs)[i] = static_cast<float>(std::exp(static_cast<double>(l[i]) - lse));
  if (probs_out) *probs_out = *probs;
  Tensor loss = Tensor::scalar(static_cast<float>(lse - static_cast<double>(l[target])));
  return push(std::move(loss), wants_grad(logits),
              [logits, target, probs](Tape& t, ValueId self) {
                const float g = t.grad(self)[0];
                Tensor& dl = t.grad_mut(logits);
                const int n = dl.numel();
                for (int i = 0; i < n; ++i)
                  dl[i] += g * ((*probs)[i] - (i == target ? 1.0f : 0.0f));
              });
}

void Tape::backward(ValueId loss, float seed, GradSink* sink) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  Node& ln = node(loss);
  if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!ln.needs_grad) return;
  ln.grad[0] = seed;
  for (ValueId id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (!n.needs_grad) continue;
    if (n.back) n.back(*this, id);
    if (n.param) {
      if (sink)
        sink->slot(n.param).add_inplace(n.grad);
      else
        n.param->grad.add_inplace(n.grad);
    }
  }
}

void sgd_step(const std::vector<Param*>& params, float lr) {
  for (Param* p : params) {
    if (!p->frozen) {
      const int n = p->value.numel();
      for (int i = 0; i < n; ++i) p->value[i] -= lr * p->grad[i];
    }
    p->zero_grad();
  }
}

GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           const std::vector<Param*>& params, double eps, double tol,
                           uint64_t seed) {
  GradCheckReport report;
  const double base = loss_fn(true);  // populates grads
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  Rng rng(seed);
  for (Param* p : params) {
    const int n = p->value.numel();
    std::vector<int> coords(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    if (n > 64) {
      rng.shuffle(coords);
      coords.resize(64);
    }
    double worst = 0.0;
    for (int c : coords) {
      const float saved = p->value[c];
      p->value[c] = static_cast<float>(saved + eps);
      const double xp = p->value[c];  // realized perturbation after f32 rounding
      const double lp = loss_fn(false);
      p->value[c] = static_cast<float>(saved - eps);
      const double xm = p->value[c];
      const double lm = loss_fn(false);
      p->value[c] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("grad_check: non-finite loss under perturbation");
      const double fd = (lp - lm) / (xp - xm);
      const double an = p->grad[c];
      const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
      worst = std::max(worst, std::abs(fd - an) / denom);
      ++report.coords_checked;
    }
    report.per_param.emplace_back(p->name, worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  report.pass = report.max_rel_err <= tol;
  for (Param* p : params) p->zero_grad();
  return report;
}

void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  const int n = t.numel();
  for (int i = 0; i < n; ++i) t[i] = rng.uniform(-bound, bound);
}

}  // namespace tvin
