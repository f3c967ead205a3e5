#include "tvin/oracle_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tvin::oracle {

DVec to_double(const Tensor& t) {
  DVec out(static_cast<size_t>(t.numel()));
  for (int i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t[i];
  return out;
}

DVec ref_conv2d(const DVec& x, int c_in, int h, int w, const DVec& kernel, int c_out, int f,
                const DVec* bias) {
  const int pad = (f - 1) / 2;
  DVec out(static_cast<size_t>(c_out * h * w), 0.0);
  for (int o = 0; o < c_out; ++o)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = bias ? (*bias)[static_cast<size_t>(o)] : 0.0;
        for (int c = 0; c < c_in; ++c)
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) {
              const int sy = y + dy - pad, sx = xx + dx - pad;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += kernel[static_cast<size_t>(((o * c_in + c) * f + dy) * f + dx)] *
                     x[static_cast<size_t>((c * h + sy) * w + sx)];
            }
        out[static_cast<size_t>((o * h + y) * w + xx)] = acc;
      }
  return out;
}

DVec ref_relu(const DVec& x) {
  DVec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

DVec ref_group_max(const DVec& x, int a_count, int groups, int h, int w) {
  const int hw = h * w;
  DVec out(static_cast<size_t>(groups * hw));
  for (int g = 0; g < groups; ++g)
    for (int p = 0; p < hw; ++p) {
      double best = x[static_cast<size_t>(g * hw + p)];
      for (int a = 1; a < a_count; ++a)
        best = std::max(best, x[static_cast<size_t>((a * groups + g) * hw + p)]);
      out[static_cast<size_t>(g * hw + p)] = best;
    }
  return out;
}

DVec ref_linear(const DVec& x, const DVec& weight, const DVec& bias, int d_out, int d_in) {
  DVec out(static_cast<size_t>(d_out));
  for (int o = 0; o < d_out; ++o) {
    double acc = bias[static_cast<size_t>(o)];
    for (int i = 0; i < d_in; ++i)
      acc += weight[static_cast<size_t>(o * d_in + i)] * x[static_cast<size_t>(i)];
    out[static_cast<size_t>(o)] = acc;
  }
  return out;
}

double ref_softmax_ce(const DVec& logits, int target) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return m + std::log(sum) - logits[static_cast<size_t>(target)];
}

namespace {

// Shared VI + attention + head, all in double.
double planner_loss(const DVec& r_map, int r, int h, int w, const DVec& q_kernel, int a_count,
                    int f, int k, const AgentState& s, const DVec& head_w, const DVec& head_b,
                    int label) {
  DVec v(static_cast<size_t>(r * h * w), 0.0);
  DVec rv(static_cast<size_t>(2 * r * h * w));
  auto stack_rv = [&] {
    std::copy(r_map.begin(), r_map.end(), rv.begin());
    std::copy(v.begin(), v.end(), rv.begin() + r * h * w);
  };
  DVec q;
  for (int n = 0; n <= k; ++n) {
    stack_rv();
    q = ref_conv2d(rv, 2 * r, h, w, q_kernel, a_count * r, f, nullptr);
    if (n < k) v = ref_group_max(q, a_count, r, h, w);
  }
  DVec psi(static_cast<size_t>(a_count));
  for (int a = 0; a < a_count; ++a)
    psi[static_cast<size_t>(a)] = q[static_cast<size_t>(((a * r + s.o) * h + s.i) * w + s.j)];
  const DVec logits = ref_linear(psi, head_w, head_b, a_count, a_count);
  return ref_softmax_ce(logits, label);
}

}  // namespace

double ref_vin_loss(VinModel& model, const Tensor& obs, const AgentState& s, int label) {
  const VinConfig& cfg = model.config();
  const DomainSpec& spec = cfg.spec();
  const int m = obs.dim(1);
  const int r = cfg.reward_channels();
  const DVec conv_h_b = to_double(model.conv_h_b.value);
  DVec h = ref_conv2d(to_double(obs), obs.dim(0), m, m, to_double(model.conv_h_w.value),
                      cfg.hidden, 3, &conv_h_b);
  h = ref_relu(h);
  const DVec r_map =
      ref_conv2d(h, cfg.hidden, m, m, to_double(model.conv_r_w.value), r, 1, nullptr);
  return planner_loss(r_map, r, m, m, to_double(model.q_kernels.value), spec.num_actions(),
                      cfg.f, cfg.k, s, to_double(model.head_w.value),
                      to_double(model.head_b.value), label);
}

double ref_tvin_loss(TvinModel& model, const Tensor& obs, const AgentState& s, int label) {
  const VinConfig& cfg = model.config();
  const DomainSpec& spec = cfg.spec();
  const int m = obs.dim(1);
  const int r = cfg.reward_channels();
  const int a_count = spec.num_actions();
  const DVec enc_b = to_double(model.encoder_b.value);
  DVec enc = ref_conv2d(to_double(obs), obs.dim(0), m, m, to_double(model.encoder_w.value),
                        model.encoder_w.value.dim(0), 1, &enc_b);
  const DVec conv_h_b = to_double(model.conv_h_b.value);
  DVec h = ref_conv2d(enc, model.encoder_w.value.dim(0), m, m, to_double(model.conv_h_w.value),
                      cfg.hidden, 3, &conv_h_b);
  h = ref_relu(h);
  const DVec r_map =
      ref_conv2d(h, cfg.hidden, m, m, to_double(model.conv_r_w.value), r, 1, nullptr);

  // Effective kernel block in target action order.
  const int per = r * 2 * r * cfg.f * cfg.f;
  DVec kernel(static_cast<size_t>(a_count * per));
  int pre_i = 0, new_i = 0;
  for (int a = 0; a < a_count; ++a) {
    const bool transferred =
        std::find(model.transferred_actions().begin(), model.transferred_actions().end(), a) !=
        model.transferred_actions().end();
    if (transferred) {
      const double theta = model.theta[static_cast<size_t>(pre_i)].value[0];
      const Tensor& pre = model.q_pre[static_cast<size_t>(pre_i)].value;
      for (int i = 0; i < per; ++i)
        kernel[static_cast<size_t>(a * per + i)] = theta * static_cast<double>(pre[i]);
      ++pre_i;
    } else {
      const Tensor& fresh = model.q_new[static_cast<size_t>(new_i)].value;
      for (int i = 0; i < per; ++i)
        kernel[static_cast<size_t>(a * per + i)] = fresh[i];
      ++new_i;
    }
  }
  return planner_loss(r_map, r, m, m, kernel, a_count, cfg.f, cfg.k, s,
                      to_double(model.head_w.value), to_double(model.head_b.value), label);
}

Tensor make_true_transition_kernels(const DomainSpec& spec, double gamma, int f) {
  if (f < 3) throw std::invalid_argument("oracle kernels need F >= 3");
  const int r = spec.orientation_count;
  const int a_count = spec.num_actions();
  const int pad = (f - 1) / 2;
  Tensor kernel({a_count * r, 2 * r, f, f});
  // Displacements per (action, orientation): same offsets step() uses.
  constexpr int off[8][2] = {{0, 1}, {0, -1}, {-1, 0}, {1, 0},
                             {-1, 1}, {-1, -1}, {1, 1}, {1, -1}};
  constexpr int facing[4][2] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};
  for (int a = 0; a < a_count; ++a)
    for (int o = 0; o < r; ++o) {
      const int out_ch = a * r + o;
      kernel.at(out_ch, o, pad, pad) = 1.0f;  // reward tap, own orientation
      int vi = o, di = 0, dj = 0;
      if (spec.id == Domain::Drive) {
        if (a == 0) {
          di = facing[o][0];
          dj = facing[o][1];
        } else if (a == 1) {
          vi = (o + 3) % 4;  // value of the post-turn orientation
        } else {
          vi = (o + 1) % 4;
        }
      } else {
        di = off[a][0];
        dj = off[a][1];
      }
      kernel.at(out_ch, r + vi, pad + di, pad + dj) = static_cast<float>(gamma);
    }
  return kernel;
}

Tensor reward_from_map(const DomainSpec& spec, const GridMap& map) {
  const int r = spec.orientation_count;
  Tensor reward({r, map.m, map.m});
  for (int o = 0; o < r; ++o)
    for (int i = 0; i < map.m; ++i)
      for (int j = 0; j < map.m; ++j) {
        float v = 0.0f;
        if (i == map.goal_i && j == map.goal_j)
          v = 0.1f;
        else if (map.obstacle(i, j))
          v = -0.05f;
        reward.at(o, i, j) = v;
      }
  return reward;
}

DVec ref_tabular_vi(const DomainSpec& spec, const Tensor& reward, double gamma, int k) {
  const int r = spec.orientation_count;
  const int m = reward.dim(1);
  const int a_count = spec.num_actions();
  constexpr int off[8][2] = {{0, 1}, {0, -1}, {-1, 0}, {1, 0},
                             {-1, 1}, {-1, -1}, {1, 1}, {1, -1}};
  constexpr int facing[4][2] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};
  DVec v(static_cast<size_t>(r * m * m), 0.0);
  DVec next(v.size());
  auto value_at = [&](int o, int i, int j) -> double {
    if (i < 0 || i >= m || j < 0 || j >= m) return 0.0;  // matches zero padding
    return v[static_cast<size_t>((o * m + i) * m + j)];
  };
  for (int n = 0; n < k; ++n) {
    for (int o = 0; o < r; ++o)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          double best = -std::numeric_limits<double>::infinity();
          for (int a = 0; a < a_count; ++a) {
            int vi = o, di = 0, dj = 0;
            if (spec.id == Domain::Drive) {
              if (a == 0) {
                di = facing[o][0];
                dj = facing[o][1];
              } else if (a == 1) {
                vi = (o + 3) % 4;
              } else {
                vi = (o + 1) % 4;
              }
            } else {
              di = off[a][0];
              dj = off[a][1];
            }
            const double q = reward.at(o, i, j) + gamma * value_at(vi, i + di, j + dj);
            best = std::max(best, q);
          }
          next[static_cast<size_t>((o * m + i) * m + j)] = best;
        }
    std::swap(v, next);
  }
  return v;
}

}  // namespace tvin::oracle
