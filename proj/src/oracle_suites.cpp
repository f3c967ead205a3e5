#include "tvin/oracle_suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "tvin/oracle_ref.hpp"

namespace tvin::suites {

namespace {

using oracle::DVec;

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.1, 1.1] with random sign: keeps relu inputs away from the
// kink so central differences see a single linear piece.
Tensor random_tensor_off_kink(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i)
    t[i] = (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(0.1f, 1.1f);
  return t;
}

// Ensures every pixel's top-two group channels are separated, so the max
// winner is stable under the probe step.
void enforce_group_margins(Tensor& t, int a_count, int groups, float margin) {
  const int hw = t.dim(1) * t.dim(2);
  for (int g = 0; g < groups; ++g)
    for (int p = 0; p < hw; ++p) {
      int best = 0;
      for (int a = 1; a < a_count; ++a)
        if (t[(a * groups + g) * hw + p] > t[(best * groups + g) * hw + p]) best = a;
      float second = -1e30f;
      for (int a = 0; a < a_count; ++a)
        if (a != best) second = std::max(second, t[(a * groups + g) * hw + p]);
      if (t[(best * groups + g) * hw + p] - second < margin)
        t[(best * groups + g) * hw + p] = second + margin;
    }
}

struct CaseResult {
  double worst = 0.0;
  int coords = 0;
};

// Central differences of a double-precision loss against the tape gradients
// already stored in the params. Probes every coordinate.
CaseResult fd_against(const std::vector<Param*>& params,
                      const std::function<double()>& ref_loss, double eps) {
  CaseResult res;
  for (Param* p : params) {
    for (int c = 0; c < p->value.numel(); ++c) {
      const float saved = p->value[c];
      p->value[c] = static_cast<float>(saved + eps);
      const double xp = p->value[c];
      const double lp = ref_loss();
      p->value[c] = static_cast<float>(saved - eps);
      const double xm = p->value[c];
      const double lm = ref_loss();
      p->value[c] = saved;
      const double fd = (lp - lm) / (xp - xm);
      const double an = p->grad[c];
      const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
      res.worst = std::max(res.worst, std::abs(fd - an) / denom);
      ++res.coords;
    }
  }
  return res;
}

double dot(const DVec& a, const Tensor& w) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * w[static_cast<int>(i)];
  return acc;
}

struct OpCase {
  const char* name;
  double tol;
  std::function<CaseResult(uint64_t)> run;
};

CaseResult check_conv2d(uint64_t seed) {
  Rng rng(seed);
  Param x("x", random_tensor({2, 5, 5}, rng));
  Param w("w", random_tensor({3, 2, 3, 3}, rng));
  Param b("b", random_tensor({3}, rng));
  const Tensor proj = random_tensor({3, 5, 5}, rng);
  Tape t;
  ValueId out = t.conv2d(t.leaf(x), t.leaf(w), t.leaf(b));
  t.backward(t.weighted_sum(out, proj));
  auto ref = [&] {
    const DVec bias = oracle::to_double(b.value);
    return dot(oracle::ref_conv2d(oracle::to_double(x.value), 2, 5, 5,
                                  oracle::to_double(w.value), 3, 3, &bias),
               proj);
  };
  return fd_against({&x, &w, &b}, ref, 1e-3);
}

CaseResult check_group_max(uint64_t seed) {
  Rng rng(seed);
  const int a_count = 4, groups = 2;
  Tensor v = random_tensor({a_count * groups, 4, 4}, rng);
  enforce_group_margins(v, a_count, groups, 0.05f);
  Param x("x", std::move(v));
  const Tensor proj = random_tensor({groups, 4, 4}, rng);
  Tape t;
  ValueId out = t.channel_group_max(t.leaf(x), groups);
  t.backward(t.weighted_sum(out, proj));
  auto ref = [&] {
    return dot(oracle::ref_group_max(oracle::to_double(x.value), a_count, groups, 4, 4), proj);
  };
  return fd_against({&x}, ref, 1e-3);
}

CaseResult check_linear(uint64_t seed) {
  Rng rng(seed);
  Param x("x", random_tensor({6}, rng));
  Param w("w", random_tensor({4, 6}, rng));
  Param b("b", random_tensor({4}, rng));
  const Tensor proj = random_tensor({4}, rng);
  Tape t;
  ValueId out = t.linear(t.leaf(x), t.leaf(w), t.leaf(b));
  t.backward(t.weighted_sum(out, proj));
  auto ref = [&] {
    return dot(oracle::ref_linear(oracle::to_double(x.value), oracle::to_double(w.value),
                                  oracle::to_double(b.value), 4, 6),
               proj);
  };
  return fd_against({&x, &w, &b}, ref, 1e-3);
}

CaseResult check_scalar_scale(uint64_t seed) {
  Rng rng(seed);
  Param x("x", random_tensor({2, 3, 3}, rng));
  Param s("s", random_tensor({1}, rng));
  const Tensor proj = random_tensor({2, 3, 3}, rng);
  Tape t;
  ValueId out = t.scalar_scale(t.leaf(x), t.leaf(s));
  t.backward(t.weighted_sum(out, proj));
  auto ref = [&] {
    double acc = 0.0;
    for (int i = 0; i < x.value.numel(); ++i)
      acc += static_cast<double>(s.value[0]) * x.value[i] * proj[i];
    return acc;
  };
  return fd_against({&x, &s}, ref, 1e-3);
}

CaseResult check_relu(uint64_t seed) {
  Rng rng(seed);
  Param x("x", random_tensor_off_kink({3, 4, 4}, rng));
  const Tensor proj = random_tensor({3, 4, 4}, rng);
  Tape t;
  t.backward(t.weighted_sum(t.relu(t.leaf(x)), proj));
  auto ref = [&] { return dot(oracle::ref_relu(oracle::to_double(x.value)), proj); };
  return fd_against({&x}, ref, 1e-3);
}

CaseResult check_softmax_ce(uint64_t seed) {
  Rng rng(seed);
  Param logits("logits", random_tensor({5}, rng, -2.0f, 2.0f));
  const int target = static_cast<int>(seed % 5);
  Tape t;
  t.backward(t.softmax_cross_entropy(t.leaf(logits), target));
  auto ref = [&] { return oracle::ref_softmax_ce(oracle::to_double(logits.value), target); };
  return fd_against({&logits}, ref, 1e-3);
}

CaseResult check_concat_select_stack(uint64_t seed) {
  Rng rng(seed);
  Param a("a", random_tensor({2, 3, 3}, rng));
  Param b("b", random_tensor({1, 3, 3}, rng));
  Param k1("k1", random_tensor({1, 3, 1, 1}, rng));
  Param k2("k2", random_tensor({2, 3, 1, 1}, rng));
  const Tensor proj = random_tensor({3}, rng);
  Tape t;
  ValueId cat = t.concat_channels(t.leaf(a), t.leaf(b));
  ValueId kernel = t.stack_rows({t.leaf(k1), t.leaf(k2)});
  ValueId mixed = t.conv2d(cat, kernel);
  ValueId psi = t.select_state(mixed, 1, 2, 0, 1);
  t.backward(t.weighted_sum(psi, proj));
  auto ref = [&] {
    DVec cat_d(static_cast<size_t>(3 * 9));
    for (int i = 0; i < 18; ++i) cat_d[static_cast<size_t>(i)] = a.value[i];
    for (int i = 0; i < 9; ++i) cat_d[static_cast<size_t>(18 + i)] = b.value[i];
    DVec kd(static_cast<size_t>(9));
    for (int i = 0; i < 3; ++i) kd[static_cast<size_t>(i)] = k1.value[i];
    for (int i = 0; i < 6; ++i) kd[static_cast<size_t>(3 + i)] = k2.value[i];
    const DVec mixed_d = oracle::ref_conv2d(cat_d, 3, 3, 3, kd, 3, 1, nullptr);
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) acc += mixed_d[static_cast<size_t>((c * 3 + 1) * 3 + 2)] * proj[c];
    return acc;
  };
  return fd_against({&a, &b, &k1, &k2}, ref, 1e-3);
}

CaseResult check_vin_composed(uint64_t seed) {
  VinConfig cfg;
  cfg.domain = Domain::News;
  cfg.k = 6;
  cfg.f = 3;
  cfg.hidden = 12;
  cfg.seed = seed;
  VinModel model(cfg);
  Rng rng(seed ^ 0xFEED);
  const GridMap map = generate_obstacle_map(5, 0.25, seed + 17);
  const Tensor obs = render_observation(cfg.spec(), map);
  AgentState s{rng.uniform_int(5), rng.uniform_int(5), 0};
  const int label = rng.uniform_int(cfg.spec().num_actions());

  std::vector<Param*> params{&model.conv_h_w, &model.conv_h_b, &model.conv_r_w,
                             &model.q_kernels, &model.head_w,  &model.head_b};
  auto loss_fn = [&](bool with_grad) -> double {
    if (!with_grad) return oracle::ref_vin_loss(model, obs, s, label);
    for (Param* p : params) p->zero_grad();
    Tape t;
    ValueId q = model.build_q_map(t, obs);
    ValueId ce = t.softmax_cross_entropy(model.build_logits(t, q, s), label);
    t.backward(ce);
    return t.value(ce)[0];
  };
  const GradCheckReport rep = grad_check(loss_fn, params, 1e-6, 1e-3, seed);
  return {rep.max_rel_err, rep.coords_checked};
}

CaseResult check_tvin_composed(uint64_t seed) {
  VinConfig src_cfg;
  src_cfg.domain = Domain::News;
  src_cfg.k = 4;
  src_cfg.f = 3;
  src_cfg.hidden = 8;
  src_cfg.seed = seed;
  VinModel source(src_cfg);
  VinConfig tgt_cfg = src_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.seed = seed + 1;
  TvinModel model =
      build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::Moore));
  Rng rng(seed ^ 0xBEEF);
  const GridMap map = generate_obstacle_map(5, 0.25, seed + 31);
  const Tensor obs = render_observation(tgt_cfg.spec(), map);
  AgentState s{rng.uniform_int(5), rng.uniform_int(5), 0};
  const int label = rng.uniform_int(tgt_cfg.spec().num_actions());

  std::vector<Param*> params = model.trainable_params();
  // Frozen kernels still get exact gradients through scalar_scale; include
  // theta explicitly plus everything trainable.
  auto loss_fn = [&](bool with_grad) -> double {
    if (!with_grad) return oracle::ref_tvin_loss(model, obs, s, label);
    for (Param* p : params) p->zero_grad();
    Tape t;
    ValueId q = model.build_q_map(t, obs);
    ValueId ce = t.softmax_cross_entropy(model.build_logits(t, q, s), label);
    t.backward(ce);
    return t.value(ce)[0];
  };
  const GradCheckReport rep = grad_check(loss_fn, params, 1e-6, 1e-3, seed);
  return {rep.max_rel_err, rep.coords_checked};
}

}  // namespace

SuiteReport run_gradient_suites(int seeds, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport report;
  const std::vector<OpCase> cases = {
      {"conv2d", 1e-4, check_conv2d},
      {"channel_group_max", 1e-4, check_group_max},
      {"linear", 1e-4, check_linear},
      {"scalar_scale", 1e-4, check_scalar_scale},
      {"relu", 1e-4, check_relu},
      {"softmax_cross_entropy", 1e-4, check_softmax_ce},
      {"concat+stack+select", 1e-4, check_concat_select_stack},
      {"vin_composed", 1e-3, check_vin_composed},
      {"tvin_composed", 1e-3, check_tvin_composed},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    int coords = 0;
    for (int s = 0; s < seeds; ++s) {
      const CaseResult r = c.run(static_cast<uint64_t>(s) + 1);
      worst = std::max(worst, r.worst);
      coords += r.coords;
    }
    const bool ok = worst <= c.tol;
    report.pass = report.pass && ok;
    if (worst > report.worst) {
      report.worst = worst;
      report.worst_case = c.name;
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %s  max_rel_err=%.3e (tol %.0e, %d coords, %d seeds)",
                  c.name, ok ? "ok  " : "FAIL", worst, c.tol, coords, seeds);
    report.lines.emplace_back(line);
    log << line << "\n";
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  log << "gradient suites " << (report.pass ? "passed" : "FAILED") << " in " << ms << " ms\n";
  return report;
}

SuiteReport run_vi_equivalence(int seeds, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport report;
  constexpr double kGamma = 0.99;
  constexpr int kIters = 20;
  const Domain domains[] = {Domain::News, Domain::Moore, Domain::Drive};
  const int sizes[] = {3, 5, 7};
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const DomainSpec& spec = domain_spec(domains[s % 3]);
    const int m = sizes[(s / 3) % 3];
    const double density = s % 2 == 0 ? 0.3 : 0.5;
    const GridMap map = generate_obstacle_map(m, density, static_cast<uint64_t>(s) + 100);
    VinConfig cfg;
    cfg.domain = spec.id;
    cfg.k = kIters;
    cfg.f = 3;
    cfg.hidden = 4;
    VinModel model(cfg);
    model.q_kernels.value = oracle::make_true_transition_kernels(spec, kGamma, cfg.f);
    const Tensor reward = oracle::reward_from_map(spec, map);
    const VinModel::ViOut out = model.vi_forward(reward, kIters);
    const oracle::DVec ref = oracle::ref_tabular_vi(spec, reward, kGamma, kIters);
    double diff = 0.0;
    for (int i = 0; i < out.v.numel(); ++i)
      diff = std::max(diff, std::abs(static_cast<double>(out.v[i]) - ref[static_cast<size_t>(i)]));
    if (diff > worst) {
      worst = diff;
      report.worst_case =
          std::string(domain_name(spec.id)) + "-" + std::to_string(m) + " seed " +
          std::to_string(s);
    }
  }
  report.worst = worst;
  report.pass = worst <= 1e-5;
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  char line[160];
  std::snprintf(line, sizeof(line),
                "vi_vs_tabular %s  max_abs_diff=%.3e (tol 1e-5, %d maps) in %lld ms",
                report.pass ? "ok  " : "FAIL", worst, seeds, static_cast<long long>(ms));
  report.lines.emplace_back(line);
  log << line << "\n";
  return report;
}

}  // namespace tvin::suites
