#include "tvin/transfer.hpp"

#include <cstring>
#include <set>

#include "tvin/checkpoint.hpp"

namespace tvin {

void ActionMapping::validate(const DomainSpec& src, const DomainSpec& tgt) const {
  std::set<int> seen_src, seen_tgt;
  for (const auto& [sa, ta] : pairs) {
    if (sa < 0 || sa >= src.num_actions())
      throw std::invalid_argument("mapping: source action index out of range");
    if (ta < 0 || ta >= tgt.num_actions())
      throw std::invalid_argument("mapping: target action index out of range");
    if (!seen_src.insert(sa).second)
      throw std::invalid_argument("mapping: source action " + src.actions[static_cast<size_t>(sa)] +
                                  " mapped twice");
    if (!seen_tgt.insert(ta).second)
      throw std::invalid_argument("mapping: target action " + tgt.actions[static_cast<size_t>(ta)] +
                                  " mapped twice");
  }
}

int ActionMapping::source_of(int target_action) const {
  for (const auto& [sa, ta] : pairs)
    if (ta == target_action) return sa;
  return -1;
}

ActionMapping parse_mapping(const DomainSpec& src, const DomainSpec& tgt,
                            const std::string& text) {
  ActionMapping mapping;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string pair = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (pair.empty()) continue;
    const size_t eq = pair.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("mapping: expected source=target, got '" + pair + "'");
    const auto sa = parse_action(src, pair.substr(0, eq));
    const auto ta = parse_action(tgt, pair.substr(eq + 1));
    if (!sa)
      throw std::invalid_argument("mapping: unknown source action '" + pair.substr(0, eq) + "'");
    if (!ta)
      throw std::invalid_argument("mapping: unknown target action '" + pair.substr(eq + 1) + "'");
    mapping.pairs.emplace_back(*sa, *ta);
  }
  mapping.validate(src, tgt);
  return mapping;
}

ActionMapping default_mapping(Domain src, Domain tgt) {
  const DomainSpec& s = domain_spec(src);
  const DomainSpec& t = domain_spec(tgt);
  auto make = [&](const std::string& text) { return parse_mapping(s, t, text); };
  if ((src == Domain::News && tgt == Domain::Moore) ||
      (src == Domain::Moore && tgt == Domain::News))
    return make("East=East,West=West,North=North,South=South");
  if (src == Domain::News && tgt == Domain::Drive)
    return make("North=MoveForward,East=TurnLeft,West=TurnRight");
  if (src == Domain::Drive && tgt == Domain::News)
    return make("MoveForward=North,TurnLeft=East,TurnRight=West");
  if (src == tgt) {
    ActionMapping mapping;
    for (int a = 0; a < s.num_actions(); ++a) mapping.pairs.emplace_back(a, a);
    return mapping;
  }
  throw std::invalid_argument("no default action mapping for this domain pair");
}

Tensor project_kernel(const Tensor& src, int r_t, int f_t) {
  if (src.rank() != 4 || src.dim(1) != 2 * src.dim(0))
    throw std::invalid_argument("project_kernel: source is not an action kernel");
  const int r_s = src.dim(0);
  const int f_s = src.dim(2);
  if (f_s != f_t)
    throw std::invalid_argument(
        "transfer-config error: kernel size mismatch (source F=" + std::to_string(f_s) +
        ", target F=" + std::to_string(f_t) + "); train the source with a matching F");
  if (r_s == r_t) return src;
  const int ff = f_s * f_s;
  if (r_t == 1) {
    // Collapse orientations: mean over the r_s x r_s output/input block,
    // keeping R inputs paired with R and V inputs with V.
    Tensor out({1, 2, f_s, f_s});
    for (int b = 0; b < 2; ++b)
      for (int y = 0; y < f_s; ++y)
        for (int x = 0; x < f_s; ++x) {
          double acc = 0.0;
          for (int oo = 0; oo < r_s; ++oo)
            for (int oi = 0; oi < r_s; ++oi) acc += src.at(oo, b * r_s + oi, y, x);
          out.at(0, b, y, x) = static_cast<float>(acc / (r_s * r_s));
        }
    return out;
  }
  if (r_s == 1) {
    Tensor out({r_t, 2 * r_t, f_t, f_t});
    for (int o = 0; o < r_t; ++o)
      for (int b = 0; b < 2; ++b)
        for (int i = 0; i < ff; ++i)
          out[(o * 2 * r_t + b * r_t + o) * ff + i] = src[b * ff + i];
    return out;
  }
  throw std::invalid_argument("project_kernel: unsupported orientation counts " +
                              std::to_string(r_s) + " -> " + std::to_string(r_t));
}

Tensor project_reward_head(const Tensor& src, int r_t) {
  const int r_s = src.dim(0);
  if (r_s == r_t) return src;
  const int hidden = src.dim(1);
  Tensor out({r_t, hidden, 1, 1});
  if (r_t == 1) {
    for (int h = 0; h < hidden; ++h) {
      double acc = 0.0;
      for (int o = 0; o < r_s; ++o) acc += src[o * hidden + h];
      out[h] = static_cast<float>(acc / r_s);
    }
    return out;
  }
  if (r_s == 1) {
    for (int o = 0; o < r_t; ++o)
      for (int h = 0; h < hidden; ++h) out[o * hidden + h] = src[h];
    return out;
  }
  throw std::invalid_argument("project_reward_head: unsupported orientation counts");
}

namespace {

// Rows of the block kernel belonging to one action: (r, 2r, F, F).
Tensor action_slice(const Tensor& block, int action, int r) {
  const int per = r * block.dim(1) * block.dim(2) * block.dim(3);
  Tensor out({r, block.dim(1), block.dim(2), block.dim(3)});
  std::memcpy(out.data(), block.data() + action * per, sizeof(float) * static_cast<size_t>(per));
  return out;
}

void write_action_slice(Tensor& block, int action, int r, const Tensor& rows) {
  const int per = r * block.dim(1) * block.dim(2) * block.dim(3);
  std::memcpy(block.data() + action * per, rows.data(), sizeof(float) * static_cast<size_t>(per));
}

Tensor identity_encoder(int channels) {
  Tensor w({channels, channels, 1, 1});
  for (int c = 0; c < channels; ++c) w.at(c, c, 0, 0) = 1.0f;
  return w;
}

}  // namespace

std::vector<Param*> TvinModel::params() {
  std::vector<Param*> out{&meta_, &encoder_w, &encoder_b, &conv_h_w, &conv_h_b, &conv_r_w};
  for (Param& p : q_pre) out.push_back(&p);
  for (Param& p : theta) out.push_back(&p);
  for (Param& p : q_new) out.push_back(&p);
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

ValueId TvinModel::build_q_map(Tape& t, const Tensor& obs) {
  ValueId enc = t.conv2d(t.constant(obs), t.leaf(encoder_w), t.leaf(encoder_b));
  ValueId h = t.conv2d(enc, t.leaf(conv_h_w), t.leaf(conv_h_b));
  ValueId r_map = t.conv2d(t.relu(h), t.leaf(conv_r_w));
  // Effective per-action kernels: theta_t * frozen transferred kernel, or the
  // fresh kernel for unmapped actions, stacked in target action order.
  std::vector<ValueId> blocks;
  const int a_count = spec().num_actions();
  for (int a = 0; a < a_count; ++a) {
    const int slot = slot_of_action_[static_cast<size_t>(a)];
    if (is_transferred_[static_cast<size_t>(a)])
      blocks.push_back(t.scalar_scale(t.leaf(q_pre[static_cast<size_t>(slot)]),
                                      t.leaf(theta[static_cast<size_t>(slot)])));
    else
      blocks.push_back(t.leaf(q_new[static_cast<size_t>(slot)]));
  }
  ValueId kernel = t.stack_rows(blocks);
  return vi_recurrence(t, r_map, kernel, cfg_.k, cfg_.reward_channels());
}

ValueId TvinModel::build_logits(Tape& t, ValueId q_map, const AgentState& s) {
  ValueId psi = t.select_state(q_map, s.i, s.j, s.o, cfg_.reward_channels());
  return t.linear(psi, t.leaf(head_w), t.leaf(head_b));
}

std::vector<float> TvinModel::theta_values() const {
  std::vector<float> out;
  for (const Param& p : theta) out.push_back(p.value[0]);
  return out;
}

TvinModel build_tvin(const VinModel& source, const VinConfig& target_cfg,
                     const ActionMapping& mapping, const TransferOptions& opts) {
  const DomainSpec& src_spec = source.config().spec();
  const DomainSpec& tgt_spec = target_cfg.spec();
  mapping.validate(src_spec, tgt_spec);
  if (target_cfg.f != source.config().f)
    throw std::invalid_argument(
        "transfer-config error: kernel size mismatch (source F=" +
        std::to_string(source.config().f) + ", target F=" + std::to_string(target_cfg.f) + ")");

  TvinModel model;
  model.cfg_ = target_cfg;
  model.cfg_.hidden = source.config().hidden;
  model.cfg_.validate();
  model.meta_ = make_meta_param(ModelKind::Tvin, model.cfg_);

  const int r_s = src_spec.orientation_count;
  const int r_t = tgt_spec.orientation_count;
  const int src_obs = src_spec.obs_channels();
  const int tgt_obs = tgt_spec.obs_channels();

  // Fresh target-side init; shares the seed with build_vin_init so the two
  // constructions start from the same kernels.
  VinModel base(model.cfg_);

  if (src_obs == tgt_obs) {
    model.encoder_w = Param("encoder.weight", identity_encoder(src_obs));
  } else {
    Rng rng(target_cfg.seed ^ 0xE4C0DEull);
    Tensor w({src_obs, tgt_obs, 1, 1});
    init_uniform_fanin(w, tgt_obs, rng);
    model.encoder_w = Param("encoder.weight", std::move(w));
  }
  model.encoder_b = Param("encoder.bias", Tensor({src_obs}));

  model.conv_h_w = Param("f_r.conv_h.weight", source.conv_h_w.value, opts.freeze_reward);
  model.conv_h_b = Param("f_r.conv_h.bias", source.conv_h_b.value, opts.freeze_reward);
  model.conv_r_w = Param("f_r.conv_r.weight", project_reward_head(source.conv_r_w.value, r_t),
                         opts.freeze_reward);

  model.slot_of_action_.assign(static_cast<size_t>(tgt_spec.num_actions()), -1);
  model.is_transferred_.assign(static_cast<size_t>(tgt_spec.num_actions()), false);
  for (int a = 0; a < tgt_spec.num_actions(); ++a) {
    const std::string& name = tgt_spec.actions[static_cast<size_t>(a)];
    const int sa = mapping.source_of(a);
    if (sa >= 0) {
      Tensor projected =
          project_kernel(action_slice(source.q_kernels.value, sa, r_s), r_t, target_cfg.f);
      model.slot_of_action_[static_cast<size_t>(a)] = static_cast<int>(model.q_pre.size());
      model.is_transferred_[static_cast<size_t>(a)] = true;
      model.transferred_.push_back(a);
      model.q_pre.emplace_back("q.pre." + name, std::move(projected), true);
      model.theta.emplace_back("theta_t." + name, Tensor::scalar(opts.theta_init));
    } else {
      model.slot_of_action_[static_cast<size_t>(a)] = static_cast<int>(model.q_new.size());
      model.q_new.emplace_back("q.new." + name, action_slice(base.q_kernels.value, a, r_t));
    }
  }
  model.head_w = Param("head.weight", base.head_w.value);
  model.head_b = Param("head.bias", base.head_b.value);
  return model;
}

VinModel build_vin_init(const VinModel& source, const VinConfig& target_cfg,
                        const ActionMapping& mapping) {
  const DomainSpec& src_spec = source.config().spec();
  const DomainSpec& tgt_spec = target_cfg.spec();
  mapping.validate(src_spec, tgt_spec);
  VinConfig cfg = target_cfg;
  cfg.hidden = source.config().hidden;
  VinModel model(cfg);
  const int r_s = src_spec.orientation_count;
  const int r_t = tgt_spec.orientation_count;
  if (src_spec.obs_channels() == tgt_spec.obs_channels()) {
    model.conv_h_w.value = source.conv_h_w.value;
    model.conv_h_b.value = source.conv_h_b.value;
  }
  model.conv_r_w.value = project_reward_head(source.conv_r_w.value, r_t);
  for (const auto& [sa, ta] : mapping.pairs) {
    Tensor projected =
        project_kernel(action_slice(source.q_kernels.value, sa, r_s), r_t, target_cfg.f);
    write_action_slice(model.q_kernels.value, ta, r_t, projected);
  }
  return model;
}

void TvinModel::save(const std::string& path) const {
  auto* self = const_cast<TvinModel*>(this);
  std::vector<const Param*> ps;
  for (Param* p : self->params()) ps.push_back(p);
  save_checkpoint(ps, path);
}

TvinModel TvinModel::load(const std::string& path) {
  const std::vector<Param> loaded = load_checkpoint(path);
  const Param* meta = find_param(loaded, "meta");
  if (!meta) throw DataError("checkpoint missing meta entry: " + path);
  const MetaInfo info = read_meta_param(*meta);
  if (info.kind != ModelKind::Tvin) throw DataError("not a TVIN checkpoint: " + path);

  TvinModel model;
  model.cfg_.domain = info.domain;
  model.cfg_.k = info.k;
  model.cfg_.f = info.f;
  const Param* hw = find_param(loaded, "f_r.conv_h.weight");
  if (!hw) throw DataError("checkpoint missing f_r.conv_h.weight: " + path);
  model.cfg_.hidden = hw->value.dim(0);
  model.meta_ = *meta;

  auto take = [&](const std::string& name) -> const Param& {
    const Param* p = find_param(loaded, name);
    if (!p) throw DataError("checkpoint missing param " + name + ": " + path);
    return *p;
  };
  auto copy = [&](Param& dst, const std::string& name) {
    const Param& src = take(name);
    dst = Param(name, src.value, src.frozen);
  };
  copy(model.encoder_w, "encoder.weight");
  copy(model.encoder_b, "encoder.bias");
  copy(model.conv_h_w, "f_r.conv_h.weight");
  copy(model.conv_h_b, "f_r.conv_h.bias");
  copy(model.conv_r_w, "f_r.conv_r.weight");
  copy(model.head_w, "head.weight");
  copy(model.head_b, "head.bias");

  const DomainSpec& tgt_spec = model.cfg_.spec();
  model.slot_of_action_.assign(static_cast<size_t>(tgt_spec.num_actions()), -1);
  model.is_transferred_.assign(static_cast<size_t>(tgt_spec.num_actions()), false);
  for (int a = 0; a < tgt_spec.num_actions(); ++a) {
    const std::string& name = tgt_spec.actions[static_cast<size_t>(a)];
    if (const Param* pre = find_param(loaded, "q.pre." + name)) {
      model.slot_of_action_[static_cast<size_t>(a)] = static_cast<int>(model.q_pre.size());
      model.is_transferred_[static_cast<size_t>(a)] = true;
      model.transferred_.push_back(a);
      model.q_pre.emplace_back("q.pre." + name, pre->value, pre->frozen);
      const Param& th = take("theta_t." + name);
      model.theta.emplace_back("theta_t." + name, th.value, th.frozen);
    } else {
      const Param& nw = take("q.new." + name);
      model.slot_of_action_[static_cast<size_t>(a)] = static_cast<int>(model.q_new.size());
      model.q_new.emplace_back("q.new." + name, nw.value, nw.frozen);
    }
  }
  return model;
}

TransferReport train_tvin(TvinModel& model, const Dataset& ds, const VinConfig& cfg,
                          const std::function<void(int, const EpochStats&)>& on_epoch) {
  TransferReport report;
  const DomainSpec& tgt_spec = model.spec();
  for (int a : model.transferred_actions())
    report.action_names.push_back(tgt_spec.actions[static_cast<size_t>(a)]);

  std::vector<std::pair<Param*, std::vector<float>>> frozen_snapshot;
  for (Param* p : model.params()) {
    const int n = p->value.numel();
    if (p->frozen) {
      std::vector<float> bytes(p->value.data(), p->value.data() + n);
      frozen_snapshot.emplace_back(p, std::move(bytes));
      report.frozen_scalars += n;
    } else {
      report.trainable_scalars += n;
    }
  }

  report.theta_by_epoch.push_back(model.theta_values());
  for (int e = 0; e < cfg.epochs; ++e) {
    report.epochs.push_back(train_epoch(model, ds, cfg, e));
    for (const auto& [p, bytes] : frozen_snapshot) {
      if (std::memcmp(p->value.data(), bytes.data(), bytes.size() * sizeof(float)) != 0)
        throw std::logic_error("train_tvin: frozen param " + p->name + " drifted at epoch " +
                               std::to_string(e));
    }
    report.theta_by_epoch.push_back(model.theta_values());
    if (on_epoch) on_epoch(e, report.epochs.back());
  }
  return report;
}

}  // namespace tvin
