#include "tvin/vin.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tvin/checkpoint.hpp"

namespace tvin {

int default_k_for(int m) {
  if (m <= 9) return 20;
  if (m <= 15) return 30;
  return 56;
}

void VinConfig::validate() const {
  if (k < 1) throw std::invalid_argument("config: K must be >= 1");
  if (f < 1 || f % 2 == 0) throw std::invalid_argument("config: F must be odd and >= 1");
  if (hidden < 1) throw std::invalid_argument("config: hidden channels must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
}

std::vector<Param*> PlannerModel::trainable_params() {
  std::vector<Param*> out;
  for (Param* p : params())
    if (!p->frozen) out.push_back(p);
  return out;
}

PolicyOutput PlannerModel::forward(const Tensor& obs, const AgentState& s) {
  Tape t(false);
  ValueId q = build_q_map(t, obs);
  ValueId logits = build_logits(t, q, s);
  PolicyOutput out;
  out.logits = t.value(logits);
  Tape probs_tape(false);
  ValueId l = probs_tape.constant(out.logits);
  probs_tape.softmax_cross_entropy(l, 0, &out.probs);
  // Final V is the per-group max of the returned Q map.
  const Tensor& qv = t.value(q);
  const int groups = config().reward_channels();
  Tape vmax(false);
  out.value_map = vmax.value(vmax.channel_group_max(vmax.constant(qv), groups));
  return out;
}

int PlannerModel::predict_action(const Tensor& obs, const AgentState& s) {
  Tape t(false);
  ValueId q = build_q_map(t, obs);
  return predict_from_q(t.value(q), s);
}

Tensor PlannerModel::q_map_values(const Tensor& obs) {
  Tape t(false);
  return t.value(build_q_map(t, obs));
}

int PlannerModel::predict_from_q(const Tensor& q, const AgentState& s) {
  Tape t(false);
  ValueId logits = build_logits(t, t.constant(q), s);
  const Tensor& l = t.value(logits);
  int best = 0;
  for (int a = 1; a < l.numel(); ++a)
    if (l[a] > l[best]) best = a;
  return best;
}

ValueId vi_recurrence(Tape& t, ValueId r_map, ValueId q_kernel, int k, int groups,
                      ValueId* v_final) {
  if (k < 1) throw std::invalid_argument("vi_recurrence: K must be >= 1");
  const Tensor& r = t.value(r_map);
  ValueId v = t.constant(Tensor({groups, r.dim(1), r.dim(2)}));
  for (int n = 0; n < k; ++n) {
    ValueId rv = t.concat_channels(r_map, v);
    ValueId q = t.conv2d(rv, q_kernel);
    v = t.channel_group_max(q, groups);
  }
  if (v_final) *v_final = v;
  ValueId rv = t.concat_channels(r_map, v);
  return t.conv2d(rv, q_kernel);
}

Param make_meta_param(ModelKind kind, const VinConfig& cfg) {
  Tensor v({4}, {static_cast<float>(static_cast<int>(kind)),
                 static_cast<float>(static_cast<int>(cfg.domain)), static_cast<float>(cfg.k),
                 static_cast<float>(cfg.f)});
  return Param("meta", std::move(v), true);
}

MetaInfo read_meta_param(const Param& meta) {
  if (meta.value.numel() != 4) throw DataError("checkpoint: malformed meta entry");
  MetaInfo info;
  info.kind = static_cast<ModelKind>(static_cast<int>(meta.value[0]));
  info.domain = static_cast<Domain>(static_cast<int>(meta.value[1]));
  info.k = static_cast<int>(meta.value[2]);
  info.f = static_cast<int>(meta.value[3]);
  return info;
}

VinModel::VinModel(const VinConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const DomainSpec& sp = cfg_.spec();
  const int r = cfg_.reward_channels();
  const int a = sp.num_actions();
  const int obs_ch = sp.obs_channels();
  Rng rng(cfg_.seed);
  conv_h_w = Param("f_r.conv_h.weight", Tensor({cfg_.hidden, obs_ch, 3, 3}));
  init_uniform_fanin(conv_h_w.value, obs_ch * 9, rng);
  conv_h_b = Param("f_r.conv_h.bias", Tensor({cfg_.hidden}));
  conv_r_w = Param("f_r.conv_r.weight", Tensor({r, cfg_.hidden, 1, 1}));
  init_uniform_fanin(conv_r_w.value, cfg_.hidden, rng);
  q_kernels = Param("q.kernels", Tensor({a * r, 2 * r, cfg_.f, cfg_.f}));
  init_uniform_fanin(q_kernels.value, 2 * r * cfg_.f * cfg_.f, rng);
  head_w = Param("head.weight", Tensor({a, a}));
  init_uniform_fanin(head_w.value, a, rng);
  head_b = Param("head.bias", Tensor({a}));
  meta_ = make_meta_param(ModelKind::Vin, cfg_);
}

std::vector<Param*> VinModel::params() {
  return {&meta_, &conv_h_w, &conv_h_b, &conv_r_w, &q_kernels, &head_w, &head_b};
}

ValueId VinModel::build_q_map(Tape& t, const Tensor& obs) {
  ValueId h = t.conv2d(t.constant(obs), t.leaf(conv_h_w), t.leaf(conv_h_b));
  ValueId r_map = t.conv2d(t.relu(h), t.leaf(conv_r_w));
  return vi_recurrence(t, r_map, t.leaf(q_kernels), cfg_.k, cfg_.reward_channels());
}

ValueId VinModel::build_logits(Tape& t, ValueId q_map, const AgentState& s) {
  ValueId psi = t.select_state(q_map, s.i, s.j, s.o, cfg_.reward_channels());
  return t.linear(psi, t.leaf(head_w), t.leaf(head_b));
}

Tensor VinModel::reward_map(const Tensor& obs) {
  Tape t(false);
  ValueId h = t.conv2d(t.constant(obs), t.leaf(conv_h_w), t.leaf(conv_h_b));
  return t.value(t.conv2d(t.relu(h), t.leaf(conv_r_w)));
}

VinModel::ViOut VinModel::vi_forward(const Tensor& r_map, int k) {
  Tape t(false);
  ValueId v = kNoValue;
  ValueId q = vi_recurrence(t, t.constant(r_map), t.leaf(q_kernels), k,
                            cfg_.reward_channels(), &v);
  return {t.value(v), t.value(q)};
}

void VinModel::save(const std::string& path) const {
  auto* self = const_cast<VinModel*>(this);
  std::vector<const Param*> ps;
  for (Param* p : self->params()) ps.push_back(p);
  save_checkpoint(ps, path);
}

VinModel VinModel::load(const std::string& path) {
  const std::vector<Param> loaded = load_checkpoint(path);
  const Param* meta = find_param(loaded, "meta");
  if (!meta) throw DataError("checkpoint missing meta entry: " + path);
  const MetaInfo info = read_meta_param(*meta);
  if (info.kind != ModelKind::Vin) throw DataError("not a VIN checkpoint: " + path);
  VinConfig cfg;
  cfg.domain = info.domain;
  cfg.k = info.k;
  cfg.f = info.f;
  const Param* hw = find_param(loaded, "f_r.conv_h.weight");
  if (!hw) throw DataError("checkpoint missing f_r.conv_h.weight: " + path);
  cfg.hidden = hw->value.dim(0);
  VinModel model(cfg);
  for (Param* dst : model.params()) {
    const Param* src = find_param(loaded, dst->name);
    if (!src) throw DataError("checkpoint missing param " + dst->name + ": " + path);
    if (src->value.shape() != dst->value.shape())
      throw DataError("checkpoint shape mismatch for " + dst->name + ": " + path);
    dst->value = src->value;
    dst->zero_grad();
  }
  return model;
}

Tensor attend(const Tensor& q, const AgentState& s, int groups) {
  Tape t(false);
  return t.value(t.select_state(t.constant(q), s.i, s.j, s.o, groups));
}

namespace {

struct SampleGroups {
  // Sample indices grouped by map, preserving dataset order inside each map.
  std::vector<std::vector<int>> by_map;
  std::vector<int> maps_with_samples;
};

SampleGroups group_samples(const Dataset& ds) {
  SampleGroups g;
  g.by_map.resize(ds.maps.size());
  for (size_t i = 0; i < ds.samples.size(); ++i)
    g.by_map[ds.samples[i].map_ref].push_back(static_cast<int>(i));
  for (size_t m = 0; m < g.by_map.size(); ++m)
    if (!g.by_map[m].empty()) g.maps_with_samples.push_back(static_cast<int>(m));
  return g;
}

}  // namespace

EpochStats train_epoch(PlannerModel& model, const Dataset& ds, const VinConfig& cfg,
                       int epoch_index) {
  if (ds.samples.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(epoch_index) + 1);
  const DomainSpec& sp = model.spec();

  std::vector<Tensor> obs_cache(ds.maps.size());
  auto obs_of = [&](int mi) -> const Tensor& {
    Tensor& o = obs_cache[static_cast<size_t>(mi)];
    if (o.numel() == 0) o = render_observation(sp, ds.maps[static_cast<size_t>(mi)]);
    return o;
  };

  // Batches are lists of (map, its sample indices). Map mode batches whole
  // maps; sample mode batches a shuffled sample list regrouped per map so the
  // VI forward is still shared within the batch.
  using MapChunk = std::pair<int, std::vector<int>>;
  std::vector<std::vector<MapChunk>> batches;
  const SampleGroups groups = group_samples(ds);
  if (cfg.batch_mode == VinConfig::BatchMode::Map) {
    std::vector<int> order = groups.maps_with_samples;
    rng.shuffle(order);
    std::vector<MapChunk> cur;
    int count = 0;
    for (int mi : order) {
      cur.emplace_back(mi, groups.by_map[static_cast<size_t>(mi)]);
      count += static_cast<int>(cur.back().second.size());
      if (count >= cfg.batch_size) {
        batches.push_back(std::move(cur));
        cur.clear();
        count = 0;
      }
    }
    if (!cur.empty()) batches.push_back(std::move(cur));
  } else {
    std::vector<int> order(ds.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), off + static_cast<size_t>(cfg.batch_size));
      std::vector<MapChunk> cur;
      for (size_t i = off; i < end; ++i) {
        const int si = order[i];
        const int mi = static_cast<int>(ds.samples[static_cast<size_t>(si)].map_ref);
        auto it = std::find_if(cur.begin(), cur.end(),
                               [mi](const MapChunk& c) { return c.first == mi; });
        if (it == cur.end()) {
          cur.emplace_back(mi, std::vector<int>{si});
        } else {
          it->second.push_back(si);
        }
      }
      batches.push_back(std::move(cur));
    }
  }

  const std::vector<Param*> trainable = model.trainable_params();
  double loss_sum = 0.0;
  int64_t correct = 0;
  int64_t seen = 0;
  GradSink sink;
  for (const auto& batch : batches) {
    int batch_n = 0;
    for (const auto& [mi, sample_ids] : batch) batch_n += static_cast<int>(sample_ids.size());
    sink.clear();
    for (const auto& [mi, sample_ids] : batch) {
      Tape tape;
      ValueId q_map = model.build_q_map(tape, obs_of(mi));
      ValueId loss_acc = kNoValue;
      for (int si : sample_ids) {
        const Sample& s = ds.samples[static_cast<size_t>(si)];
        ValueId logits = model.build_logits(tape, q_map, s.state);
        ValueId ce = tape.softmax_cross_entropy(logits, s.expert_action);
        const Tensor& l = tape.value(logits);
        int best = 0;
        for (int a = 1; a < l.numel(); ++a)
          if (l[a] > l[best]) best = a;
        correct += best == s.expert_action ? 1 : 0;
        loss_sum += tape.value(ce)[0];
        loss_acc = loss_acc == kNoValue ? ce : tape.add(loss_acc, ce);
      }
      seen += static_cast<int64_t>(sample_ids.size());
      const float map_loss = tape.value(loss_acc)[0];
      if (!std::isfinite(map_loss))
        throw NumericError("train_epoch: non-finite loss at epoch " +
                           std::to_string(epoch_index) + ", map " + std::to_string(mi));
      tape.backward(loss_acc, 1.0f / static_cast<float>(batch_n), &sink);
    }
    sink.flush();
    sgd_step(trainable, cfg.lr);
  }

  EpochStats stats;
  stats.mean_loss = loss_sum / static_cast<double>(seen);
  stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  stats.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return stats;
}

std::vector<EpochStats> train_model(PlannerModel& model, const Dataset& ds, const VinConfig& cfg,
                                    const std::function<void(int, const EpochStats&)>& on_epoch) {
  std::vector<EpochStats> history;
  for (int e = 0; e < cfg.epochs; ++e) {
    history.push_back(train_epoch(model, ds, cfg, e));
    if (on_epoch) on_epoch(e, history.back());
  }
  return history;
}

}  // namespace tvin
