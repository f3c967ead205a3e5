#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "tvin/oracle_ref.hpp"
#include "tvin/transfer.hpp"

using namespace tvin;

namespace {

Dataset small_dataset(Domain d, int maps, int m, uint64_t seed) {
  MapGenConfig gen;
  gen.m = m;
  gen.density = 0.25;
  return sample_dataset(domain_spec(d), maps, 3, gen, seed);
}

VinModel small_source(uint64_t seed, int k = 6, int hidden = 8) {
  VinConfig cfg;
  cfg.domain = Domain::News;
  cfg.k = k;
  cfg.hidden = hidden;
  cfg.seed = seed;
  return VinModel(cfg);
}

}  // namespace

TEST_CASE("mapping validation rejects non-injective or out-of-range pairs") {
  const DomainSpec& news = domain_spec(Domain::News);
  const DomainSpec& moore = domain_spec(Domain::Moore);
  ActionMapping dup_src{{{0, 0}, {0, 1}}};
  CHECK_THROWS_AS(dup_src.validate(news, moore), std::invalid_argument);
  ActionMapping dup_tgt{{{0, 3}, {1, 3}}};
  CHECK_THROWS_AS(dup_tgt.validate(news, moore), std::invalid_argument);
  ActionMapping oor{{{4, 0}}};
  CHECK_THROWS_AS(oor.validate(news, moore), std::invalid_argument);
  ActionMapping oor2{{{0, 8}}};
  CHECK_THROWS_AS(oor2.validate(news, moore), std::invalid_argument);

  // Property-style: random mappings validate exactly when they should.
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ActionMapping mapping;
    const int n = rng.uniform_int(5);
    for (int i = 0; i < n; ++i)
      mapping.pairs.emplace_back(rng.uniform_int(6) - 1, rng.uniform_int(10) - 1);
    bool expect_ok = true;
    std::vector<int> ss, ts;
    for (auto [sa, ta] : mapping.pairs) {
      if (sa < 0 || sa >= 4 || ta < 0 || ta >= 8) expect_ok = false;
      if (std::find(ss.begin(), ss.end(), sa) != ss.end()) expect_ok = false;
      if (std::find(ts.begin(), ts.end(), ta) != ts.end()) expect_ok = false;
      ss.push_back(sa);
      ts.push_back(ta);
    }
    if (expect_ok)
      CHECK_NOTHROW(mapping.validate(news, moore));
    else
      CHECK_THROWS_AS(mapping.validate(news, moore), std::invalid_argument);
  }
}

TEST_CASE("mapping text parsing with names and aliases") {
  const DomainSpec& news = domain_spec(Domain::News);
  const DomainSpec& moore = domain_spec(Domain::Moore);
  const ActionMapping m1 = parse_mapping(news, moore, "North=North,S=S");
  CHECK(m1.pairs.size() == 2);
  CHECK(m1.pairs[0] == std::pair<int, int>{2, 2});
  CHECK(m1.pairs[1] == std::pair<int, int>{3, 3});
  const DomainSpec& drive = domain_spec(Domain::Drive);
  const ActionMapping m2 = parse_mapping(news, drive, "North=MoveForward,East=TurnLeft");
  CHECK(m2.pairs[0] == std::pair<int, int>{2, 0});
  CHECK(m2.pairs[1] == std::pair<int, int>{0, 1});
  CHECK_THROWS_AS(parse_mapping(news, moore, "North:North"), std::invalid_argument);
  CHECK_THROWS_AS(parse_mapping(news, moore, "Up=North"), std::invalid_argument);

  const ActionMapping def = default_mapping(Domain::News, Domain::Moore);
  CHECK(def.pairs.size() == 4);
  CHECK(default_mapping(Domain::Drive, Domain::News).pairs.size() == 3);
}

TEST_CASE("project_kernel copies, averages, and broadcasts") {
  Rng rng(5);
  Tensor same({1, 2, 3, 3});
  for (int i = 0; i < same.numel(); ++i) same[i] = rng.uniform(-1, 1);
  const Tensor copy = project_kernel(same, 1, 3);
  CHECK(std::memcmp(copy.data(), same.data(), sizeof(float) * 18) == 0);

  // 4 -> 1 with identical orientation slices collapses to that slice.
  Tensor slice({1, 2, 3, 3});
  for (int i = 0; i < 18; ++i) slice[i] = rng.uniform(-1, 1);
  Tensor big({4, 8, 3, 3});
  for (int oo = 0; oo < 4; ++oo)
    for (int b = 0; b < 2; ++b)
      for (int oi = 0; oi < 4; ++oi)
        for (int p = 0; p < 9; ++p)
          big[((oo * 8) + b * 4 + oi) * 9 + p] = slice[(b * 9) + p];
  const Tensor collapsed = project_kernel(big, 1, 3);
  for (int i = 0; i < 18; ++i)
    CHECK(collapsed[i] == doctest::Approx(slice[i]).epsilon(1e-6));

  // Random 4 -> 1 equals independently computed block means.
  Tensor rnd({4, 8, 3, 3});
  for (int i = 0; i < rnd.numel(); ++i) rnd[i] = rng.uniform(-1, 1);
  const Tensor mean = project_kernel(rnd, 1, 3);
  for (int b = 0; b < 2; ++b)
    for (int p = 0; p < 9; ++p) {
      double acc = 0.0;
      for (int oo = 0; oo < 4; ++oo)
        for (int oi = 0; oi < 4; ++oi) acc += rnd[((oo * 8) + b * 4 + oi) * 9 + p];
      CHECK(mean[b * 9 + p] == doctest::Approx(acc / 16.0).epsilon(1e-6));
    }

  // 1 -> 4 puts the kernel on each orientation's diagonal block.
  const Tensor spread = project_kernel(same, 4, 3);
  REQUIRE(spread.shape() == std::vector<int>{4, 8, 3, 3});
  for (int oo = 0; oo < 4; ++oo)
    for (int b = 0; b < 2; ++b)
      for (int oi = 0; oi < 4; ++oi)
        for (int p = 0; p < 9; ++p) {
          const float v = spread[((oo * 8) + b * 4 + oi) * 9 + p];
          if (oi == oo)
            CHECK(v == same[b * 9 + p]);
          else
            CHECK(v == 0.0f);
        }

  CHECK_THROWS_AS(project_kernel(same, 1, 5), std::invalid_argument);
}

TEST_CASE("identity transfer reproduces the source's attended Q exactly") {
  VinModel source = small_source(9, 8, 12);
  VinConfig tgt_cfg = source.config();
  tgt_cfg.seed = 1234;
  TvinModel tvin = build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::News));
  CHECK(tvin.transferred_actions().size() == 4);
  CHECK(tvin.q_new.empty());
  for (float th : tvin.theta_values()) CHECK(th == 1.0f);
  // Encoder starts as the exact identity.
  CHECK(tvin.encoder_w.value.at(0, 0, 0, 0) == 1.0f);
  CHECK(tvin.encoder_w.value.at(0, 1, 0, 0) == 0.0f);

  for (uint64_t seed = 1; seed <= 25; ++seed) {
    const GridMap map = generate_obstacle_map(9, 0.3, seed);
    const Tensor obs = render_observation(source.spec(), map);
    const Tensor qs = source.q_map_values(obs);
    const Tensor qt = tvin.q_map_values(obs);
    Rng rng(seed);
    const AgentState s{rng.uniform_int(9), rng.uniform_int(9), 0};
    const Tensor psi_s = attend(qs, s, 1);
    const Tensor psi_t = attend(qt, s, 1);
    CHECK(std::memcmp(psi_s.data(), psi_t.data(), sizeof(float) * 4) == 0);
  }
}

TEST_CASE("partial mappings split actions into transferred and new") {
  VinModel source = small_source(3);
  VinConfig tgt_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.k = 6;
  tgt_cfg.seed = 2;
  const TvinModel full =
      build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::Moore));
  CHECK(full.transferred_actions().size() == 4);
  CHECK(full.q_new.size() == 4);  // the four diagonal moves

  ActionMapping two = default_mapping(Domain::News, Domain::Moore);
  two.pairs.resize(2);
  const TvinModel partial = build_tvin(source, tgt_cfg, two);
  CHECK(partial.transferred_actions().size() == 2);
  CHECK(partial.q_new.size() == 6);
}

TEST_CASE("the effective kernel is exactly theta times the frozen kernel") {
  VinModel source = small_source(7);
  VinConfig tgt_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.k = 4;
  tgt_cfg.seed = 3;
  TvinModel tvin = build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::Moore));
  const float c = -1.375f;  // exactly representable
  for (Param& th : tvin.theta) th.value[0] = c;

  // A plain VIN whose kernel rows are c*q_pre for mapped actions and q_new
  // elsewhere must produce the same Q map, bit for bit.
  VinConfig vcfg = tgt_cfg;
  vcfg.hidden = source.config().hidden;
  VinModel manual(vcfg);
  manual.conv_h_w.value = tvin.conv_h_w.value;
  manual.conv_h_b.value = tvin.conv_h_b.value;
  manual.conv_r_w.value = tvin.conv_r_w.value;
  manual.head_w.value = tvin.head_w.value;
  manual.head_b.value = tvin.head_b.value;
  const int per = 2 * 3 * 3;
  int pre_slot = 0, new_slot = 0;
  for (int a = 0; a < 8; ++a) {
    const bool transferred = a < 4;
    const Tensor& src_rows = transferred ? tvin.q_pre[static_cast<size_t>(pre_slot++)].value
                                         : tvin.q_new[static_cast<size_t>(new_slot++)].value;
    for (int i = 0; i < per; ++i)
      manual.q_kernels.value[a * per + i] = transferred ? c * src_rows[i] : src_rows[i];
  }
  const GridMap map = generate_obstacle_map(7, 0.3, 4);
  const Tensor obs = render_observation(domain_spec(Domain::Moore), map);
  const Tensor qa = tvin.q_map_values(obs);
  const Tensor qb = manual.q_map_values(obs);
  REQUIRE(qa.shape() == qb.shape());
  CHECK(std::memcmp(qa.data(), qb.data(), sizeof(float) * static_cast<size_t>(qa.numel())) == 0);
}

TEST_CASE("theta gradient equals the frozen-kernel correlation, checked by differences") {
  VinModel source = small_source(13, 4, 6);
  VinConfig tgt_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.k = 4;
  tgt_cfg.seed = 5;
  TvinModel tvin = build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::Moore));
  const GridMap map = generate_obstacle_map(5, 0.3, 6);
  const Tensor obs = render_observation(domain_spec(Domain::Moore), map);
  const AgentState s{2, 3, 0};
  const int label = 5;

  std::vector<Param*> thetas;
  for (Param& th : tvin.theta) thetas.push_back(&th);
  auto loss_fn = [&](bool with_grad) -> double {
    if (!with_grad) return oracle::ref_tvin_loss(tvin, obs, s, label);
    for (Param* p : tvin.trainable_params()) p->zero_grad();
    Tape t;
    ValueId ce = t.softmax_cross_entropy(tvin.build_logits(t, tvin.build_q_map(t, obs), s), label);
    t.backward(ce);
    return t.value(ce)[0];
  };
  const GradCheckReport report = grad_check(loss_fn, thetas, 1e-4, 1e-3, 99);
  CHECK(report.pass);
}

TEST_CASE("training keeps frozen params byte-identical and records theta") {
  VinModel source = small_source(21, 5, 8);
  const Dataset ds = small_dataset(Domain::Moore, 3, 7, 8);
  VinConfig cfg;
  cfg.domain = Domain::Moore;
  cfg.k = 5;
  cfg.seed = 6;
  cfg.epochs = 0;
  TvinModel tvin = build_tvin(source, cfg, default_mapping(Domain::News, Domain::Moore));

  const TransferReport empty_run = train_tvin(tvin, ds, cfg);
  REQUIRE(empty_run.theta_by_epoch.size() == 1);
  for (float th : empty_run.theta_by_epoch[0]) CHECK(th == 1.0f);
  CHECK(empty_run.frozen_scalars > 0);
  CHECK(empty_run.trainable_scalars > 0);

  cfg.epochs = 3;
  const Tensor fr_before = tvin.conv_h_w.value;
  const Tensor pre_before = tvin.q_pre[0].value;
  const TransferReport report = train_tvin(tvin, ds, cfg);
  CHECK(report.theta_by_epoch.size() == 4);
  CHECK(report.action_names == std::vector<std::string>{"East", "West", "North", "South"});
  CHECK(std::memcmp(fr_before.data(), tvin.conv_h_w.value.data(),
                    sizeof(float) * static_cast<size_t>(fr_before.numel())) == 0);
  CHECK(std::memcmp(pre_before.data(), tvin.q_pre[0].value.data(),
                    sizeof(float) * static_cast<size_t>(pre_before.numel())) == 0);
  // Theta should actually move once training starts.
  bool moved = false;
  for (float th : report.theta_by_epoch.back())
    if (th != 1.0f) moved = true;
  CHECK(moved);
}

TEST_CASE("unfrozen reward nets are allowed to move") {
  VinModel source = small_source(22, 5, 8);
  const Dataset ds = small_dataset(Domain::Moore, 2, 7, 9);
  VinConfig cfg;
  cfg.domain = Domain::Moore;
  cfg.k = 5;
  cfg.seed = 7;
  cfg.epochs = 2;
  TransferOptions opts;
  opts.freeze_reward = false;
  TvinModel tvin = build_tvin(source, cfg, default_mapping(Domain::News, Domain::Moore), opts);
  const Tensor before = tvin.conv_h_w.value;
  train_tvin(tvin, ds, cfg);
  CHECK(std::memcmp(before.data(), tvin.conv_h_w.value.data(),
                    sizeof(float) * static_cast<size_t>(before.numel())) != 0);
}

TEST_CASE("build_vin_init shares initial weights with build_tvin") {
  VinModel source = small_source(31, 6, 8);
  VinConfig tgt_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.k = 6;
  tgt_cfg.seed = 8;
  const ActionMapping mapping = default_mapping(Domain::News, Domain::Moore);
  TvinModel tvin = build_tvin(source, tgt_cfg, mapping);
  VinModel vin_i = build_vin_init(source, tgt_cfg, mapping);

  CHECK(std::memcmp(vin_i.conv_h_w.value.data(), tvin.conv_h_w.value.data(),
                    sizeof(float) * static_cast<size_t>(tvin.conv_h_w.value.numel())) == 0);
  CHECK(std::memcmp(vin_i.head_w.value.data(), tvin.head_w.value.data(),
                    sizeof(float) * 64) == 0);
  const int per = 2 * 3 * 3;
  for (int a = 0; a < 8; ++a) {
    const Tensor& rows = a < 4 ? tvin.q_pre[static_cast<size_t>(a)].value
                               : tvin.q_new[static_cast<size_t>(a - 4)].value;
    CHECK(std::memcmp(vin_i.q_kernels.value.data() + a * per, rows.data(),
                      sizeof(float) * static_cast<size_t>(per)) == 0);
  }
  // Nothing frozen: a training epoch moves the transferred rows too.
  for (Param* p : vin_i.params())
    CHECK(!p->frozen);
  const Dataset ds = small_dataset(Domain::Moore, 2, 7, 10);
  VinConfig cfg = tgt_cfg;
  cfg.hidden = source.config().hidden;
  cfg.epochs = 1;
  const Tensor q_before = vin_i.q_kernels.value;
  train_model(vin_i, ds, cfg);
  CHECK(std::memcmp(q_before.data(), vin_i.q_kernels.value.data(),
                    sizeof(float) * static_cast<size_t>(q_before.numel())) != 0);
}

TEST_CASE("kernel-size mismatch is a transfer configuration error") {
  VinModel source = small_source(41);
  VinConfig tgt_cfg;
  tgt_cfg.domain = Domain::Moore;
  tgt_cfg.k = 6;
  tgt_cfg.f = 5;
  CHECK_THROWS_AS(build_tvin(source, tgt_cfg, default_mapping(Domain::News, Domain::Moore)),
                  std::invalid_argument);
}

TEST_CASE("tvin checkpoints round-trip through save and load") {
  VinModel source = small_source(51, 5, 8);
  VinConfig cfg;
  cfg.domain = Domain::Moore;
  cfg.k = 5;
  cfg.seed = 11;
  cfg.epochs = 1;
  ActionMapping mapping = default_mapping(Domain::News, Domain::Moore);
  mapping.pairs.resize(3);
  TvinModel tvin = build_tvin(source, cfg, mapping);
  const Dataset ds = small_dataset(Domain::Moore, 2, 7, 12);
  train_tvin(tvin, ds, cfg);
  const std::string path = "/tmp/tvin_transfer_rt.ck";
  tvin.save(path);
  TvinModel back = TvinModel::load(path);
  CHECK(back.transferred_actions() == tvin.transferred_actions());
  CHECK(back.q_new.size() == tvin.q_new.size());
  CHECK(back.conv_h_w.frozen);
  const GridMap& map = ds.maps[0];
  const Tensor obs = render_observation(domain_spec(Domain::Moore), map);
  const Tensor qa = tvin.q_map_values(obs);
  const Tensor qb = back.q_map_values(obs);
  CHECK(std::memcmp(qa.data(), qb.data(), sizeof(float) * static_cast<size_t>(qa.numel())) == 0);
}

TEST_CASE("cross-orientation transfer builds and runs") {
  // Drive -> News exercises the 4->1 projections end to end.
  VinConfig drive_cfg;
  drive_cfg.domain = Domain::Drive;
  drive_cfg.k = 5;
  drive_cfg.hidden = 8;
  drive_cfg.seed = 13;
  VinModel drive_source(drive_cfg);
  VinConfig news_cfg;
  news_cfg.domain = Domain::News;
  news_cfg.k = 5;
  news_cfg.seed = 14;
  TvinModel tvin =
      build_tvin(drive_source, news_cfg, default_mapping(Domain::Drive, Domain::News));
  CHECK(tvin.transferred_actions().size() == 3);
  CHECK(tvin.q_new.size() == 1);
  CHECK(tvin.conv_r_w.value.shape() == std::vector<int>{1, 8, 1, 1});
  CHECK(tvin.encoder_w.value.shape() == std::vector<int>{5, 2, 1, 1});
  const GridMap map = generate_obstacle_map(7, 0.3, 15);
  const Tensor obs = render_observation(domain_spec(Domain::News), map);
  const PolicyOutput out = tvin.forward(obs, {3, 3, 0});
  CHECK(out.logits.numel() == 4);
  CHECK(out.logits.all_finite());

  // And News -> Drive exercises 1->4 broadcast.
  VinModel news_source = small_source(61, 5, 8);
  VinConfig drive_tgt;
  drive_tgt.domain = Domain::Drive;
  drive_tgt.k = 5;
  drive_tgt.seed = 15;
  TvinModel tvin2 =
      build_tvin(news_source, drive_tgt, default_mapping(Domain::News, Domain::Drive));
  CHECK(tvin2.q_pre[0].value.shape() == std::vector<int>{4, 8, 3, 3});
  const Tensor dobs = render_observation(domain_spec(Domain::Drive), map);
  const PolicyOutput dout = tvin2.forward(dobs, {3, 3, 2});
  CHECK(dout.logits.numel() == 3);
  CHECK(dout.logits.all_finite());
}
