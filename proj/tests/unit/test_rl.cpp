#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pseudopilot/errors.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/pseudo.hpp"
#include "pseudopilot/rl.hpp"
#include "pseudopilot/rng.hpp"

using namespace pseudopilot;

namespace {

Tensor random_inputs(Rng& rng, std::size_t n, std::size_t d) {
  Tensor x(n, d);
  for (auto& v : x.values()) v = rng.normal() + 0.5;
  return x;
}

Model tiny_model(Rng& rng, int classes = 3, std::size_t feature_dim = 5) {
  return init_model(make_model_spec(3, {16}, feature_dim, classes), rng);
}

std::vector<PseudoLabel> numbered(std::size_t n) {
  std::vector<PseudoLabel> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(PseudoLabel{i, 0, 0.9});
  return out;
}

// a labeled batch with every class present
std::vector<int> cycle_labels(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
  return y;
}

Tensor random_state(Rng& rng, const StateLayout& layout) {
  Tensor s(1, layout.total_len());
  for (auto& v : s.values()) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("state length follows the block layout") {
  StateLayout layout{16, 4, 16};
  CHECK(layout.block_len() == 20);
  CHECK(layout.total_len() == (16 + 8) * 20);  // 480
  CHECK(layout.candidate_offset(3) == 60);
  CHECK(layout.labeled_offset(0) == 16 * 20);
  CHECK(layout.unlabeled_offset(0) == 20 * 20);
}

TEST_CASE("build_state fills candidate blocks and zeros consumed slots") {
  Rng rng(601);
  const int K = 3;
  Model m = tiny_model(rng, K);
  StateLayout layout{4, K, 5};
  Tensor xu = random_inputs(rng, 10, 3);
  Tensor xl = random_inputs(rng, 6, 3);
  std::vector<int> yl = cycle_labels(6, K);

  PseudoPool pool = init_candidate_set(assign_pseudo_labels(m, xu), 4, 7);
  Tensor state = build_state(layout, pool, m, xl, yl, xu);
  REQUIRE(state.cols() == layout.total_len());

  // occupied candidate block = [normalized feature, class probabilities]
  Tensor feats = features_eval(m, xu);
  Tensor probs = class_probs_eval(m, xu);
  for (std::size_t slot = 0; slot < 4; ++slot) {
    const std::size_t row = pool.slot(slot).index;
    const std::size_t off = layout.candidate_offset(slot);
    const double norm = feats.row_norm(row);
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(state.at(0, off + c) == doctest::Approx(feats.at(row, c) / norm).epsilon(1e-12));
    for (int j = 0; j < K; ++j)
      CHECK(state.at(0, off + 5 + static_cast<std::size_t>(j)) ==
            doctest::Approx(probs.at(row, static_cast<std::size_t>(j))).epsilon(1e-12));
  }

  // consuming a slot zeroes exactly its block
  pool.take(1);
  Tensor after = build_state(layout, pool, m, xl, yl, xu);
  const std::size_t off1 = layout.candidate_offset(1);
  for (std::size_t c = 0; c < layout.block_len(); ++c) CHECK(after.at(0, off1 + c) == 0.0);
  for (std::size_t c = 0; c < layout.block_len(); ++c)
    CHECK(after.at(0, layout.candidate_offset(0) + c) ==
          state.at(0, layout.candidate_offset(0) + c));
}

TEST_CASE("single-member labeled class block equals that sample's pair") {
  Rng rng(602);
  const int K = 3;
  Model m = tiny_model(rng, K);
  StateLayout layout{2, K, 5};
  Tensor xu = random_inputs(rng, 6, 3);
  Tensor xl = random_inputs(rng, 3, 3);  // one sample per class
  std::vector<int> yl{0, 1, 2};
  PseudoPool pool = init_candidate_set(assign_pseudo_labels(m, xu), 2, 3);
  Tensor state = build_state(layout, pool, m, xl, yl, xu);

  Tensor feats = features_eval(m, xl);
  Tensor probs = class_probs_eval(m, xl);
  for (int cls = 0; cls < K; ++cls) {
    const std::size_t off = layout.labeled_offset(cls);
    const std::size_t r = static_cast<std::size_t>(cls);
    const double norm = feats.row_norm(r);
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(state.at(0, off + c) == doctest::Approx(feats.at(r, c) / norm).epsilon(1e-12));
    for (int j = 0; j < K; ++j)
      CHECK(state.at(0, off + 5 + static_cast<std::size_t>(j)) ==
            doctest::Approx(probs.at(r, static_cast<std::size_t>(j))).epsilon(1e-12));
  }
}

TEST_CASE("a labeled class without members is an error, an unpredicted class is zeros") {
  Rng rng(603);
  const int K = 3;
  Model m = tiny_model(rng, K);
  StateLayout layout{2, K, 5};
  Tensor xu = random_inputs(rng, 6, 3);
  Tensor xl = random_inputs(rng, 4, 3);
  std::vector<int> missing{0, 0, 1, 1};  // class 2 absent
  PseudoPool pool = init_candidate_set(assign_pseudo_labels(m, xu), 2, 3);
  CHECK_THROWS_AS(build_state(layout, pool, m, xl, missing, xu), ValidationError);

  // drop every row predicted as the rarest class: its unlabeled block is zeros
  std::vector<int> preds = predict(m, xu);
  std::vector<int> counts(K, 0);
  for (int p : preds) ++counts[static_cast<std::size_t>(p)];
  int excluded = 0;
  for (int j = 1; j < K; ++j)
    if (counts[static_cast<std::size_t>(j)] < counts[static_cast<std::size_t>(excluded)])
      excluded = j;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] != excluded) keep.push_back(i);
  REQUIRE(keep.size() >= 2);
  Tensor xu2(keep.size(), xu.cols());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t c = 0; c < xu.cols(); ++c) xu2.at(i, c) = xu.at(keep[i], c);

  std::vector<int> yl = cycle_labels(4, K);
  PseudoPool pool2 = init_candidate_set(assign_pseudo_labels(m, xu2), 2, 3);
  Tensor state = build_state(layout, pool2, m, xl, yl, xu2);
  const std::size_t off = layout.unlabeled_offset(excluded);
  for (std::size_t c = 0; c < layout.block_len(); ++c) CHECK(state.at(0, off + c) == 0.0);
}

TEST_CASE("occupied_mask_from_state recovers the pool occupancy") {
  Rng rng(604);
  const int K = 3;
  Model m = tiny_model(rng, K);
  StateLayout layout{5, K, 5};
  Tensor xu = random_inputs(rng, 12, 3);
  Tensor xl = random_inputs(rng, 6, 3);
  std::vector<int> yl = cycle_labels(6, K);
  PseudoPool pool = init_candidate_set(assign_pseudo_labels(m, xu), 5, 11);
  pool.take(0);
  pool.take(4);
  Tensor state = build_state(layout, pool, m, xl, yl, xu);
  std::vector<bool> mask = occupied_mask_from_state(layout, state);
  REQUIRE(mask.size() == 5);
  for (std::size_t s = 0; s < 5; ++s) CHECK(mask[s] == pool.occupied(s));
}

TEST_CASE("class_centers averages raw features per class") {
  Rng rng(605);
  Model m = tiny_model(rng, 3);
  Tensor xl = random_inputs(rng, 6, 3);
  std::vector<int> yl{0, 1, 2, 0, 1, 2};
  Tensor centers = class_centers(m, xl, yl);
  REQUIRE(centers.rows() == 3);
  REQUIRE(centers.cols() == 5);
  Tensor feats = features_eval(m, xl);
  for (int cls = 0; cls < 3; ++cls)
    for (std::size_t c = 0; c < 5; ++c) {
      const double want =
          0.5 * (feats.at(static_cast<std::size_t>(cls), c) +
                 feats.at(static_cast<std::size_t>(cls + 3), c));
      CHECK(centers.at(static_cast<std::size_t>(cls), c) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  std::vector<int> missing{0, 0, 1, 1, 1, 0};
  CHECK_THROWS_AS(class_centers(m, xl, missing), ValidationError);
}

TEST_CASE("center_log_probs is a log softmax over scaled center cosines") {
  Rng rng(606);
  Tensor feats = random_inputs(rng, 4, 5);
  Tensor centers = random_inputs(rng, 3, 5);
  const double s = 30.0;
  Tensor lp = center_log_probs(feats, centers, s);
  REQUIRE(lp.rows() == 4);
  REQUIRE(lp.cols() == 3);
  // independent recomputation
  Tensor nf = row_l2_normalize_eval(feats);
  Tensor nc = row_l2_normalize_eval(centers);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> logits(3);
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 5; ++c) dot += nf.at(i, c) * nc.at(j, c);
      logits[j] = s * std::max(-1.0, std::min(1.0, dot));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    for (std::size_t j = 0; j < 3; ++j) {
      const double want = logits[j] - mx - std::log(sum);
      CHECK(lp.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
    // log probabilities: exp sums to one
    double p = 0.0;
    for (std::size_t j = 0; j < 3; ++j) p += std::exp(lp.at(i, j));
    CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("selection metric and reward boundary behave exactly") {
  RewardParams p;  // beta 1, lambda 0.1, tau (1+beta) log 0.9
  const double log09 = std::log(0.9);
  const double tau = p.tau();
  CHECK(tau == (1.0 + p.beta) * log09);
  // p_c = p_f = 0.9, delta_e = 0 sits exactly on the boundary: a bad pick
  CHECK(selection_metric(log09, log09, 0.0, p) == tau);
  CHECK(binary_reward(selection_metric(log09, log09, 0.0, p), tau) == -1.0);
  // a hair above flips to +1
  const double nudged = std::log(0.9 + 1e-6);
  CHECK(binary_reward(selection_metric(nudged, nudged, 0.0, p), tau) == 1.0);
  // entropy decrease helps, increase hurts
  CHECK(binary_reward(selection_metric(log09, log09, 1e-9, p), tau) == 1.0);
  CHECK(binary_reward(selection_metric(log09, log09, -1e-9, p), tau) == -1.0);
  // override wins
  RewardParams q = p;
  q.tau_override = -100.0;
  CHECK(q.tau() == -100.0);
}

TEST_CASE("rewards are always exactly plus or minus one") {
  Rng rng(607);
  RewardParams p;
  for (int i = 0; i < 200; ++i) {
    const double phi =
        selection_metric(-3.0 * rng.uniform(), -3.0 * rng.uniform(),
                         rng.normal(), p);
    const double r = binary_reward(phi, p.tau());
    CHECK((r == 1.0 || r == -1.0));
  }
}

TEST_CASE("q_values has one output per candidate slot") {
  Rng rng(608);
  StateLayout layout{6, 3, 4};
  QNet q = init_qnet(layout, 12, 8, rng);
  Tensor s = random_state(rng, layout);
  Tensor qv = q_values(q, s);
  REQUIRE(qv.rows() == 1);
  REQUIRE(qv.cols() == 6);
  CHECK(qv.all_finite());
}

TEST_CASE("select_action at epsilon 0 is the masked argmax, lowest slot on ties") {
  Rng rng(609);
  StateLayout layout{4, 3, 4};
  QNet q = init_qnet(layout, 10, 6, rng);
  Tensor s = random_state(rng, layout);
  Tensor qv = q_values(q, s);
  std::vector<bool> all(4, true);
  std::size_t best = 0;
  for (std::size_t j = 1; j < 4; ++j)
    if (qv.at(0, j) > qv.at(0, best)) best = j;
  CHECK(select_action(q, s, all, 0.0, rng) == best);

  // mask out the argmax: the runner-up wins
  std::vector<bool> masked = all;
  masked[best] = false;
  const std::size_t second = select_action(q, s, masked, 0.0, rng);
  CHECK(second != best);
  for (std::size_t j = 0; j < 4; ++j)
    if (masked[j]) CHECK(qv.at(0, second) >= qv.at(0, j));

  std::vector<bool> none(4, false);
  CHECK_THROWS_AS(select_action(q, s, none, 0.0, rng), ValidationError);
}

TEST_CASE("select_action at epsilon 1 is uniform over occupied slots") {
  Rng rng(610);
  StateLayout layout{4, 3, 4};
  QNet q = init_qnet(layout, 10, 6, rng);
  Tensor s = random_state(rng, layout);
  std::vector<bool> occ{true, true, true, true};
  std::vector<int> hits(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++hits[select_action(q, s, occ, 1.0, rng)];
  for (int h : hits) {
    CHECK(h > draws / 4 - 200);  // 25% +- 2%
    CHECK(h < draws / 4 + 200);
  }
}

TEST_CASE("a consumed slot is never selected even with a forced-maximal Q value") {
  Rng rng(611);
  StateLayout layout{5, 3, 4};
  QNet q = init_qnet(layout, 10, 6, rng);
  // rig the output bias so slot 2 dwarfs everything
  const std::string out_bias = q.spec.bias_name(q.spec.layer_count() - 1);
  q.params.at(out_bias).at(0, 2) = 1e6;
  std::vector<bool> occ{true, true, false, true, true};
  for (int i = 0; i < 500; ++i) {
    const double eps = rng.uniform();
    const std::size_t a = select_action(q, random_state(rng, layout), occ, eps, rng);
    CHECK(a != 2);
  }
}

TEST_CASE("q_target bootstraps only over occupied next slots") {
  Rng rng(612);
  const int K = 3;
  Model m = tiny_model(rng, K);
  StateLayout layout{3, K, 5};
  QNet q = init_qnet(layout, 10, 6, rng);
  Tensor xu = random_inputs(rng, 8, 3);
  Tensor xl = random_inputs(rng, 6, 3);
  std::vector<int> yl = cycle_labels(6, K);
  PseudoPool pool = init_candidate_set(assign_pseudo_labels(m, xu), 3, 5);
  Tensor s0 = build_state(layout, pool, m, xl, yl, xu);
  pool.take(1);
  Tensor s1 = build_state(layout, pool, m, xl, yl, xu);

  Transition t{s0, 1, 1.0, s1, false};
  const Tensor qv = q_values(q, s1);
  double best = qv.at(0, 0);
  best = std::max(best, qv.at(0, 2));  // slot 1 is consumed in s1
  CHECK(q_target(q, t, 0.9) == doctest::Approx(1.0 + 0.9 * best).epsilon(1e-12));
  CHECK(q_target(q, t, 0.0) == 1.0);  // gamma 0 collapses to the reward

  Transition term{s0, 1, -1.0, s1, true};
  CHECK(q_target(q, term, 0.9) == -1.0);  // terminal ignores next state
}

TEST_CASE("q_target arithmetic example") {
  // r = 1, gamma = 0.9, max next Q = 2 -> V = 2.8; rig the net to output 2
  Rng rng(613);
  StateLayout layout{2, 2, 2};
  QNet q = init_qnet(layout, 4, 3, rng);
  for (const std::string& name : q.params.names())
    for (auto& v : q.params.at(name).values()) v = 0.0;
  q.params.at(q.spec.bias_name(q.spec.layer_count() - 1)).at(0, 0) = 2.0;

  Tensor next(1, layout.total_len());
  next.at(0, layout.candidate_offset(0) + layout.block_len() - 1) = 1.0;  // slot 0 occupied
  Transition t{Tensor(1, layout.total_len()), 0, 1.0, next, false};
  CHECK(q_target(q, t, 0.9) == doctest::Approx(2.8).epsilon(1e-15));
}

TEST_CASE("td_loss at met targets is a fixed point: zero loss, zero step") {
  Rng rng(614);
  StateLayout layout{3, 2, 3};
  QNet q = init_qnet(layout, 8, 5, rng);
  std::vector<Transition> batch;
  std::vector<double> targets;
  for (int i = 0; i < 4; ++i) {
    Tensor s = random_state(rng, layout);
    const std::size_t a = rng.uniform_index(3);
    batch.push_back(Transition{s, a, 1.0, s, true});
    targets.push_back(q_values(q, s).at(0, a));  // target == current Q
  }
  GradMap grads;
  const double loss = td_loss(q, batch, targets, &grads);
  CHECK(loss == doctest::Approx(0.0).scale(1.0).epsilon(1e-18));
  for (const auto& [name, g] : grads)
    for (double v : g.values()) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  const ParamStore before = q.params;
  // q_update with gamma 0 uses targets = rewards; rig rewards to current Q
  std::vector<Transition> met;
  for (int i = 0; i < 4; ++i) {
    Tensor s = random_state(rng, layout);
    const std::size_t a = rng.uniform_index(3);
    met.push_back(Transition{s, a, q_values(q, s).at(0, a), s, true});
  }
  q_update(q, met, 0.0, OptimConfig{0.01, 0.0, 0.0, 0.0, 0.75});
  CHECK(q.params == before);
}

TEST_CASE("repeated q_updates on a frozen batch descend the td loss") {
  Rng rng(615);
  StateLayout layout{4, 3, 4};
  QNet q = init_qnet(layout, 12, 8, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i) {
    Transition t;
    t.state = random_state(rng, layout);
    t.action = rng.uniform_index(4);
    t.reward = rng.uniform() < 0.5 ? 1.0 : -1.0;
    t.next_state = t.state;
    t.terminal = true;  // frozen targets: exactly the rewards
    batch.push_back(t);
  }
  OptimConfig cfg{0.001, 0.9, 0.0, 0.0, 0.75};
  std::vector<double> targets = q_targets(q, batch, 0.9);
  const double initial = td_loss(q, batch, targets, nullptr);
  double final_loss = initial;
  for (int step = 0; step < 100; ++step) final_loss = q_update(q, batch, 0.9, cfg);
  CHECK(final_loss < 0.5 * initial);
}

TEST_CASE("gamma zero q_targets equal the rewards exactly") {
  Rng rng(616);
  StateLayout layout{3, 2, 3};
  QNet q = init_qnet(layout, 8, 5, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 8; ++i) {
    Transition t;
    t.state = random_state(rng, layout);
    t.action = rng.uniform_index(3);
    t.reward = i % 2 == 0 ? 1.0 : -1.0;
    t.next_state = random_state(rng, layout);
    t.terminal = i % 3 == 0;
    batch.push_back(t);
  }
  std::vector<double> targets = q_targets(q, batch, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(targets[i] == batch[i].reward);
}

TEST_CASE("replay pool evicts oldest first and samples with replacement") {
  Rng rng(617);
  StateLayout layout{2, 2, 2};
  auto tagged = [&](double tag) {
    Transition t;
    t.state = Tensor(1, layout.total_len());
    t.reward = tag;
    t.next_state = t.state;
    t.terminal = true;
    return t;
  };
  ReplayPool pool(3);
  for (int i = 0; i < 4; ++i) pool.insert(tagged(static_cast<double>(i)));
  CHECK(pool.size() == 3);
  // tag 0 must be gone
  std::set<double> seen;
  for (int i = 0; i < 200; ++i)
    for (const Transition& t : pool.sample(4, rng)) seen.insert(t.reward);
  CHECK(seen == std::set<double>{1.0, 2.0, 3.0});

  // with-replacement: batch larger than the pool works
  ReplayPool tiny(2);
  tiny.insert(tagged(7.0));
  auto batch = tiny.sample(8, rng);
  CHECK(batch.size() == 8);
  for (const auto& t : batch) CHECK(t.reward == 7.0);

  ReplayPool empty(2);
  CHECK_THROWS_AS(empty.sample(1, rng), ValidationError);
}

TEST_CASE("replay sampling is uniform") {
  Rng rng(618);
  StateLayout layout{2, 2, 2};
  ReplayPool pool(4);
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.state = Tensor(1, layout.total_len());
    t.reward = static_cast<double>(i);
    t.next_state = t.state;
    t.terminal = true;
    pool.insert(t);
  }
  std::vector<int> hits(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws / 4; ++i)
    for (const Transition& t : pool.sample(4, rng)) ++hits[static_cast<int>(t.reward)];
  for (int h : hits) {
    CHECK(h > draws / 4 - 200);
    CHECK(h < draws / 4 + 200);
  }
}

TEST_CASE("epsilon schedule is linear from one to zero") {
  CHECK(epsilon_linear(0, 40) == 1.0);
  CHECK(epsilon_linear(20, 40) == 0.5);
  CHECK(epsilon_linear(40, 40) == 0.0);
  CHECK(epsilon_linear(1000, 40) == 0.0);  // clamps past the end
  CHECK_THROWS_AS(epsilon_linear(0, 0), ConfigError);
}

TEST_CASE("transition logger writes one parseable line per transition") {
  const std::string path = "/tmp/pseudopilot_test_translog.log";
  {
    TransitionLogger logger(path);
    logger.log(0, 0, 3, 1.0, -0.123, false);
    logger.log(0, 1, 1, -1.0, -9.5, true);
  }
  std::ifstream is(path);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "episode,step,action,reward,phi,terminal");
  REQUIRE(std::getline(is, line));
  CHECK(line.substr(0, 8) == "0,0,3,1,");
  REQUIRE(std::getline(is, line));
  CHECK(line.substr(0, 9) == "0,1,1,-1,");
  CHECK(line.back() == '1');  // terminal flag
  CHECK_FALSE(std::getline(is, line));
  std::remove(path.c_str());
}
