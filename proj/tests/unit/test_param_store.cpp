#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "pseudopilot/errors.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

using namespace pseudopilot;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

std::string temp_path(const char* stem) {
  return std::string("/tmp/pseudopilot_test_") + stem + ".bin";
}

}  // namespace

TEST_CASE("lr schedule matches the closed form") {
  OptimConfig cfg;  // base 0.01, rate 10, power 0.75
  CHECK(lr_schedule(cfg, 0.0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_schedule(cfg, 1.0) == doctest::Approx(0.01 / std::pow(11.0, 0.75)).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 0.5) == doctest::Approx(0.01 / std::pow(6.0, 0.75)).epsilon(1e-12));
  // monotone decreasing
  double prev = lr_schedule(cfg, 0.0);
  for (double p = 0.1; p <= 1.0; p += 0.1) {
    const double lr = lr_schedule(cfg, p);
    CHECK(lr < prev);
    prev = lr;
  }
}

TEST_CASE("sgd_step follows the momentum recurrence exactly") {
  Rng rng(301);
  ParamStore p;
  p.add("w", random_tensor(rng, 2, 3));
  OptimConfig cfg;
  cfg.base_lr = 0.05;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.decay_rate = 10.0;
  cfg.decay_power = 0.75;

  // independent reference state
  Tensor w = p.at("w");
  Tensor v(2, 3);

  GradMap grads;
  grads["w"] = random_tensor(rng, 2, 3);
  const double progress = 0.3;
  for (int step = 0; step < 3; ++step) {
    sgd_step(p, grads, cfg, progress);
    const double lr = lr_schedule(cfg, progress);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v.values()[i] = cfg.momentum * v.values()[i] + grads.at("w").values()[i] +
                      cfg.weight_decay * w.values()[i];
      w.values()[i] -= lr * v.values()[i];
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(p.at("w").values()[i] == w.values()[i]);
      CHECK(p.momentum("w").values()[i] == v.values()[i]);
    }
  }
}

TEST_CASE("sgd_step rejects non-finite gradients without touching parameters") {
  Rng rng(302);
  ParamStore p;
  p.add("w", random_tensor(rng, 2, 2));
  const Tensor before = p.at("w");
  GradMap grads;
  Tensor g(2, 2);
  g.at(1, 1) = std::nan("");
  grads["w"] = g;
  CHECK_THROWS_AS(sgd_step(p, grads, OptimConfig{}, 0.0), NumericError);
  CHECK(p.at("w") == before);
}

TEST_CASE("sgd_step rejects shape mismatches") {
  Rng rng(303);
  ParamStore p;
  p.add("w", random_tensor(rng, 2, 2));
  GradMap grads;
  grads["w"] = Tensor(3, 2);
  CHECK_THROWS_AS(sgd_step(p, grads, OptimConfig{}, 0.0), NumericError);
}

TEST_CASE("zero_momentum clears buffers but keeps weights") {
  Rng rng(304);
  ParamStore p;
  p.add("w", random_tensor(rng, 2, 2));
  GradMap grads;
  grads["w"] = random_tensor(rng, 2, 2);
  sgd_step(p, grads, OptimConfig{}, 0.0);
  const Tensor weights = p.at("w");
  p.zero_momentum();
  CHECK(p.at("w") == weights);
  for (double v : p.momentum("w").values()) CHECK(v == 0.0);
}

TEST_CASE("store rejects duplicate names and missing lookups") {
  ParamStore p;
  p.add("w", Tensor(1, 1));
  CHECK_THROWS_AS(p.add("w", Tensor(1, 1)), ConfigError);
  CHECK_THROWS_AS(p.at("nope"), ConfigError);
  CHECK(p.has("w"));
  CHECK_FALSE(p.has("nope"));
}

TEST_CASE("checkpoint roundtrip is bitwise exact") {
  Rng rng(305);
  ParamStore p;
  p.add("layer0.w", random_tensor(rng, 3, 4));
  p.add("layer0.b", random_tensor(rng, 1, 4));
  GradMap grads;
  grads["layer0.w"] = random_tensor(rng, 3, 4);
  grads["layer0.b"] = random_tensor(rng, 1, 4);
  sgd_step(p, grads, OptimConfig{}, 0.25);  // populate momentum

  const std::string path = temp_path("ckpt");
  save_checkpoint(p, path);
  ParamStore loaded = load_checkpoint(path);
  CHECK(loaded == p);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects a wrong magic header") {
  const std::string path = temp_path("badmagic");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOT-A-CHECKPOINT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects a missing file") {
  CHECK_THROWS_AS(load_checkpoint("/tmp/definitely_missing_ckpt_file"), ParseError);
}
