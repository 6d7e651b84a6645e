#include "pseudopilot/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "pseudopilot/dataset.hpp"
#include "pseudopilot/errors.hpp"
#include "pseudopilot/losses.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/orchestrator.hpp"
#include "pseudopilot/rl.hpp"

namespace pseudopilot {

double max_grad_rel_err(const ParamStore& params,
                        const std::function<double(const ParamStore&)>& f,
                        const GradMap& analytic, double step) {
  if (step <= 0.0) throw ConfigError("max_grad_rel_err: step must be positive");
  ParamStore probe = params;
  double worst = 0.0;
  for (const std::string& name : probe.names()) {
    Tensor& t = probe.at(name);
    const auto it = analytic.find(name);
    if (it == analytic.end())
      throw ValidationError("max_grad_rel_err: no analytic gradient for " + name);
    const Tensor& g = it->second;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        const double saved = t.at(r, c);
        t.at(r, c) = saved + step;
        const double up = f(probe);
        t.at(r, c) = saved - step;
        const double down = f(probe);
        t.at(r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double an = g.at(r, c);
        const double denom = std::max({1e-3, std::fabs(fd), std::fabs(an)});
        worst = std::max(worst, std::fabs(fd - an) / denom);
      }
    }
  }
  return worst;
}

namespace {

constexpr double kMinPreact = 1e-3;   // relu kink clearance
constexpr double kMinFeature = 0.05;  // zero-norm clearance
constexpr double kMaxCosine = 0.99;   // clamp-edge / margin-pole clearance

// Hidden pre-activations of a plain MLP stay clear of the relu kink.
bool mlp_probe_safe(const ParamStore& params, const MlpSpec& spec, const Tensor& x) {
  Tensor cur = x;
  for (std::size_t layer = 0; layer < spec.layer_count(); ++layer) {
    Tensor z = matmul_nt(cur, params.at(spec.weight_name(layer)));
    const Tensor& b = params.at(spec.bias_name(layer));
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z.at(r, c) += b.at(0, c);
    if (layer + 1 == spec.layer_count()) break;  // linear output
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) {
        if (std::fabs(z.at(r, c)) < kMinPreact) return false;
        if (z.at(r, c) < 0.0) z.at(r, c) = 0.0;
      }
    cur = z;
  }
  return true;
}

}  // namespace

bool gradient_probe_safe(const Model& m, const Tensor& x) {
  if (!mlp_probe_safe(m.params, m.spec.extractor, x)) return false;
  const Tensor f = features_eval(m, x);
  for (std::size_t r = 0; r < f.rows(); ++r)
    if (f.row_norm(r) < kMinFeature) return false;
  const Tensor c = cosine_eval(m, f);
  for (double v : c.values())
    if (std::fabs(v) > kMaxCosine) return false;
  return true;
}

bool gradient_probe_safe(const QNet& q, const Tensor& states) {
  return mlp_probe_safe(q.params, q.spec, states);
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor random_inputs(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor x(n, dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) x.at(r, c) = rng.normal();
  return x;
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
  return y;
}

Model random_model(Rng& rng, std::size_t in, std::size_t hidden, std::size_t d, int k,
                   double margin) {
  ModelSpec spec = make_model_spec(in, {hidden}, d, k);
  spec.classifier.margin = margin;
  return init_model(spec, rng);
}

// ---- checks ----------------------------------------------------------

// Redraws until the batch is probe safe; throws after too many tries.
template <typename DrawFn>
void draw_safe(Rng& rng, const DrawFn& draw) {
  for (int attempt = 0; attempt < 500; ++attempt)
    if (draw(rng)) return;
  throw NumericError("could not draw a probe-safe random configuration");
}

CheckResult check_margin_zero_equals_ce() {
  CheckResult res;
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    Model m;
    Tensor x;
    std::vector<int> y;
    draw_safe(rng, [&](Rng& r) {
      const int k = 2 + static_cast<int>(r.uniform_index(4));
      const std::size_t d = 3 + r.uniform_index(6);
      const std::size_t n = 1 + r.uniform_index(8);
      m = random_model(r, 3, 5, d, k, 0.0);
      x = random_inputs(n, 3, r);
      y = random_labels(n, k, r);
      return gradient_probe_safe(m, x);
    });
    Tape t1;
    const double a = t1.scalar(margin_nll_loss(t1, m, x, y));
    Tape t2;
    const double b = t2.scalar(cross_entropy_loss(t2, m, x, y));
    worst = std::max(worst, std::fabs(a - b));
  }
  res.pass = worst < 1e-6;
  res.detail = "max |margin(0) - ce| = " + fmt(worst);
  return res;
}

CheckResult check_loss_gradients() {
  CheckResult res;
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    Model m;
    Tensor xs, xt, xu;
    std::vector<int> ys, yt;
    int k = 0;
    draw_safe(rng, [&](Rng& r) {
      k = 2 + static_cast<int>(r.uniform_index(3));
      const std::size_t d = 3 + r.uniform_index(4);
      const std::size_t in = 2 + r.uniform_index(3);
      m = random_model(r, in, 4, d, k, 0.5);
      xs = random_inputs(3, in, r);
      ys = random_labels(3, k, r);
      xt = random_inputs(2, in, r);
      yt = random_labels(2, k, r);
      xu = random_inputs(4, in, r);
      return gradient_probe_safe(m, xs) && gradient_probe_safe(m, xt) &&
             gradient_probe_safe(m, xu);
    });

    using LossFn = std::function<Value(Tape&, const Model&)>;
    const LossFn losses[] = {
        [&](Tape& t, const Model& mm) { return cross_entropy_loss(t, mm, xs, ys); },
        [&](Tape& t, const Model& mm) { return margin_nll_loss(t, mm, xt, yt); },
        [&](Tape& t, const Model& mm) { return target_margin_loss(t, mm, xs, ys, xt, yt); },
        [&](Tape& t, const Model& mm) { return entropy_loss(t, mm, xu); },
        [&](Tape& t, const Model& mm) {
          return combined_loss(t, mm, xs, ys, xt, yt, xu, 0.1);
        },
        [&](Tape& t, const Model& mm) {
          return complete_margin_loss(t, mm, xs, ys, xt, yt);
        },
    };
    for (const LossFn& fn : losses) {
      Tape tape;
      const Value loss = fn(tape, m);
      const GradMap grads = tape.gradients(loss, m.params);
      const auto f = [&](const ParamStore& p) {
        Model probe{m.spec, p};
        Tape t;
        return t.scalar(fn(t, probe));
      };
      worst = std::max(worst, max_grad_rel_err(m.params, f, grads, 1e-4));
    }
  }
  res.pass = worst < 1e-4;
  res.detail = "max rel err = " + fmt(worst);
  return res;
}

CheckResult check_td_gradient() {
  CheckResult res;
  Rng rng(91);
  double worst = 0.0;
  for (int trial = 0; trial < 6; ++trial) {
    StateLayout layout{3, 2 + static_cast<int>(rng.uniform_index(2)), 3};
    QNet q;
    std::vector<Transition> batch;
    std::vector<double> targets;
    draw_safe(rng, [&](Rng& r) {
      q = init_qnet(layout, 6, 5, r);
      batch.clear();
      targets.clear();
      Tensor all_states(0, 0);
      for (int i = 0; i < 5; ++i) {
        Transition t;
        t.state = random_inputs(1, layout.total_len(), r);
        t.next_state = random_inputs(1, layout.total_len(), r);
        t.action = r.uniform_index(layout.capacity);
        t.reward = r.uniform() < 0.5 ? 1.0 : -1.0;
        t.terminal = r.uniform() < 0.3;
        all_states = all_states.empty() ? t.state : vstack(all_states, t.state);
        batch.push_back(t);
        targets.push_back(r.normal());
      }
      return gradient_probe_safe(q, all_states);
    });
    GradMap grads;
    td_loss(q, batch, targets, &grads);
    const auto f = [&](const ParamStore& p) {
      QNet probe{q.spec, p, q.layout};
      return td_loss(probe, batch, targets, nullptr);
    };
    worst = std::max(worst, max_grad_rel_err(q.params, f, grads, 1e-4));
  }
  res.pass = worst < 1e-4;
  res.detail = "max rel err = " + fmt(worst);
  return res;
}

CheckResult check_reward_boundary() {
  CheckResult res;
  RewardParams p;  // beta 1, lambda 0.1
  const double tau = p.tau();
  const double phi_at = selection_metric(std::log(0.9), std::log(0.9), 0.0, p);
  const double phi_above =
      selection_metric(std::log(0.9 + 1e-6), std::log(0.9 + 1e-6), 0.0, p);
  const bool exact_tie = phi_at == tau;
  const bool tie_bad = binary_reward(phi_at, tau) == -1.0;
  const bool above_good = binary_reward(phi_above, tau) == 1.0;
  res.pass = exact_tie && tie_bad && above_good;
  res.detail = std::string("phi(0.9)-tau = ") + fmt(phi_at - tau) +
               ", tie reward = " + fmt(binary_reward(phi_at, tau)) +
               ", nudged reward = " + fmt(binary_reward(phi_above, tau));
  return res;
}

CheckResult check_entropy_bounds() {
  CheckResult res;
  Rng rng(5);
  double lo = 1e300;
  double hi = -1e300;
  bool in_range = true;
  for (int trial = 0; trial < 100; ++trial) {
    Model m;
    Tensor xu;
    int k = 0;
    draw_safe(rng, [&](Rng& r) {
      k = 2 + static_cast<int>(r.uniform_index(4));
      m = random_model(r, 3, 4, 4, k, 0.5);
      xu = random_inputs(5, 3, r);
      return gradient_probe_safe(m, xu);
    });
    Tape t;
    const double h = t.scalar(entropy_loss(t, m, xu));
    lo = std::min(lo, h);
    hi = std::max(hi, h);
    if (h < 0.0 || h > std::log(static_cast<double>(k)) + 1e-9) in_range = false;
  }
  res.pass = in_range;
  res.detail = "range [" + fmt(lo) + ", " + fmt(hi) + "]";
  return res;
}

CheckResult check_uniform_entropy() {
  CheckResult res;
  Rng rng(6);
  double worst = 0.0;
  for (int k = 2; k <= 6; ++k) {
    Model m;
    Tensor xu;
    draw_safe(rng, [&](Rng& r) {
      m = random_model(r, 3, 4, 4, k, 0.5);
      xu = random_inputs(6, 3, r);
      return gradient_probe_safe(m, xu);
    });
    // identical class weights force exactly uniform predictions
    Tensor& w = m.params.at(m.spec.classifier.weight_name);
    for (std::size_t r = 1; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) = w.at(0, c);
    Tape t;
    const double h = t.scalar(entropy_loss(t, m, xu));
    worst = std::max(worst, std::fabs(h - std::log(static_cast<double>(k))));
  }
  res.pass = worst < 1e-9;
  res.detail = "max |H - log K| = " + fmt(worst);
  return res;
}

CheckResult check_action_masking() {
  CheckResult res;
  Rng rng(7);
  StateLayout layout{6, 3, 4};
  std::size_t violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    QNet q = init_qnet(layout, 8, 6, rng);
    std::vector<bool> occupied(layout.capacity);
    std::size_t count = 0;
    for (std::size_t i = 0; i < layout.capacity; ++i) {
      occupied[i] = rng.uniform() < 0.5;
      if (occupied[i]) ++count;
    }
    if (count == 0) {
      occupied[rng.uniform_index(layout.capacity)] = true;
      count = 1;
    }
    // rig the output bias so every consumed slot has the maximal Q value
    Tensor& bias = q.params.at(q.spec.bias_name(q.spec.layer_count() - 1));
    for (std::size_t i = 0; i < layout.capacity; ++i)
      if (!occupied[i]) bias.at(0, i) = 1e6;
    const Tensor state = random_inputs(1, layout.total_len(), rng);
    const double eps = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.5 : 1.0);
    const std::size_t a = select_action(q, state, occupied, eps, rng);
    if (!occupied[a]) ++violations;
  }
  res.pass = violations == 0;
  res.detail = std::to_string(violations) + " masked picks out of 200 trials";
  return res;
}

CheckResult check_q_update_descent() {
  CheckResult res;
  Rng rng(8);
  StateLayout layout{4, 3, 4};
  QNet q = init_qnet(layout, 12, 8, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 32; ++i) {
    Transition t;
    t.state = random_inputs(1, layout.total_len(), rng);
    t.next_state = random_inputs(1, layout.total_len(), rng);
    t.action = rng.uniform_index(layout.capacity);
    t.reward = rng.uniform() < 0.5 ? 1.0 : -1.0;
    t.terminal = rng.uniform() < 0.25;
    batch.push_back(t);
  }
  OptimConfig opt;
  opt.base_lr = 0.001;
  opt.momentum = 0.9;
  opt.weight_decay = 0.0;
  opt.decay_rate = 0.0;
  double initial = 0.0;
  for (int step = 0; step < 100; ++step) {
    const double loss = q_update(q, batch, 0.9, opt);
    if (step == 0) initial = loss;
  }
  const double final_loss = td_loss(q, batch, q_targets(q, batch, 0.9), nullptr);
  res.pass = final_loss <= 0.5 * initial;
  res.detail = "loss " + fmt(initial) + " -> " + fmt(final_loss);
  return res;
}

CheckResult check_gamma_zero_targets() {
  CheckResult res;
  Rng rng(9);
  StateLayout layout{4, 2, 3};
  QNet q = init_qnet(layout, 6, 5, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i) {
    Transition t;
    t.state = random_inputs(1, layout.total_len(), rng);
    t.next_state = random_inputs(1, layout.total_len(), rng);
    t.action = rng.uniform_index(layout.capacity);
    t.reward = rng.uniform() < 0.5 ? 1.0 : -1.0;
    t.terminal = i % 3 == 0;
    batch.push_back(t);
  }
  const std::vector<double> targets = q_targets(q, batch, 0.0);
  bool exact = true;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (targets[i] != batch[i].reward) exact = false;
  res.pass = exact;
  res.detail = exact ? "targets equal rewards exactly" : "target/reward mismatch";
  return res;
}

CheckResult check_replay() {
  CheckResult res;
  Rng rng(10);
  ReplayPool pool(4);
  for (std::size_t i = 0; i < 6; ++i) {
    Transition t;
    t.state = Tensor(1, 2);
    t.next_state = Tensor(1, 2);
    t.action = i;  // tag
    t.reward = 1.0;
    t.terminal = true;
    pool.insert(t);
  }
  std::map<std::size_t, std::size_t> counts;
  const std::size_t draws = 8000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto s = pool.sample(1, rng);
    ++counts[s[0].action];
  }
  bool evicted_gone = counts.count(0) == 0 && counts.count(1) == 0;
  bool uniform = true;
  for (std::size_t tag = 2; tag <= 5; ++tag) {
    const double got = static_cast<double>(counts[tag]);
    if (std::fabs(got - 2000.0) > 300.0) uniform = false;
  }
  res.pass = evicted_gone && uniform && pool.size() == 4;
  std::ostringstream d;
  d << "counts";
  for (const auto& [tag, n] : counts) d << ' ' << tag << ':' << n;
  res.detail = d.str();
  return res;
}

CheckResult check_ent_equals_margin_zero_run() {
  CheckResult res;
  BlobSpec blobs;
  blobs.seed = 11;
  blobs.classes = 3;
  blobs.input_dim = 2;
  blobs.shift_magnitude = 1.0;
  blobs.rotation_angle = 0.3;
  blobs.n_source_per_class = 20;
  blobs.k_shot = 2;
  blobs.n_unlabeled_per_class = 8;
  const DatasetBundle bundle = make_shifted_blobs(blobs);

  RunConfig cfg;
  cfg.seed = 3;
  cfg.hidden = {16};
  cfg.feature_dim = 5;
  cfg.batch_size = 8;
  cfg.pretrain_epochs = 2;
  cfg.finetune_epochs = 1;
  cfg.max_outer = 2;

  RunConfig ent = cfg;
  ent.method = Method::kEnt;
  RunConfig tml0 = cfg;
  tml0.method = Method::kTml;
  tml0.margin = 0.0;

  const RunResult a = run_method(ent, bundle);
  const RunResult b = run_method(tml0, bundle);
  const bool same = a.model.params == b.model.params;
  res.pass = same && a.final_accuracy == b.final_accuracy;
  res.detail = same ? "parameters identical step for step" : "parameter drift";
  return res;
}

CheckResult check_splus_t_ignores_unlabeled() {
  CheckResult res;
  BlobSpec blobs;
  blobs.seed = 12;
  blobs.classes = 3;
  blobs.input_dim = 2;
  blobs.shift_magnitude = 1.0;
  blobs.rotation_angle = 0.3;
  blobs.n_source_per_class = 20;
  blobs.k_shot = 2;
  blobs.n_unlabeled_per_class = 8;
  const DatasetBundle bundle = make_shifted_blobs(blobs);

  // same labeled splits, completely different unlabeled split
  Rng noise(99);
  std::vector<Sample> other_unlabeled = bundle.target_unlabeled();
  for (Sample& s : other_unlabeled)
    for (double& v : s.x) v = noise.normal() * 10.0;
  std::vector<int> other_hidden(bundle.target_unlabeled().size(), 0);
  const DatasetBundle swapped(bundle.source(), bundle.target_labeled(), other_unlabeled,
                              other_hidden, bundle.classes(), bundle.input_dim());

  RunConfig cfg;
  cfg.method = Method::kSPlusT;
  cfg.seed = 3;
  cfg.hidden = {16};
  cfg.feature_dim = 5;
  cfg.batch_size = 8;
  cfg.pretrain_epochs = 2;
  cfg.finetune_epochs = 1;
  cfg.max_outer = 2;

  const RunResult a = run_method(cfg, bundle);
  const RunResult b = run_method(cfg, swapped);
  res.pass = a.model.params == b.model.params;
  res.detail = res.pass ? "parameters independent of the unlabeled split"
                        : "unlabeled split leaked into training";
  return res;
}

}  // namespace

std::vector<CheckResult> run_self_checks() {
  struct NamedCheck {
    const char* name;
    CheckResult (*fn)();
  };
  const NamedCheck table[] = {
      {"margin-zero-reduces-to-cross-entropy", check_margin_zero_equals_ce},
      {"loss-gradients-finite-difference", check_loss_gradients},
      {"td-loss-gradient-finite-difference", check_td_gradient},
      {"reward-boundary", check_reward_boundary},
      {"entropy-bounds", check_entropy_bounds},
      {"uniform-entropy-equals-log-k", check_uniform_entropy},
      {"action-masking", check_action_masking},
      {"q-update-descent", check_q_update_descent},
      {"gamma-zero-targets", check_gamma_zero_targets},
      {"replay-fifo-uniformity", check_replay},
      {"ent-matches-zero-margin-run", check_ent_equals_margin_zero_run},
      {"s-plus-t-ignores-unlabeled", check_splus_t_ignores_unlabeled},
  };
  std::vector<CheckResult> out;
  for (const NamedCheck& c : table) {
    CheckResult r;
    try {
      r = c.fn();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.name = c.name;
    out.push_back(r);
  }
  return out;
}

int cmd_validate(std::ostream& out) {
  const std::vector<CheckResult> checks = run_self_checks();
  bool all = true;
  for (const CheckResult& c : checks) {
    char line[160];
    std::snprintf(line, sizeof line, "%-38s %s  %s", c.name.c_str(),
                  c.pass ? "PASS" : "FAIL", c.detail.c_str());
    out << line << '\n';
    if (!c.pass) all = false;
  }
  out << (all ? "all checks passed" : "CHECKS FAILED") << '\n';
  return all ? 0 : 3;
}

}  // namespace pseudopilot
