#include "pseudopilot/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "pseudopilot/errors.hpp"
#include "pseudopilot/losses.hpp"

namespace pseudopilot {

std::string method_name(Method m) {
  switch (m) {
    case Method::kSPlusT:
      return "S+T";
    case Method::kEnt:
      return "ENT";
    case Method::kTml:
      return "TML";
    case Method::kTmlSpl:
      return "TML_SPL";
    case Method::kTmlDqnpl:
      return "TML_DQNPL";
    case Method::kCml:
      return "CML";
  }
  throw ConfigError("method_name: unknown method");
}

std::optional<Method> parse_method(const std::string& name) {
  std::string up = name;
  for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (up == "S+T") return Method::kSPlusT;
  if (up == "ENT") return Method::kEnt;
  if (up == "TML") return Method::kTml;
  if (up == "TML_SPL") return Method::kTmlSpl;
  if (up == "TML_DQNPL") return Method::kTmlDqnpl;
  if (up == "CML") return Method::kCml;
  return std::nullopt;
}

double method_margin(Method m, double margin) {
  return (m == Method::kSPlusT || m == Method::kEnt) ? 0.0 : margin;
}

double method_alpha(Method m, double alpha) {
  return m == Method::kSPlusT ? 0.0 : alpha;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.feature_dim == 0) throw ConfigError("config: feature_dim must be positive");
  for (std::size_t w : cfg.hidden)
    if (w == 0) throw ConfigError("config: zero-width hidden layer");
  if (cfg.scale <= 0.0) throw ConfigError("config: scale must be positive");
  if (cfg.margin < 0.0) throw ConfigError("config: negative margin");
  if (cfg.alpha < 0.0) throw ConfigError("config: negative entropy weight");
  if (cfg.batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (cfg.pretrain_epochs == 0) throw ConfigError("config: pretrain_epochs must be positive");
  if (cfg.finetune_epochs == 0) throw ConfigError("config: finetune_epochs must be positive");
  if (cfg.max_outer == 0) throw ConfigError("config: max_outer must be positive");
  if (cfg.probe_size == 0) throw ConfigError("config: probe_size must be positive");
  if (cfg.confidence_threshold <= 0.0 || cfg.confidence_threshold >= 1.0)
    throw ConfigError("config: confidence_threshold must lie in (0,1)");
  if (cfg.candidate_capacity == 0) throw ConfigError("config: candidate_capacity must be positive");
  if (cfg.qnet_hidden1 == 0 || cfg.qnet_hidden2 == 0)
    throw ConfigError("config: zero-width Q-net layer");
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw ConfigError("config: gamma must lie in [0,1)");
  if (cfg.replay_capacity == 0) throw ConfigError("config: replay_capacity must be positive");
  if (cfg.q_batch == 0) throw ConfigError("config: q_batch must be positive");
  if (cfg.epsilon_total_steps == 0)
    throw ConfigError("config: epsilon_total_steps must be positive");
  if (cfg.clone_epochs == 0) throw ConfigError("config: clone_epochs must be positive");
}

BatchStream::BatchStream(std::size_t n, std::size_t batch, Rng rng)
    : n_(n), batch_(batch), rng_(rng) {
  if (n_ == 0) throw ValidationError("BatchStream: empty population");
  if (batch_ == 0) throw ConfigError("BatchStream: zero batch size");
  if (n_ >= batch_) {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }
}

std::vector<std::size_t> BatchStream::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  if (n_ < batch_) {
    // population smaller than one batch: draw with replacement
    for (std::size_t i = 0; i < batch_; ++i) out.push_back(rng_.uniform_index(n_));
    return out;
  }
  for (std::size_t i = 0; i < batch_; ++i) {
    if (cursor_ == n_) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows())
      throw ValidationError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(i, c) = x.at(rows[i], c);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y.at(r));
  return out;
}

std::vector<int> true_labels(const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(*s.true_label);
  return out;
}

// Stacked views of the three splits plus per-run bookkeeping.
struct RunData {
  Tensor xs;
  std::vector<int> ys;
  Tensor xt;
  std::vector<int> yt;
  Tensor xu;

  explicit RunData(const DatasetBundle& b)
      : xs(stack_inputs(b.source())),
        ys(true_labels(b.source())),
        xt(stack_inputs(b.target_labeled())),
        yt(true_labels(b.target_labeled())),
        xu(stack_inputs(b.target_unlabeled())) {}
};

// Fixed fork order keeps every method's streams aligned for a given seed.
struct RunContext {
  Rng init;
  Rng train;
  Rng probe;
  Rng agent;
  Rng loop;

  explicit RunContext(std::uint64_t seed)
      : init(0), train(0), probe(0), agent(0), loop(0) {
    Rng root(seed);
    init = root.fork();
    train = root.fork();
    probe = root.fork();
    agent = root.fork();
    loop = root.fork();
  }
};

struct PhaseSchedule {
  std::size_t steps = 0;        // optimizer steps this phase
  std::size_t total_steps = 0;  // lr progress denominator for the run
  std::size_t start_step = 0;   // global step at phase entry
  bool union_margin = false;    // pooled-batch margin objective
  double alpha = 0.0;
  double fixed_progress = -1.0;  // >= 0: hold lr progress constant (trial models)
};

std::size_t train_phase(Model& m, const RunData& d, const Tensor& xt,
                        const std::vector<int>& yt, const Tensor& xu,
                        const PhaseSchedule& sch, const OptimConfig& optim,
                        std::size_t batch, Rng rng) {
  if (sch.alpha > 0.0 && xu.rows() == 0)
    throw ValidationError("train_phase: entropy term requested without unlabeled data");
  BatchStream src(d.xs.rows(), batch, rng.fork());
  BatchStream tgt(xt.rows(), batch, rng.fork());
  std::optional<BatchStream> unl;
  if (sch.alpha > 0.0) unl.emplace(xu.rows(), batch, rng.fork());

  std::size_t gstep = sch.start_step;
  for (std::size_t s = 0; s < sch.steps; ++s, ++gstep) {
    const auto si = src.next();
    const auto ti = tgt.next();
    const Tensor bxs = gather_rows(d.xs, si);
    const std::vector<int> bys = gather_labels(d.ys, si);
    const Tensor bxt = gather_rows(xt, ti);
    const std::vector<int> byt = gather_labels(yt, ti);

    Tape tape;
    Value loss;
    if (sch.union_margin) {
      loss = complete_margin_loss(tape, m, bxs, bys, bxt, byt);
      if (sch.alpha > 0.0)
        loss = add(loss, scale(entropy_loss(tape, m, gather_rows(xu, unl->next())), sch.alpha));
    } else if (sch.alpha > 0.0) {
      loss = combined_loss(tape, m, bxs, bys, bxt, byt, gather_rows(xu, unl->next()), sch.alpha);
    } else {
      loss = target_margin_loss(tape, m, bxs, bys, bxt, byt);
    }

    const double lv = tape.scalar(loss);
    if (!std::isfinite(lv))
      throw TrainingError("training diverged at step " + std::to_string(gstep));
    const GradMap grads = tape.gradients(loss, m.params);
    double progress = sch.fixed_progress;
    if (progress < 0.0)
      progress = sch.total_steps == 0
                     ? 0.0
                     : std::min(1.0, static_cast<double>(gstep) /
                                         static_cast<double>(sch.total_steps));
    sgd_step(m.params, grads, optim, progress);
  }
  return gstep;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  return (n + batch - 1) / batch;
}

ModelSpec spec_for(const RunConfig& cfg, const DatasetBundle& bundle) {
  ModelSpec spec =
      make_model_spec(bundle.input_dim(), cfg.hidden, cfg.feature_dim, bundle.classes());
  spec.classifier.scale = cfg.scale;
  spec.classifier.margin = method_margin(cfg.method, cfg.margin);
  return spec;
}

std::vector<std::size_t> probe_rows(const DatasetBundle& bundle, std::size_t probe_size,
                                    Rng& rng) {
  const std::size_t n = bundle.target_unlabeled().size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  order.resize(std::min(probe_size, n));
  return order;
}

double probe_accuracy(const Model& m, const Tensor& xu, const std::vector<int>& hidden,
                      const std::vector<std::size_t>& rows) {
  const std::vector<int> preds = predict(m, gather_rows(xu, rows));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (preds[i] == hidden[rows[i]]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

// Labeled-target view: D_t plus pseudo-labeled positives.
void labeled_with_positives(const RunData& d, const std::vector<PseudoLabel>& positives,
                            Tensor* x, std::vector<int>* y) {
  std::vector<std::size_t> rows;
  std::vector<int> labs;
  rows.reserve(positives.size());
  labs.reserve(positives.size());
  for (const auto& p : positives) {
    rows.push_back(p.index);
    labs.push_back(p.label);
  }
  *x = vstack(d.xt, gather_rows(d.xu, rows));
  *y = d.yt;
  y->insert(y->end(), labs.begin(), labs.end());
}

Tensor unlabeled_without(const RunData& d, const std::vector<bool>& excluded) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.xu.rows(); ++i)
    if (!excluded[i]) rows.push_back(i);
  return gather_rows(d.xu, rows);
}

}  // namespace

double evaluate(const Model& m, const DatasetBundle& bundle) {
  return accuracy(m, stack_inputs(bundle.target_unlabeled()), bundle.hidden_labels());
}

double positive_precision(const DatasetBundle& bundle,
                          const std::vector<PseudoLabel>& positives) {
  if (positives.empty()) return 0.0;
  const std::vector<int>& hidden = bundle.hidden_labels();
  std::size_t hits = 0;
  for (const auto& p : positives) {
    if (p.index >= hidden.size())
      throw ValidationError("positive_precision: index outside the unlabeled set");
    if (p.label == hidden[p.index]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

Model pretrain_base(const RunConfig& cfg, const DatasetBundle& bundle) {
  validate_config(cfg);
  RunContext ctx(cfg.seed);
  RunData d(bundle);
  Model m = init_model(spec_for(cfg, bundle), ctx.init);
  const std::size_t steps =
      cfg.pretrain_epochs * steps_per_epoch(d.xs.rows(), cfg.batch_size);
  PhaseSchedule sch;
  sch.steps = steps;
  sch.total_steps = steps;
  sch.alpha = method_alpha(cfg.method, cfg.alpha);
  train_phase(m, d, d.xt, d.yt, d.xu, sch, cfg.optim, cfg.batch_size, ctx.train.fork());
  return m;
}

double random_selection_precision(const RunConfig& cfg, const DatasetBundle& bundle,
                                  std::size_t size) {
  validate_config(cfg);
  RunContext ctx(cfg.seed);
  RunData d(bundle);
  if (size > d.xu.rows())
    throw ValidationError("random_selection_precision: size exceeds the unlabeled set");
  Model m = init_model(spec_for(cfg, bundle), ctx.init);
  const std::size_t spe = steps_per_epoch(d.xs.rows(), cfg.batch_size);
  PhaseSchedule pre;
  pre.steps = cfg.pretrain_epochs * spe;
  pre.total_steps = (cfg.pretrain_epochs + cfg.max_outer * cfg.finetune_epochs) * spe;
  pre.alpha = method_alpha(cfg.method, cfg.alpha);
  train_phase(m, d, d.xt, d.yt, d.xu, pre, cfg.optim, cfg.batch_size, ctx.train.fork());

  const std::vector<PseudoLabel> pseudo = assign_pseudo_labels(m, d.xu);
  std::vector<std::size_t> order(pseudo.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick = ctx.loop.fork();
  pick.shuffle(order);
  std::vector<PseudoLabel> chosen;
  chosen.reserve(size);
  for (std::size_t i = 0; i < size; ++i) chosen.push_back(pseudo[order[i]]);
  return positive_precision(bundle, chosen);
}

EpisodeResult run_episode(PseudoPool& pool, QNet& qnet, ReplayPool& replay, Rng& rng,
                          const std::function<Tensor(const PseudoPool&)>& make_state,
                          const std::function<double(const PseudoLabel&)>& score,
                          double tau, double gamma, const OptimConfig& q_optim,
                          std::size_t q_batch, std::size_t* agent_step,
                          std::size_t epsilon_total_steps, TransitionLogger* logger,
                          std::size_t episode_index) {
  if (!agent_step) throw ConfigError("run_episode: missing agent step counter");
  EpisodeResult result;
  Tensor state = make_state(pool);
  std::size_t step_in_episode = 0;
  while (pool.occupied_count() > 0) {
    const double eps = epsilon_linear(*agent_step, epsilon_total_steps);
    std::vector<bool> mask(pool.capacity());
    for (std::size_t i = 0; i < pool.capacity(); ++i) mask[i] = pool.occupied(i);
    const std::size_t action = select_action(qnet, state, mask, eps, rng);
    ++*agent_step;

    const PseudoLabel picked = pool.take(action);
    const double phi = score(picked);
    const double r = binary_reward(phi, tau);
    Tensor next_state = make_state(pool);
    const bool terminal = r < 0.0 || pool.occupied_count() == 0;

    replay.insert(Transition{state, action, r, next_state, terminal});
    if (logger) logger->log(episode_index, step_in_episode, action, r, phi, terminal);
    q_update(qnet, replay.sample(q_batch, rng), gamma, q_optim);

    result.actions.push_back(action);
    result.phis.push_back(phi);
    result.rewards.push_back(r);
    ++step_in_episode;
    if (r < 0.0) {
      result.ended_negative = true;
      break;
    }
    state = std::move(next_state);
  }
  return result;
}

namespace {

RunResult run_baseline(const RunConfig& cfg, const DatasetBundle& bundle, RunContext& ctx,
                       const RunData& d) {
  Model m = init_model(spec_for(cfg, bundle), ctx.init);
  const std::size_t spe = steps_per_epoch(d.xs.rows(), cfg.batch_size);
  const std::size_t epochs = cfg.pretrain_epochs + cfg.max_outer * cfg.finetune_epochs;
  PhaseSchedule sch;
  sch.steps = epochs * spe;
  sch.total_steps = sch.steps;
  sch.union_margin = cfg.method == Method::kCml;
  sch.alpha = method_alpha(cfg.method, cfg.alpha);
  train_phase(m, d, d.xt, d.yt, d.xu, sch, cfg.optim, cfg.batch_size, ctx.train.fork());

  RunResult result;
  result.method = cfg.method;
  result.seed = cfg.seed;
  result.final_accuracy = evaluate(m, bundle);
  result.phases.push_back(PhaseRecord{"train", result.final_accuracy, 0, 0.0});
  result.model = std::move(m);
  return result;
}

RunResult run_tml_spl(const RunConfig& cfg, const DatasetBundle& bundle, RunContext& ctx,
                      const RunData& d) {
  Model m = init_model(spec_for(cfg, bundle), ctx.init);
  const std::size_t spe = steps_per_epoch(d.xs.rows(), cfg.batch_size);
  const std::size_t total =
      (cfg.pretrain_epochs + cfg.max_outer * cfg.finetune_epochs) * spe;
  const double alpha = method_alpha(cfg.method, cfg.alpha);

  PhaseSchedule sch;
  sch.steps = cfg.pretrain_epochs * spe;
  sch.total_steps = total;
  sch.alpha = alpha;
  std::size_t gstep =
      train_phase(m, d, d.xt, d.yt, d.xu, sch, cfg.optim, cfg.batch_size, ctx.train.fork());

  RunResult result;
  result.method = cfg.method;
  result.seed = cfg.seed;
  result.phases.push_back(PhaseRecord{"pretrain", evaluate(m, bundle), 0, 0.0});

  std::vector<PseudoLabel> selected;
  for (std::size_t round = 1; round <= cfg.max_outer; ++round) {
    selected = confidence_select(assign_pseudo_labels(m, d.xu), cfg.confidence_threshold);
    if (!selected.empty()) {
      Tensor xt_all;
      std::vector<int> yt_all;
      labeled_with_positives(d, selected, &xt_all, &yt_all);
      std::vector<bool> excluded(d.xu.rows(), false);
      for (const auto& p : selected) excluded[p.index] = true;
      const Tensor xu_rest = unlabeled_without(d, excluded);
      PhaseSchedule fine;
      fine.steps = cfg.finetune_epochs * spe;
      fine.total_steps = total;
      fine.start_step = gstep;
      fine.alpha = xu_rest.rows() == 0 ? 0.0 : alpha;
      gstep = train_phase(m, d, xt_all, yt_all, xu_rest, fine, cfg.optim, cfg.batch_size,
                          ctx.loop.fork());
    }
    // an empty selection skips the round's training but is still recorded
    PhaseRecord rec;
    rec.phase = "outer" + std::to_string(round);
    rec.accuracy = evaluate(m, bundle);
    rec.positives = selected.size();
    rec.positive_precision = positive_precision(bundle, selected);
    result.phases.push_back(rec);
  }

  result.final_accuracy = result.phases.back().accuracy;
  result.positives = selected;
  result.positive_precision = positive_precision(bundle, selected);
  result.model = std::move(m);
  return result;
}

RunResult run_tml_dqnpl(const RunConfig& cfg, const DatasetBundle& bundle, RunContext& ctx,
                        const RunData& d) {
  Model m = init_model(spec_for(cfg, bundle), ctx.init);
  const std::size_t spe = steps_per_epoch(d.xs.rows(), cfg.batch_size);
  const std::size_t total =
      (cfg.pretrain_epochs + cfg.max_outer * cfg.finetune_epochs) * spe;
  const double alpha = method_alpha(cfg.method, cfg.alpha);
  RewardParams reward = cfg.reward;
  reward.scale = cfg.scale;
  const double tau = reward.tau();

  PhaseSchedule pre;
  pre.steps = cfg.pretrain_epochs * spe;
  pre.total_steps = total;
  pre.alpha = alpha;
  std::size_t gstep =
      train_phase(m, d, d.xt, d.yt, d.xu, pre, cfg.optim, cfg.batch_size, ctx.train.fork());

  RunResult result;
  result.method = cfg.method;
  result.seed = cfg.seed;
  result.phases.push_back(PhaseRecord{"pretrain", evaluate(m, bundle), 0, 0.0});

  const std::vector<std::size_t> probe = probe_rows(bundle, cfg.probe_size, ctx.probe);
  const std::vector<int> hidden = bundle.hidden_labels();

  StateLayout layout{cfg.candidate_capacity, bundle.classes(), cfg.feature_dim};
  QNet qnet = init_qnet(layout, cfg.qnet_hidden1, cfg.qnet_hidden2, ctx.agent);
  ReplayPool replay(cfg.replay_capacity);
  std::optional<TransitionLogger> logger;
  if (!cfg.transition_log_path.empty()) logger.emplace(cfg.transition_log_path);

  std::vector<PseudoLabel> dp;  // persistent positive set
  std::vector<bool> in_dp(d.xu.rows(), false);
  std::size_t agent_step = 0;
  double best_probe = -1.0;
  std::size_t stall = 0;

  for (std::size_t outer = 1; outer <= cfg.max_outer; ++outer) {
    const std::vector<PseudoLabel> pseudo = assign_pseudo_labels(m, d.xu);
    std::vector<PseudoLabel> available;
    for (const auto& p : pseudo)
      if (!in_dp[p.index]) available.push_back(p);

    EpisodeLog elog;
    elog.outer = outer;
    if (available.size() >= cfg.candidate_capacity) {
      PseudoPool pool =
          init_candidate_set(available, cfg.candidate_capacity, ctx.loop.next_u64());
      for (std::size_t slot = 0; slot < pool.capacity(); ++slot) {
        elog.candidate_indices.push_back(pool.slot(slot).index);
        elog.candidate_labels.push_back(pool.slot(slot).label);
      }

      Model trial = m;
      trial.params.zero_momentum();
      const double frozen_progress =
          std::min(1.0, static_cast<double>(gstep) / static_cast<double>(total));
      Rng clone_rng = ctx.loop.fork();

      auto labeled_now = [&](const PseudoPool& p, Tensor* x, std::vector<int>* y) {
        std::vector<PseudoLabel> all = dp;
        all.insert(all.end(), p.positives().begin(), p.positives().end());
        labeled_with_positives(d, all, x, y);
      };

      auto make_state = [&](const PseudoPool& p) {
        Tensor lx;
        std::vector<int> ly;
        labeled_now(p, &lx, &ly);
        return build_state(layout, p, trial, lx, ly, d.xu);
      };

      auto score = [&](const PseudoLabel& picked) {
        Tensor lx;
        std::vector<int> ly;
        labeled_now(pool, &lx, &ly);
        const double h_before = mean_entropy(trial, d.xu);
        PhaseSchedule one;
        one.steps = cfg.clone_epochs *
                    steps_per_epoch(d.xs.rows() + lx.rows(), cfg.batch_size);
        one.total_steps = total;
        one.fixed_progress = frozen_progress;
        train_phase(trial, d, lx, ly, d.xu, one, cfg.optim, cfg.batch_size,
                    clone_rng.fork());
        const double h_after = mean_entropy(trial, d.xu);
        const Tensor xrow = gather_rows(d.xu, {picked.index});
        const double log_pc =
            class_log_probs_eval(trial, xrow).at(0, static_cast<std::size_t>(picked.label));
        const Tensor centers = class_centers(trial, lx, ly);
        const double log_pf =
            center_log_probs(features_eval(trial, xrow), centers, cfg.scale)
                .at(0, static_cast<std::size_t>(picked.label));
        return selection_metric(log_pc, log_pf, h_before - h_after, reward);
      };

      EpisodeResult er =
          run_episode(pool, qnet, replay, ctx.agent, make_state, score, tau, cfg.gamma,
                      cfg.q_optim, cfg.q_batch, &agent_step, cfg.epsilon_total_steps,
                      logger ? &*logger : nullptr, outer - 1);
      elog.actions = er.actions;
      elog.rewards = er.rewards;
      elog.phis = er.phis;
      for (const auto& p : pool.positives()) {
        dp.push_back(p);
        in_dp[p.index] = true;
      }
    }
    result.episodes.push_back(elog);

    // main-model update with the positives as labeled target data
    Tensor xt_all;
    std::vector<int> yt_all;
    labeled_with_positives(d, dp, &xt_all, &yt_all);
    const Tensor xu_rest = unlabeled_without(d, in_dp);
    PhaseSchedule fine;
    fine.steps = cfg.finetune_epochs * spe;
    fine.total_steps = total;
    fine.start_step = gstep;
    fine.alpha = xu_rest.rows() == 0 ? 0.0 : alpha;
    gstep = train_phase(m, d, xt_all, yt_all, xu_rest, fine, cfg.optim, cfg.batch_size,
                        ctx.loop.fork());

    PhaseRecord rec;
    rec.phase = "outer" + std::to_string(outer);
    rec.accuracy = evaluate(m, bundle);
    rec.positives = dp.size();
    rec.positive_precision = positive_precision(bundle, dp);
    result.phases.push_back(rec);

    const double pacc = probe_accuracy(m, d.xu, hidden, probe);
    if (pacc > best_probe) {
      best_probe = pacc;
      stall = 0;
    } else if (++stall >= cfg.early_stop_patience) {
      break;
    }
  }

  result.final_accuracy = result.phases.back().accuracy;
  result.positives = dp;
  result.positive_precision = positive_precision(bundle, dp);
  result.model = std::move(m);
  return result;
}

}  // namespace

RunResult run_method(const RunConfig& cfg, const DatasetBundle& bundle) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx(cfg.seed);
  RunData d(bundle);
  RunResult result;
  switch (cfg.method) {
    case Method::kSPlusT:
    case Method::kEnt:
    case Method::kTml:
    case Method::kCml:
      result = run_baseline(cfg, bundle, ctx, d);
      break;
    case Method::kTmlSpl:
      result = run_tml_spl(cfg, bundle, ctx, d);
      break;
    case Method::kTmlDqnpl:
      result = run_tml_dqnpl(cfg, bundle, ctx, d);
      break;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace pseudopilot
