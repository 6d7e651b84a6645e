#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pseudopilot/model.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/rl.hpp"

namespace pseudopilot {

// One release-gate check: numeric oracles for the losses and the agent
// (gradient checks, loss equivalences, reward boundary, replay statistics).
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured numbers; failure reason when !pass
};

// Runs the whole suite (seeded, deterministic, a few seconds).
std::vector<CheckResult> run_self_checks();

// Prints the pass/fail table; returns 0 when everything passes, 3 otherwise.
int cmd_validate(std::ostream& out);

// Largest relative error between `analytic` and central finite differences
// of `f` over every parameter entry, with a fixed absolute step. The
// denominator is floored at 1e-3, so tiny gradients are compared near-
// absolutely. `f` must be a pure function of the store.
double max_grad_rel_err(const ParamStore& params,
                        const std::function<double(const ParamStore&)>& f,
                        const GradMap& analytic, double step);

// True when this batch keeps every finite-difference probe away from the
// network's non-smooth points: relu pre-activations clear of the kink,
// feature rows clear of zero norm, cosines clear of the clamp edge (where
// the margin's derivative also blows up). Random-draw checks redraw
// degenerate configurations instead of loosening tolerances.
bool gradient_probe_safe(const Model& m, const Tensor& x);
bool gradient_probe_safe(const QNet& q, const Tensor& states);

}  // namespace pseudopilot
