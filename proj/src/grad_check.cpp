// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "voxadapt/ops.hpp"
#include "voxadapt/random.hpp"

namespace voxadapt {
namespace {

Var<double> reduce(Var<double> out, std::uint64_t projection_seed) {
  if (out.value().size() == 1) return out;
  Rng rng(projection_seed);
  Tensor<double> w(out.shape());
  for (double& v : w.storage()) v = rng.uniform(-1.0, 1.0);
  return ops::weighted_sum(out, w);
}

struct Evaluation {
  double loss = 0.0;
  std::vector<Tensor<double>> grads;
};

Evaluation evaluate(const GradClosure& closure, const std::vector<Tensor<double>>& inputs,
                    std::uint64_t projection_seed, bool want_grads) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(tape.variable(in));
  const Var<double> out = reduce(closure(tape, leaves), projection_seed);
  Evaluation e;
  e.loss = out.value()[0];
  if (want_grads) {
    tape.backward(out);
    for (const auto& leaf : leaves) e.grads.push_back(tape.grad(leaf));
  }
  return e;
}

void record_error(GradCheckResult& r, double analytic, double numeric, const std::string& where) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
  if (err > r.max_rel_error || r.worst.empty()) {
    r.max_rel_error = err;
    r.worst = where;
  }
}

}  // namespace

GradCheckResult grad_check(const GradClosure& closure, const std::vector<Tensor<double>>& inputs,
                           double tol, std::uint64_t projection_seed) {
  const Evaluation analytic = evaluate(closure, inputs, projection_seed, true);
  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t a = 0; a < probe.size(); ++a) {
    for (std::size_t i = 0; i < probe[a].size(); ++i) {
      const double saved = probe[a][i];
      probe[a][i] = saved + kFiniteDifferenceStep;
      const double plus = evaluate(closure, probe, projection_seed, false).loss;
      probe[a][i] = saved - kFiniteDifferenceStep;
      const double minus = evaluate(closure, probe, projection_seed, false).loss;
      probe[a][i] = saved;
      const double numeric = (plus - minus) / (2.0 * kFiniteDifferenceStep);
      record_error(result, analytic.grads[a][i], numeric, "input " + std::to_string(a));
    }
  }
  result.passed = result.max_rel_error <= tol;
  return result;
}

GradCheckResult grad_check_params(const ParamClosure& closure, ParameterSet<double>& params, double tol,
                                  std::uint64_t projection_seed) {
  const auto loss_of = [&] {
    Tape<double> tape;
    return reduce(closure(tape, params), projection_seed).value()[0];
  };
  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(reduce(closure(tape, params), projection_seed), params);
  }
  std::map<std::string, Tensor<double>> analytic;
  for (const auto& [name, p] : params)
    if (p.trainable) analytic.emplace(name, p.grad);
  params.zero_grad();

  GradCheckResult result;
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + kFiniteDifferenceStep;
      const double plus = loss_of();
      p.value[i] = saved - kFiniteDifferenceStep;
      const double minus = loss_of();
      p.value[i] = saved;
      record_error(result, analytic.at(name)[i], (plus - minus) / (2.0 * kFiniteDifferenceStep), name);
    }
  }
  result.passed = result.max_rel_error <= tol;
  return result;
}

}  // namespace voxadapt
