#include "czsl/optim.hpp"

#include <cmath>

#include "czsl/error.hpp"

namespace czsl {

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  fail(ErrorKind::config, "unknown optimizer '", s, "' (expected sgd|adam)");
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

void Optimizer::step(const std::vector<Parameter*>& params, double lr) {
  check(lr >= 0.0, ErrorKind::config, "learning rate must be >= 0, got ", lr);
  for (Parameter* p : params) {
    check(p && p->tensor.defined(), ErrorKind::contract,
          "optimizer: undefined parameter");
    if (p->frozen) continue;
    check(p->tensor.has_grad(), ErrorKind::contract, "optimizer: parameter '",
          p->name, "' has no gradient");
  }
  ++step_count_;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    auto& w = p->tensor.raw_values();
    const auto& g = p->tensor.grad();
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    } else {
      auto& m = m_[p->name];
      auto& v = v_[p->name];
      if (m.empty()) m.assign(w.size(), 0.0);
      if (v.empty()) v.assign(w.size(), 0.0);
      check(m.size() == w.size() && v.size() == w.size(), ErrorKind::state,
            "optimizer: moment size mismatch for '", p->name, "'");
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }
}

Optimizer::State Optimizer::export_state() const {
  return State{step_count_, m_, v_};
}

void Optimizer::import_state(const State& s) {
  step_count_ = s.step_count;
  m_ = s.first_moment;
  v_ = s.second_moment;
}

}  // namespace czsl
