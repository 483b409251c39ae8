#pragma once

#include <map>
#include <string>
#include <vector>

#include "czsl/tensor.hpp"

namespace czsl {

// A named learnable tensor. Frozen parameters still flow gradients but are
// never modified by an optimizer step.
struct Parameter {
  Tensor tensor;
  std::string name;
  bool frozen = false;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain gradient descent or Adam. Moment buffers are keyed by parameter name
// so state survives a checkpoint round trip.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Applies one update using each parameter's accumulated gradient. Every
  // non-frozen parameter must hold a gradient. `lr` overrides cfg.lr so the
  // training loop can apply a schedule.
  void step(const std::vector<Parameter*>& params, double lr);
  void step(const std::vector<Parameter*>& params) { step(params, cfg_.lr); }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_count_; }

  // Serialization hooks for checkpointing.
  struct State {
    std::int64_t step_count = 0;
    std::map<std::string, std::vector<double>> first_moment;
    std::map<std::string, std::vector<double>> second_moment;
  };
  State export_state() const;
  void import_state(const State& s);

 private:
  OptimizerConfig cfg_;
  std::int64_t step_count_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace czsl
