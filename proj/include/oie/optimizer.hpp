#pragma once

#include <vector>

#include "oie/autodiff.hpp"

namespace oie {

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay, bias-corrected moments. Moment buffers exist only
// for the parameters that are trainable at construction time; everything
// else is left untouched by step().
class AdamW {
 public:
  AdamW(const std::vector<Parameter*>& params, AdamWConfig cfg);

  void step();
  void zero_grad();
  int step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  int step_ = 0;
};

}  // namespace oie
