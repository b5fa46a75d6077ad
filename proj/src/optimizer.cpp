#include "oie/optimizer.hpp"

#include <cmath>

namespace oie {

AdamW::AdamW(const std::vector<Parameter*>& params, AdamWConfig cfg)
    : cfg_(cfg) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    slots_.push_back({p, Tensor::zeros(p->value.shape), Tensor::zeros(p->value.shape)});
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (Slot& s : slots_) {
    if (!s.param->trainable) continue;
    Tensor& value = s.param->value;
    const Tensor& grad = s.param->grad;
    for (int i = 0; i < value.numel(); ++i) {
      const double g = grad.at(i);
      s.m.at(i) = cfg_.beta1 * s.m.at(i) + (1.0 - cfg_.beta1) * g;
      s.v.at(i) = cfg_.beta2 * s.v.at(i) + (1.0 - cfg_.beta2) * g * g;
      const double mhat = s.m.at(i) / bc1;
      const double vhat = s.v.at(i) / bc2;
      value.at(i) -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                cfg_.weight_decay * value.at(i));
    }
  }
}

void AdamW::zero_grad() {
  for (Slot& s : slots_) s.param->zero_grad();
}

}  // namespace oie
