#include "light4gs/nn/optim.hpp"

#include "light4gs/errors.hpp"

namespace l4gs::nn {

void sgd_step(std::span<Parameter* const> params, double lr, double momentum) {
  for (const auto* p : params)
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  for (auto* p : params) {
    auto& v = p->velocity;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = momentum * v[i] + p->grad[i];
      p->value[i] -= lr * v[i];
    }
    p->zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace l4gs::nn
