#include "skin/adam.hpp"

#include <cmath>

namespace skin {

void adam_step(Tensor& param, AdamState& state, const AdamHyper& hyper) {
    if (!param.has_grad()) {
        throw ContractError("adam_step: parameter " + shape_str(param.shape()) + " has no gradient");
    }
    if (state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
        if (state.t != 0) {
            throw ContractError("adam_step: moment buffers do not match parameter " +
                                shape_str(param.shape()));
        }
        state.m = Tensor(param.shape());
        state.v = Tensor(param.shape());
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    auto g = param.grad();
    auto theta = param.data();
    auto m = state.m.data();
    auto v = state.v.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        theta[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

}  // namespace skin
