#include "skin/params.hpp"

#include "skin/ops.hpp"

namespace skin {

void accumulate_grads(const ParamList& params, const ParamList& grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("accumulate_grads: parameter lists differ in length");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].tensor->enable_grad();
        ops::add_into(params[i].tensor->grad(), grads[i].tensor->data());
    }
}

void zero_values(const ParamList& list) {
    for (const auto& p : list) {
        p.tensor->fill(0.0);
    }
}

void enable_grads(const ParamList& params) {
    for (const auto& p : params) {
        p.tensor->enable_grad();
    }
}

void zero_grads(const ParamList& params) {
    for (const auto& p : params) {
        p.tensor->zero_grad();
    }
}

}  // namespace skin
