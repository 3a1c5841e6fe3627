#pragma once

#include <string>
#include <vector>

#include "skin/tensor.hpp"

namespace skin {

// How regularization treats a parameter: L2 applies to weights only.
enum class ParamRole { weight, bias, norm };

struct ParamRef {
    std::string name;
    Tensor* tensor;
    ParamRole role;
};

using ParamList = std::vector<ParamRef>;

// Adds every gradient-model value into the matching parameter's grad buffer.
// Lists must come from two instances of the same model type.
void accumulate_grads(const ParamList& params, const ParamList& grads);
void zero_values(const ParamList& list);
void enable_grads(const ParamList& params);
void zero_grads(const ParamList& params);

}  // namespace skin
