#pragma once

#include <string>
#include <string_view>

namespace vkd {

enum class Activation { kRelu, kGelu, kTanh };

// GELU uses the tanh approximation
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double activate(Activation act, double x);
// Derivative with respect to the pre-activation x.
double activate_grad(Activation act, double x);

Activation parse_activation(std::string_view name);
std::string to_string(Activation act);

}  // namespace vkd
