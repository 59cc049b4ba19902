#pragma once

#include <string>

#include "retinavit/probe.hpp"

namespace retinavit {

// One SVG per probed quantity: stacked per-layer line panels, input layer
// at the top, red markers on each x-axis at the level boundaries.
// quantity: 0 = attention weights, 1 = attention scores, 2 = residual sums.
std::string render_probe_svg(const ProbeReport& report, int quantity);

std::string quantity_name(int quantity);  // "attention_weights", ...

}  // namespace retinavit
