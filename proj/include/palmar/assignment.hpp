#pragma once

#include <vector>

#include "palmar/types.hpp"

namespace palmar {

/// Minimum-cost one-to-one assignment (Hungarian algorithm with potentials).
/// cost is rows x cols; returns for each row the assigned column or -1.
/// Every row is matched when rows <= cols (and vice versa), so gating is the
/// caller's job: see min_cost_assignment_gated.
std::vector<int> min_cost_assignment(const MatX& cost);

/// Assignment where pairs with cost > gate are forbidden (left unassigned).
std::vector<int> min_cost_assignment_gated(const MatX& cost, double gate);

}  // namespace palmar
