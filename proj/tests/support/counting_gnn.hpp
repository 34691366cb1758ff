// Reference GNN forward pass written with scalar loops. Every multiply and add
// goes through a counter so the operation count of one symbol can be compared
// with the closed-form totals. Edge terms W_b z_b and W_u z_u are evaluated per
// edge, a mean costs (count - 1) adds per feature plus one scaling multiply.
#pragma once

#include "qprec/energy.hpp"
#include "qprec/gnn.hpp"

#include <vector>

namespace qprec::testing {

struct CountedForward {
  std::vector<std::vector<double>> logits;  // M rows of 2L
  OpCount input, hidden_total, output;
};

CountedForward counted_forward(const ChannelMatrix& channel, const CVector& symbol,
                               const BasicGnnWeights<double>& weights, const GnnConfig& config);

}  // namespace qprec::testing
