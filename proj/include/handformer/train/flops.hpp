#pragma once

#include <string>
#include <vector>

#include "handformer/model/handformer.hpp"

namespace handformer::train {

struct FlopsEntry {
  std::string component;
  double gflops = 0;  // per invocation
  double count = 0;   // invocations per segment
  double total() const { return gflops * count; }
};

struct FlopsLedger {
  std::string method;
  std::vector<FlopsEntry> entries;
  double total() const;
  // Sum of entry totals whose component starts with `prefix`.
  double subtotal(const std::string& prefix) const;
};

// Published component table of HandFormer-B/21 at 162 frames with K = 8.
FlopsLedger paper_flops_table();
// Published single-entry total of the TSM video baseline.
FlopsLedger tsm_flops_table();

// Analytical count of one forward pass of this implementation: 2mn per m x n
// matrix-vector product, 2 Cin k Cout Lout per 1-D convolution, 4 n^2 d for
// the score and value products of an attention layer. Normalizations,
// activations and softmax are not counted.
FlopsLedger count_model_flops(const model::ModelConfig& cfg);

// One `component,gflops,count,total` row per entry, then `TOTAL,,,<total>`.
std::string format_ledger(const FlopsLedger& ledger);

}  // namespace handformer::train
