// Per-step training records: NLL in nats and bits/dim, then per layer the
// batch-mean log-determinant, pooled output variance and parameter-gradient
// norm. Event lines record skipped steps and divergence.
#pragma once

#include <flowdet/types.hpp>

#include <string>
#include <utility>
#include <vector>

namespace flowdet {

struct StepRecord {
  Real nll_nats = 0;
  Real nll_bpd = 0;
  Vector logdet;    // one entry per layer
  Vector var;
  Vector gradnorm;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<std::pair<Index, std::string>> events;  // (step, message)

  Index layer_count() const {
    return steps.empty() ? 0 : steps.front().logdet.size();
  }
};

}  // namespace flowdet
