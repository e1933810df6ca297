#pragma once

#include <cstdint>
#include <unordered_set>

namespace prpo {

// Rollout cost accounting. A prefill event is the presentation of a distinct
// generation context (query, segment, memory lineage) to the policy; decode
// events count emitted tokens; reward events count reward evaluations that
// can carry signal. These counters are the measurable surrogate for the
// prefill-complexity and reward-density claims.
struct CostCounters {
    uint64_t prefill_events = 0;
    uint64_t decode_events = 0;
    uint64_t reward_events = 0;

    CostCounters& operator+=(const CostCounters& other) {
        prefill_events += other.prefill_events;
        decode_events += other.decode_events;
        reward_events += other.reward_events;
        return *this;
    }
};

// Order-independent sink: generation reports one prefill per call keyed by
// context identity and the sink deduplicates, so G rollouts sharing one
// context cost a single prefill.
class CounterSink {
  public:
    void prefill(uint64_t context_id) {
        if (seen_.insert(context_id).second) ++counters_.prefill_events;
    }
    void decode(uint64_t tokens) { counters_.decode_events += tokens; }
    void reward(uint64_t evaluations) { counters_.reward_events += evaluations; }

    const CostCounters& counters() const { return counters_; }

  private:
    CostCounters counters_;
    std::unordered_set<uint64_t> seen_;
};

}  // namespace prpo
