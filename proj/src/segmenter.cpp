#include "crowdmod/segmenter.hpp"

namespace crowdmod {

void SegmentationPolicy::validate() const {
  if (tau <= Millis{0}) throw Error(ErrorCode::InvalidConfig, "segmentation.tau must be positive");
}

std::vector<TimelineSlice> segment_timeline(Millis duration, const SegmentationPolicy& policy) {
  policy.validate();
  if (duration <= Millis{0}) throw Error(ErrorCode::InvalidArgument, "duration must be positive");

  std::vector<TimelineSlice> out;
  if (duration < policy.tau) {
    out.push_back({{Millis{0}, duration}, true});
    return out;
  }

  const auto full = duration / policy.tau;
  const Millis remainder = duration % policy.tau;
  out.reserve(static_cast<std::size_t>(full) + 1);
  for (std::int64_t k = 0; k < full; ++k) {
    out.push_back({{policy.tau * k, policy.tau * (k + 1)}, false});
  }
  if (remainder > Millis{0}) {
    if (policy.merge_remainder) {
      out.back().interval.end = duration;
    } else {
      out.push_back({{policy.tau * full, duration}, false});
    }
  }
  return out;
}

}  // namespace crowdmod
