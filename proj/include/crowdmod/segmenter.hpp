#pragma once

#include <vector>

#include "crowdmod/model.hpp"

namespace crowdmod {

struct SegmentationPolicy {
  Millis tau{140'000};
  /// Fold a trailing slice shorter than tau into the last segment.
  bool merge_remainder = true;

  void validate() const;
};

struct TimelineSlice {
  Interval interval;
  /// Set when the whole video is shorter than tau.
  bool short_segment = false;

  bool operator==(const TimelineSlice&) const = default;
};

/// Partition [0, duration) into contiguous disjoint slices of at least tau.
/// With merge_remainder every slice has length in [tau, 2*tau) once
/// duration >= tau. Throws InvalidArgument on a non-positive duration.
std::vector<TimelineSlice> segment_timeline(Millis duration, const SegmentationPolicy& policy);

}  // namespace crowdmod
