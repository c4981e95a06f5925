#pragma once

#include <string>
#include <vector>

#include "palmar/types.hpp"

namespace palmar {

// Frame file: UTF-8 JSONL, one object per line:
//   {"t": <seconds>, "sensor": "lidar"|"mmwave"|"synthetic", "points": [[x,y,z], ...]}
// "sensor" defaults to "synthetic" when absent. Numbers round-trip exactly.

/// Reads a JSONL frame sequence. Throws ParseError (with line number) on
/// malformed input and ValidationError on non-finite points or timestamps
/// that are not monotone non-decreasing.
std::vector<Frame> read_frames(const std::string& path);

/// Writes frames as JSONL. Spherical-form frames and non-finite coordinates
/// are rejected (only Cartesian frames persist).
void write_frames(const std::vector<Frame>& frames, const std::string& path);

// Ground truth file: JSONL
//   {"t": <seconds>, "persons": [{"id": <int>, "c": [x,y,z], "act": <string>}]}
GroundTruth read_ground_truth(const std::string& path);
void write_ground_truth(const GroundTruth& truth, const std::string& path);

}  // namespace palmar
