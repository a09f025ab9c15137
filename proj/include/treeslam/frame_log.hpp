#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "treeslam/simulator.hpp"

namespace treeslam {

/// One JSON object per line:
///   {"frame": n, "odom": {"dx", "dy", "dtheta"}, "gps": {"x", "y", "sigma"} | null,
///    "detections": [{"bbox": [x0, y0, x1, y1], "conf", "range", "bearing",
///                    "cloud"?: {"camera_origin": [x, y, z], "points": [[x, y, z], ...]}}]}
std::string frame_to_json_line(const FrameRecord& frame);

void write_frame_log(std::ostream& out, std::span<const FrameRecord> frames);
void write_frame_log(const std::filesystem::path& path, std::span<const FrameRecord> frames);

/// Parses and validates a whole log. Throws SchemaError naming the frame
/// (or line, when the frame number itself is unreadable).
std::vector<FrameRecord> read_frame_log(std::istream& in);
std::vector<FrameRecord> read_frame_log(const std::filesystem::path& path);

}  // namespace treeslam
