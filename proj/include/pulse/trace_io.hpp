#pragma once

#include <filesystem>

#include "pulse/mstmap.hpp"

namespace pulse {

/// Reads `frame,roi,channel,value` CSV plus a sidecar JSON with
/// {fs, subject_id, channel_names}. `channel` may be a name from the sidecar
/// or a zero-based index. Throws FormatError on malformed or incomplete data.
RoiTraceSet read_traces(const std::filesystem::path& csv, const std::filesystem::path& sidecar);

/// Writes the same format; values use round-trip precision.
void write_traces(const RoiTraceSet& traces, const std::filesystem::path& csv,
                  const std::filesystem::path& sidecar);

/// Sidecar path convention: `<stem>.json` next to the CSV.
std::filesystem::path sidecar_for(const std::filesystem::path& csv);

}  // namespace pulse
