#include "pulse/trace_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/error.hpp"

namespace pulse {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

int parse_int(const std::string& s, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("bad value '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("bad value '" + s + "'");
  }
}

}  // namespace

std::filesystem::path sidecar_for(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

RoiTraceSet read_traces(const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
  std::ifstream meta_in(sidecar);
  if (!meta_in) throw FormatError("cannot open sidecar " + sidecar.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar " + sidecar.string() + ": " + e.what());
  }
  if (!meta.contains("fs") || !meta["fs"].is_number()) throw FormatError("sidecar lacks numeric fs");

  std::ifstream in(csv);
  if (!in) throw FormatError("cannot open trace CSV " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trace CSV is empty");
  const auto header = split_csv(line);
  if (header != std::vector<std::string>{"frame", "roi", "channel", "value"})
    throw FormatError("trace CSV header must be frame,roi,channel,value");

  std::vector<std::string> names;
  if (meta.contains("channel_names")) names = meta["channel_names"].get<std::vector<std::string>>();

  struct Entry {
    int frame, roi, channel;
    double value;
  };
  std::vector<Entry> entries;
  int max_frame = -1, max_roi = -1, max_channel = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw FormatError("trace CSV row must have 4 fields: " + line);
    Entry e{parse_int(f[0], "frame"), parse_int(f[1], "roi"), -1, parse_double(f[3])};
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == f[2]) e.channel = static_cast<int>(i);
    if (e.channel < 0) e.channel = parse_int(f[2], "channel");
    if (e.frame < 0 || e.roi < 0) throw FormatError("negative frame or roi index");
    max_frame = std::max(max_frame, e.frame);
    max_roi = std::max(max_roi, e.roi);
    max_channel = std::max(max_channel, e.channel);
    entries.push_back(e);
  }
  if (entries.empty()) throw FormatError("trace CSV has no rows");

  const int n_channels = names.empty() ? max_channel + 1 : static_cast<int>(names.size());
  if (max_channel >= n_channels) throw FormatError("channel index exceeds channel_names");
  RoiTraceSet traces(max_roi + 1, n_channels, max_frame + 1, meta["fs"].get<double>());
  traces.subject_id = meta.value("subject_id", std::string{});
  traces.channel_names = names;

  std::vector<char> seen(traces.values.size(), 0);
  for (const auto& e : entries) {
    const std::size_t idx = (static_cast<std::size_t>(e.roi) * n_channels + e.channel) * traces.length + e.frame;
    if (seen[idx]) throw FormatError("duplicate trace entry");
    seen[idx] = 1;
    traces.values[idx] = e.value;
  }
  for (char s : seen)
    if (!s) throw FormatError("trace CSV does not cover every (frame, roi, channel)");
  try {
    traces.validate();
  } catch (const InputError& e) {
    throw FormatError(e.what());
  }
  return traces;
}

void write_traces(const RoiTraceSet& traces, const std::filesystem::path& csv,
                  const std::filesystem::path& sidecar) {
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw FormatError("cannot write " + csv.string());
  out << "frame,roi,channel,value\n";
  char buf[64];
  for (int t = 0; t < traces.length; ++t) {
    for (int r = 0; r < traces.n_rois; ++r) {
      for (int c = 0; c < traces.n_channels; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", traces.at(r, c, t));
        out << t << ',' << r << ','
            << (traces.channel_names.empty() ? std::to_string(c) : traces.channel_names[c]) << ',' << buf
            << '\n';
      }
    }
  }
  nlohmann::json meta{{"fs", traces.fs}, {"subject_id", traces.subject_id}, {"channel_names", traces.channel_names}};
  std::ofstream meta_out(sidecar, std::ios::binary);
  if (!meta_out) throw FormatError("cannot write " + sidecar.string());
  meta_out << meta.dump(2) << '\n';
}

}  // namespace pulse
