#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "pulse/error.hpp"
#include "pulse/mstmap.hpp"

namespace pulse {
namespace {

constexpr char kMagic[8] = {'P', 'S', 'U', 'M', 'A', 'P', '0', '1'};

static_assert(std::endian::native == std::endian::little, "map I/O assumes a little-endian host");

nlohmann::json row_index_json(const std::vector<RowIndex>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back({r.roi_mask, r.channel});
  return arr;
}

std::vector<RowIndex> row_index_from(const nlohmann::json& j) {
  std::vector<RowIndex> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw FormatError("bad row_index entry");
    out.push_back({e[0].get<std::uint32_t>(), e[1].get<int>()});
  }
  return out;
}

void write_file(const std::filesystem::path& path, const nlohmann::json& header, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw FormatError("short write to " + path.string());
}

struct RawMap {
  nlohmann::json header;
  std::vector<float> data;
};

RawMap read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 4) throw FormatError("map file truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("map file has wrong magic");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kMagic, sizeof len);
  const std::size_t payload_at = sizeof kMagic + 4 + static_cast<std::size_t>(len);
  if (bytes.size() < payload_at) throw FormatError("map header truncated");

  RawMap raw;
  try {
    raw.header = nlohmann::json::parse(bytes.begin() + sizeof kMagic + 4, bytes.begin() + static_cast<std::ptrdiff_t>(payload_at));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("map header: ") + e.what());
  }
  if (!raw.header.contains("shape") || !raw.header["shape"].is_array()) throw FormatError("map header lacks shape");
  std::size_t count = 1;
  for (const auto& d : raw.header["shape"]) {
    const auto v = d.get<long long>();
    if (v < 0) throw FormatError("negative map dimension");
    count *= static_cast<std::size_t>(v);
  }
  if (bytes.size() - payload_at != count * sizeof(float)) throw FormatError("map payload truncated or oversized");
  raw.data.resize(count);
  std::memcpy(raw.data.data(), bytes.data() + payload_at, count * sizeof(float));
  return raw;
}

}  // namespace

void write_map(const std::filesystem::path& path, const SignalMap& map) {
  nlohmann::json header{{"kind", to_string(map.kind)},
                        {"shape", {map.rows, map.length}},
                        {"fs", map.fs},
                        {"layout", nullptr},
                        {"row_index", row_index_json(map.row_index)}};
  write_file(path, header, map.data);
}

void write_map(const std::filesystem::path& path, const StackedMap& map) {
  const auto& l = map.layout;
  nlohmann::json layout{{"chunks", l.chunks},     {"groups", l.groups},     {"channels", l.channels},
                        {"length", l.length},     {"pad_rows", l.pad_rows}, {"pad_cols", l.pad_cols},
                        {"order", "chunk0-top"}};
  nlohmann::json header{{"kind", to_string(map.kind)},
                        {"shape", {map.height, map.width, map.channels}},
                        {"fs", map.fs},
                        {"layout", layout},
                        {"row_index", row_index_json(map.row_index)}};
  write_file(path, header, map.image);
}

SignalMap read_signal_map(const std::filesystem::path& path) {
  auto raw = read_file(path);
  try {
    const auto& h = raw.header;
    if (h["shape"].size() != 2 || !h["layout"].is_null()) throw FormatError("not a 2-D signal map");
    SignalMap map;
    map.kind = map_kind_from_string(h.at("kind").get<std::string>());
    map.rows = h["shape"][0].get<int>();
    map.length = h["shape"][1].get<int>();
    map.fs = h.at("fs").get<double>();
    map.row_index = row_index_from(h.at("row_index"));
    map.data = std::move(raw.data);
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("map header: ") + e.what());
  }
}

StackedMap read_stacked_map(const std::filesystem::path& path) {
  auto raw = read_file(path);
  try {
    const auto& h = raw.header;
    if (h["shape"].size() != 3 || !h["layout"].is_object()) throw FormatError("not a stacked map");
    StackedMap map;
    map.kind = map_kind_from_string(h.at("kind").get<std::string>());
    map.height = h["shape"][0].get<int>();
    map.width = h["shape"][1].get<int>();
    map.channels = h["shape"][2].get<int>();
    map.fs = h.at("fs").get<double>();
    const auto& l = h["layout"];
    map.layout = {l.at("chunks").get<int>(),  l.at("groups").get<int>(),   l.at("channels").get<int>(),
                  l.at("length").get<int>(),  l.at("pad_rows").get<int>(), l.at("pad_cols").get<int>()};
    if (l.value("order", std::string("chunk0-top")) != "chunk0-top") throw FormatError("unknown chunk order");
    map.row_index = row_index_from(h.at("row_index"));
    map.image = std::move(raw.data);
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("map header: ") + e.what());
  }
}

}  // namespace pulse
