#include "pulse/params.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "pulse/error.hpp"

namespace pulse {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'S', 'U', 'C', 'K', 'P', 'T', '1'};

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

ag::Tensor ParameterStore::add(const std::string& name, std::vector<int> shape, std::vector<double> values) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  for (double& v : values) v = to_float(v);
  auto t = ag::Tensor::leaf(std::move(shape), std::move(values), true);
  entries_.push_back({name, t, false});
  return t;
}

std::size_t ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return entries_.size();
}

const ag::Tensor& ParameterStore::get(const std::string& name) const {
  const auto i = find(name);
  if (i == entries_.size()) throw ConfigError("unknown parameter " + name);
  return entries_[i].tensor;
}

bool ParameterStore::contains(const std::string& name) const { return find(name) != entries_.size(); }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterStore::set_frozen(const std::string& name, bool frozen) {
  const auto i = find(name);
  if (i == entries_.size()) throw ConfigError("unknown parameter " + name);
  entries_[i].frozen = frozen;
  entries_[i].tensor.set_requires_grad(!frozen);
}

void ParameterStore::freeze_all_except(const std::vector<std::string>& trainable) {
  const std::set<std::string> keep(trainable.begin(), trainable.end());
  for (const auto& name : keep)
    if (!contains(name)) throw ConfigError("unknown parameter " + name);
  for (auto& e : entries_) {
    e.frozen = !keep.contains(e.name);
    e.tensor.set_requires_grad(!e.frozen);
  }
}

void ParameterStore::unfreeze_all() {
  for (auto& e : entries_) {
    e.frozen = false;
    e.tensor.set_requires_grad(true);
  }
}

std::vector<std::string> ParameterStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (!e.frozen) out.push_back(e.name);
  return out;
}

void ParameterStore::round_to_float() {
  for (auto& e : entries_)
    for (double& v : e.tensor.mutable_value()) v = to_float(v);
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const nlohmann::json& config) {
  nlohmann::json header;
  header["config"] = config;
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : store.entries()) header["tensors"].push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : store.entries()) {
    std::vector<float> buf(e.tensor.value().begin(), e.tensor.value().end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

namespace {

struct RawCheckpoint {
  nlohmann::json header;
  std::string bytes;
  std::size_t payload_at = 0;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  RawCheckpoint raw;
  raw.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (raw.bytes.size() < sizeof kMagic + 4) throw FormatError("checkpoint truncated");
  if (std::memcmp(raw.bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("checkpoint has wrong magic");
  std::uint32_t len = 0;
  std::memcpy(&len, raw.bytes.data() + sizeof kMagic, sizeof len);
  raw.payload_at = sizeof kMagic + 4 + static_cast<std::size_t>(len);
  if (raw.bytes.size() < raw.payload_at) throw FormatError("checkpoint header truncated");
  try {
    raw.header = nlohmann::json::parse(raw.bytes.begin() + sizeof kMagic + 4,
                                       raw.bytes.begin() + static_cast<std::ptrdiff_t>(raw.payload_at));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (!raw.header.contains("tensors") || !raw.header["tensors"].is_array())
    throw FormatError("checkpoint header lacks a tensor table");
  return raw;
}

}  // namespace

nlohmann::json read_checkpoint_config(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  return raw.header.value("config", nlohmann::json::object());
}

CheckpointLoad load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  const auto raw = read_raw(path);
  CheckpointLoad report;
  report.config = raw.header.value("config", nlohmann::json::object());

  std::size_t offset = raw.payload_at;
  std::set<std::string> seen;
  for (const auto& t : raw.header["tensors"]) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<int>>();
    std::size_t count = 1;
    for (int d : shape) {
      if (d < 0) throw FormatError("negative tensor dimension in checkpoint");
      count *= static_cast<std::size_t>(d);
    }
    if (raw.bytes.size() < offset + count * sizeof(float)) throw FormatError("checkpoint payload truncated");
    seen.insert(name);
    if (!store.contains(name)) {
      report.unexpected.push_back(name);
    } else {
      auto tensor = store.get(name);
      if (tensor.shape() != shape) {
        report.shape_mismatch.push_back(name);
      } else {
        std::vector<float> buf(count);
        std::memcpy(buf.data(), raw.bytes.data() + offset, count * sizeof(float));
        auto dst = tensor.mutable_value();
        std::copy(buf.begin(), buf.end(), dst.begin());
        ++report.loaded;
      }
    }
    offset += count * sizeof(float);
  }
  if (offset != raw.bytes.size()) throw FormatError("checkpoint payload has trailing bytes");
  for (const auto& e : store.entries())
    if (!seen.contains(e.name)) report.missing.push_back(e.name);
  return report;
}

}  // namespace pulse
