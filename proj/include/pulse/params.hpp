#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/autograd.hpp"

namespace pulse {

struct Parameter {
  std::string name;
  ag::Tensor tensor;
  bool frozen = false;
};

/// Named model parameters. Values are held in double precision but kept
/// representable in single precision (rounded on creation and after every
/// optimizer step), so float32 checkpoints round-trip bit-exact.
class ParameterStore {
 public:
  /// Adds a trainable parameter. Throws ConfigError on duplicate names.
  ag::Tensor add(const std::string& name, std::vector<int> shape, std::vector<double> values);

  const ag::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;

  std::vector<Parameter>& entries() { return entries_; }
  const std::vector<Parameter>& entries() const { return entries_; }

  void zero_grad();
  /// Frozen parameters stop requiring gradients and are skipped by the
  /// optimizer.
  void set_frozen(const std::string& name, bool frozen);
  void freeze_all_except(const std::vector<std::string>& trainable);
  void unfreeze_all();
  std::vector<std::string> trainable_names() const;

  /// Rounds every value to the nearest float.
  void round_to_float();

 private:
  std::size_t find(const std::string& name) const;
  std::vector<Parameter> entries_;
};

struct CheckpointLoad {
  nlohmann::json config;
  std::vector<std::string> missing;     ///< in the store, absent from the file
  std::vector<std::string> unexpected;  ///< in the file, absent from the store
  std::vector<std::string> shape_mismatch;
  std::size_t loaded = 0;
  bool clean() const { return missing.empty() && unexpected.empty() && shape_mismatch.empty(); }
};

// Checkpoint: "PSUCKPT1", u32 LE header length, JSON header
// {config, tensors: [{name, shape}]}, then every tensor as LE float32 in
// header order.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const nlohmann::json& config);
/// Copies matching tensors into `store`; mismatches are reported, not fatal.
CheckpointLoad load_checkpoint(const std::filesystem::path& path, ParameterStore& store);
nlohmann::json read_checkpoint_config(const std::filesystem::path& path);

}  // namespace pulse
