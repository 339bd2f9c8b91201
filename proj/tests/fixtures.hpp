#pragma once

#include <memory>
#include <vector>

#include "oracles.hpp"
#include "pulse/dataset.hpp"
#include "pulse/model.hpp"

namespace fixture {

// 48x48 input; window 3 tiles the 12 -> 6 token grids of two stages.
inline pulse::ModelConfig tiny(int channels = 1) {
  pulse::ModelConfig c;
  c.input_h = 48;
  c.input_w = 48;
  c.in_channels = channels;
  c.out_channels = channels;
  c.embed_dim = 8;
  c.window_size = 3;
  c.depths = {2, 2};
  c.heads = {2, 2};
  c.mlp_ratio = 2.0;
  c.head_channels = 4;
  c.seed = 5;
  return c;
}

inline std::vector<double> image_for(const pulse::ModelConfig& c, std::uint64_t seed) {
  auto x = oracle::gaussian(static_cast<std::size_t>(c.input_h) * c.input_w * c.in_channels, seed, 0.5);
  for (double& v : x) v += 0.5;
  return x;
}

// Hand-built sample: 8 rows of 96 samples read from the first image
// elements, band-limited targets, and an HR label.
inline pulse::Sample tiny_sample(const pulse::ModelConfig& c, std::uint64_t seed) {
  pulse::Sample s;
  s.input.height = c.input_h;
  s.input.width = c.input_w;
  s.input.channels = c.in_channels;
  const auto img = image_for(c, seed);
  s.input.image.assign(img.begin(), img.end());
  s.rows = 8;
  s.length = 96;
  auto idx = std::make_shared<std::vector<std::size_t>>();
  for (int r = 0; r < s.rows; ++r) {
    const auto row = oracle::band_limit(oracle::gaussian(96, seed * 13 + r), 30.0, 0.7, 3.0);
    s.target_rows.insert(s.target_rows.end(), row.begin(), row.end());
    for (int t = 0; t < s.length; ++t) idx->push_back(static_cast<std::size_t>(r * 2 * 96 + t) * c.out_channels);
  }
  s.unstack_index = idx;
  s.hr_label = 0.35;
  s.hr_valid = true;
  s.subject = "t";
  return s;
}

}  // namespace fixture
