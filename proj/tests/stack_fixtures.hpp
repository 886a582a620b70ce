#pragma once

// Random decoder configurations and inputs for property checks.

#include <vector>

#include "stackvs/stack_decoder.hpp"
#include "test_util.hpp"

namespace stackvs::test {

inline StackConfig small_config(std::size_t n_stages, std::size_t t_max, std::size_t d_p = 7) {
  StackConfig c;
  c.n_stages = n_stages;
  c.d_v = 3;
  c.d_e = 4;
  c.d_h = 5;
  c.d_a = 3;
  c.d_s = 4;
  c.d_p = d_p;
  c.n_v = 3;
  c.n_e = 2;
  c.t_max = t_max;
  c.n_attributes = 6;
  return c;
}

inline StackConfig random_config(Rng& rng) {
  StackConfig c;
  c.n_stages = random_dim(rng, 1, 3);
  c.t_max = random_dim(rng, 1, 6);
  c.d_v = random_dim(rng, 1, 5);
  c.d_e = random_dim(rng, 1, 5);
  c.d_h = random_dim(rng, 1, 6);
  c.d_a = random_dim(rng, 1, 4);
  c.d_s = random_dim(rng, 1, 4);
  c.d_p = random_dim(rng, 5, 9);
  c.n_v = random_dim(rng, 1, 5);
  c.n_e = random_dim(rng, 1, 4);
  c.n_attributes = random_dim(rng, 1, 6);
  return c;
}

struct Image {
  Tensord features;
  std::vector<std::size_t> attributes;
};

inline Image random_image(const StackConfig& c, Rng& rng) {
  Image im{random_tensor({c.n_v, c.d_v}, rng), {}};
  for (std::size_t k = 0; k < c.n_e; ++k) im.attributes.push_back(rng.below(c.n_attributes));
  return im;
}

inline std::vector<std::size_t> random_gold(const StackConfig& c, Rng& rng) {
  std::vector<std::size_t> g;
  const std::size_t n = random_dim(rng, 1, c.t_max);
  for (std::size_t k = 0; k + 1 < n; ++k) g.push_back(kNumSpecials + rng.below(c.d_p - kNumSpecials));
  g.push_back(kEos);
  return g;
}

}  // namespace stackvs::test
