#pragma once

#include "dpodyn/dataset.hpp"
#include "dpodyn/preference_data.hpp"
#include "dpodyn/rng.hpp"

#include <string>
#include <vector>

namespace testing {

using dpodyn::Behavior;
using dpodyn::BehaviorDataset;
using dpodyn::Label;
using dpodyn::Vector;

// Behavior with `pairs` copies of +mu_plus / -mu_minus, alternating signs.
inline Behavior point_mass(const std::string& id, const Vector& mu_plus, const Vector& mu_minus,
                           int pairs = 2) {
  Behavior b{id, {}};
  for (int i = 0; i < pairs; ++i) {
    b.samples.push_back({mu_plus, Label::kPositive});
    b.samples.push_back({mu_minus, Label::kNegative});
  }
  return b;
}

inline Vector axis(int d, int k, double scale = 1.0) {
  Vector v = Vector::Zero(d);
  v[k] = scale;
  return v;
}

// Isotropic Gaussian behaviors with random mean directions.
inline BehaviorDataset random_dataset(int d, int behaviors, int n, std::uint64_t seed,
                                      double delta = 0.3, double variance = 1.0) {
  std::vector<dpodyn::NamedSpec> specs;
  for (int b = 0; b < behaviors; ++b) {
    dpodyn::SpecRequest req;
    req.d = d;
    req.delta = delta;
    req.cov_plus = dpodyn::IsotropicCov{variance};
    req.cov_minus = dpodyn::IsotropicCov{variance};
    req.direction_seed = dpodyn::CounterRng::derive_key(seed, 1000 + b);
    specs.push_back({"b" + std::to_string(b), dpodyn::make_spec(req)});
  }
  return dpodyn::generate_dataset(specs, n, seed);
}

inline Vector random_vector(dpodyn::CounterRng& rng, int d, double scale = 1.0) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = scale * rng.next_normal();
  return v;
}

}  // namespace testing
