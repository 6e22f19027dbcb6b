#pragma once

#include <cstddef>
#include <vector>

#include "cbt/dataset_io.hpp"
#include "cbt/tensor.hpp"

namespace cbt {

/// Shape of the synthetic captioning task. Each image has four latent
/// attributes (object, color, scene, count). Regions [0, count) carry the
/// object and color directions, the rest carry the scene direction, all with
/// Gaussian noise. Captions come from templates that place attributes at both
/// ends of the sentence.
struct SynthSpec {
  std::size_t train_images = 1600;
  std::size_t val_images = 200;
  std::size_t test_images = 200;
  std::size_t regions = 6;
  std::size_t feature_dim = 32;
  std::size_t objects = 8;
  std::size_t colors = 6;
  std::size_t scenes = 6;
  std::size_t max_count = 3;
  std::size_t refs_per_image = 5;
  std::size_t templates = 5;  // pool the references are drawn from, without replacement
  double noise = 0.3;

  /// Throws ConfigError when the spec cannot be realized.
  void validate() const;
};

struct SynthAttributes {
  std::size_t object = 0;
  std::size_t color = 0;
  std::size_t scene = 0;
  std::size_t count = 1;
};

struct SynthSplit {
  Dataset images;
  std::vector<SynthAttributes> attributes;  // parallel to images
};

struct SynthCorpus {
  SynthSplit train;
  SynthSplit val;
  SynthSplit test;
};

SynthCorpus synth_corpus(const SynthSpec& spec, Rng& rng);

/// Number of caption templates available (upper bound on `templates`).
std::size_t synth_template_count();

}  // namespace cbt
