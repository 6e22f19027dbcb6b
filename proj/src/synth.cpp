#include "cbt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cbt/model_config.hpp"

namespace cbt {

namespace {

const std::vector<std::pair<const char*, const char*>> kObjects = {
    {"dog", "dogs"},   {"cat", "cats"},   {"horse", "horses"}, {"bird", "birds"}, {"car", "cars"},
    {"bus", "buses"},  {"boat", "boats"}, {"train", "trains"}, {"cow", "cows"},   {"bike", "bikes"}};
const std::vector<const char*> kColors = {"red", "blue", "green", "yellow", "white", "black", "brown", "gray"};
const std::vector<const char*> kScenes = {"street", "field", "beach", "park", "kitchen", "river", "garden", "road"};
const std::vector<const char*> kCounts = {"a", "two", "three", "four", "five"};

// Slots: {n} count word, {c} color, {o} object, {s} scene, {b} is/are.
// The first five share one shape and differ only in the preposition, so when
// an image's references are exactly these five, no phrasing scores better
// under CIDEr than another and only the attribute words decide the score.
const std::vector<const char*> kTemplates = {
    "{n} {c} {o} {b} in the {s}",
    "{n} {c} {o} {b} at the {s}",
    "{n} {c} {o} {b} near the {s}",
    "{n} {c} {o} {b} by the {s}",
    "{n} {c} {o} {b} on the {s}",
    "in the {s} there {b} {n} {c} {o}",
    "a {s} scene with {n} {c} {o}",
    "{n} {o} that {b} {c} near a {s}",
    "the {s} has {n} {c} {o} in it",
    "this {s} photo shows {n} {o} colored {c}",
};

TokenSeq realize(const char* tmpl, const SynthAttributes& a) {
  const bool plural = a.count > 1;
  TokenSeq out;
  std::istringstream in(tmpl);
  std::string w;
  while (in >> w) {
    if (w == "{n}") {
      out.emplace_back(kCounts[a.count - 1]);
    } else if (w == "{c}") {
      out.emplace_back(kColors[a.color]);
    } else if (w == "{o}") {
      out.emplace_back(plural ? kObjects[a.object].second : kObjects[a.object].first);
    } else if (w == "{s}") {
      out.emplace_back(kScenes[a.scene]);
    } else if (w == "{b}") {
      out.emplace_back(plural ? "are" : "is");
    } else {
      out.push_back(w);
    }
  }
  return out;
}

std::vector<double> gaussian_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

std::size_t synth_template_count() { return kTemplates.size(); }

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
  if (train_images == 0 || val_images == 0 || test_images == 0) fail("every split needs at least one image");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (objects < 1 || objects > kObjects.size()) fail("objects must be in [1, " + std::to_string(kObjects.size()) + "]");
  if (colors < 1 || colors > kColors.size()) fail("colors must be in [1, " + std::to_string(kColors.size()) + "]");
  if (scenes < 1 || scenes > kScenes.size()) fail("scenes must be in [1, " + std::to_string(kScenes.size()) + "]");
  if (max_count < 1 || max_count > kCounts.size()) fail("max_count must be in [1, " + std::to_string(kCounts.size()) + "]");
  if (regions < max_count + 1) fail("regions must exceed max_count so every image shows its scene");
  if (templates < 2 || templates > kTemplates.size()) {
    fail("templates must be in [2, " + std::to_string(kTemplates.size()) + "]");
  }
  if (refs_per_image < 2 || refs_per_image > templates) fail("refs_per_image must be in [2, templates]");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
}

SynthCorpus synth_corpus(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t D = spec.feature_dim;
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));
  auto basis = [&](std::size_t n) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = gaussian_vector(D, rng);
      for (double& x : v) x *= unit;
      out.push_back(std::move(v));
    }
    return out;
  };
  const auto object_dirs = basis(spec.objects);
  const auto color_dirs = basis(spec.colors);
  const auto scene_dirs = basis(spec.scenes);
  std::normal_distribution<double> noise(0.0, spec.noise * unit);

  auto make_split = [&](const char* name, std::size_t n) {
    SynthSplit split;
    std::vector<std::size_t> order(spec.templates);
    for (std::size_t i = 0; i < n; ++i) {
      SynthAttributes a;
      a.object = std::uniform_int_distribution<std::size_t>(0, spec.objects - 1)(rng);
      a.color = std::uniform_int_distribution<std::size_t>(0, spec.colors - 1)(rng);
      a.scene = std::uniform_int_distribution<std::size_t>(0, spec.scenes - 1)(rng);
      a.count = std::uniform_int_distribution<std::size_t>(1, spec.max_count)(rng);

      char id[64];
      std::snprintf(id, sizeof id, "%s-%06zu", name, i);
      ImageExample ex;
      ex.captions.image_id = id;
      ex.features.image_id = id;
      ex.features.regions = spec.regions;
      ex.features.dim = D;
      ex.features.values.resize(spec.regions * D);
      for (std::size_t r = 0; r < spec.regions; ++r) {
        for (std::size_t k = 0; k < D; ++k) {
          const double base = r < a.count ? object_dirs[a.object][k] + color_dirs[a.color][k] : scene_dirs[a.scene][k];
          ex.features.values[r * D + k] = static_cast<float>(base + noise(rng));
        }
      }
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 0; k < spec.refs_per_image; ++k) ex.captions.refs.push_back(realize(kTemplates[order[k]], a));
      split.images.push_back(std::move(ex));
      split.attributes.push_back(a);
    }
    return split;
  };
  SynthCorpus c;
  c.train = make_split("train", spec.train_images);
  c.val = make_split("val", spec.val_images);
  c.test = make_split("test", spec.test_images);
  return c;
}

}  // namespace cbt
