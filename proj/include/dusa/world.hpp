#pragma once

#include "dusa/gmm.hpp"
#include "dusa/task_models.hpp"

namespace dusa::world {

struct WorldConfig {
  int classes = 8;
  int dim = 8;
  Index train = 8000;
  Index test = 2000;
  gmm::MixtureOptions mixture{};
  std::uint64_t seed = 0;
};

/// Source mixture, kept as the oracle, and i.i.d. labeled splits.
struct ClassWorld {
  gmm::Mixture mixture;
  gmm::LabeledSamples train;
  gmm::LabeledSamples test;
};

ClassWorld make_world(const WorldConfig& cfg);
ClassWorld make_world(gmm::Mixture mixture, Index train, Index test, std::uint64_t seed);

/// sum_y w_y mu_y.
Vec data_mean(const gmm::Mixture& m);

// -- toy segmentation --------------------------------------------------------

struct SegWorldConfig {
  int height = 8;
  int width = 8;
  int channels = 2;
  int classes = 4;
  int min_sites = 3;  // Voronoi sites per image
  int max_sites = 6;
  double radius = 2.0;      // class means sit on a circle (first two channels)
  double pixel_std = 0.5;   // isotropic part of the per-pixel feature noise
  double anisotropy = 0.3;  // entries of the random per-class covariance factor
  Index train = 2000;
  Index test = 500;
  std::uint64_t seed = 0;

  int pixels() const { return height * width; }
};

/// Per-class pixel feature laws. Images are Voronoi partitions of random sites,
/// each site labeled uniformly at random.
struct SegWorld {
  SegWorldConfig config;
  std::vector<gmm::Gaussian> features;  // one law per class, over channels
};

struct SegSamples {
  Mat images;                     // N x (P * C), pixel-major
  std::vector<int> pixel_labels;  // N * P
};

SegWorld make_seg_world(const SegWorldConfig& cfg);
SegSamples sample_images(const SegWorld& w, Index n, Rng& rng);

/// Rows of a grid label map: labels for image i, as P entries.
std::vector<int> voronoi_labels(const SegWorldConfig& cfg, const std::vector<double>& sites_h,
                                const std::vector<double>& sites_w, const std::vector<int>& site_classes);

/// One training condition per image: a class drawn uniformly from those present.
std::vector<int> present_class_conditions(const SegSamples& s, const SegWorldConfig& cfg, Rng& rng);

/// Mean pixel feature under the world's image law (uniform class marginal).
Vec pixel_mean(const SegWorld& w);

}  // namespace dusa::world
