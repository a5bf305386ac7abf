#include "dusa/world.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dusa::world {

ClassWorld make_world(const WorldConfig& cfg) {
  if (cfg.classes < 2 || cfg.dim < 1) throw std::invalid_argument("make_world: need K >= 2 and d >= 1");
  Rng rng(cfg.seed);
  Rng mix_rng = rng.split();
  gmm::Mixture m = gmm::random_mixture(cfg.classes, cfg.dim, mix_rng, cfg.mixture);
  return make_world(std::move(m), cfg.train, cfg.test, rng.split().next_u64());
}

ClassWorld make_world(gmm::Mixture mixture, Index train, Index test, std::uint64_t seed) {
  Rng rng(seed);
  Rng train_rng = rng.split();
  Rng test_rng = rng.split();
  gmm::LabeledSamples tr = gmm::sample(mixture, train, train_rng);
  gmm::LabeledSamples te = gmm::sample(mixture, test, test_rng);
  return {std::move(mixture), std::move(tr), std::move(te)};
}

Vec data_mean(const gmm::Mixture& m) {
  Vec mu = Vec::Zero(m.dim());
  for (int y = 0; y < m.classes(); ++y) mu += m.weight(y) * m.component(y).mean();
  return mu;
}

SegWorld make_seg_world(const SegWorldConfig& cfg) {
  if (cfg.classes < 2 || cfg.channels < 1 || cfg.height < 1 || cfg.width < 1)
    throw std::invalid_argument("make_seg_world: invalid grid configuration");
  if (cfg.min_sites < 1 || cfg.max_sites < cfg.min_sites)
    throw std::invalid_argument("make_seg_world: invalid site range");
  Rng rng(cfg.seed);
  SegWorld w{cfg, {}};
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  for (int k = 0; k < cfg.classes; ++k) {
    Vec mean = Vec::Zero(cfg.channels);
    const double angle = phase + 2.0 * std::numbers::pi * k / cfg.classes;
    mean(0) = cfg.radius * std::cos(angle);
    if (cfg.channels > 1) mean(1) = cfg.radius * std::sin(angle);
    const Mat a = cfg.anisotropy * rng.normal(cfg.channels, cfg.channels);
    Mat cov = a * a.transpose() + cfg.pixel_std * cfg.pixel_std * Mat::Identity(cfg.channels, cfg.channels);
    w.features.emplace_back(std::move(mean), 0.5 * (cov + cov.transpose()));
  }
  return w;
}

std::vector<int> voronoi_labels(const SegWorldConfig& cfg, const std::vector<double>& sites_h,
                                const std::vector<double>& sites_w, const std::vector<int>& site_classes) {
  std::vector<int> labels(static_cast<std::size_t>(cfg.pixels()));
  for (int h = 0; h < cfg.height; ++h) {
    for (int x = 0; x < cfg.width; ++x) {
      double best = std::numeric_limits<double>::infinity();
      int cls = 0;
      for (std::size_t s = 0; s < sites_h.size(); ++s) {
        const double dh = h + 0.5 - sites_h[s], dw = x + 0.5 - sites_w[s];
        const double d2 = dh * dh + dw * dw;
        if (d2 < best) {
          best = d2;
          cls = site_classes[s];
        }
      }
      labels[static_cast<std::size_t>(h * cfg.width + x)] = cls;
    }
  }
  return labels;
}

SegSamples sample_images(const SegWorld& w, Index n, Rng& rng) {
  const SegWorldConfig& cfg = w.config;
  const Index p = cfg.pixels(), c = cfg.channels;
  SegSamples out;
  out.images.resize(n, p * c);
  out.pixel_labels.resize(static_cast<std::size_t>(n * p));
  for (Index i = 0; i < n; ++i) {
    const int sites = rng.uniform_int(cfg.min_sites, cfg.max_sites);
    std::vector<double> sh(sites), sw(sites);
    std::vector<int> sc(sites);
    for (int s = 0; s < sites; ++s) {
      sh[s] = cfg.height * rng.uniform();
      sw[s] = cfg.width * rng.uniform();
      sc[s] = rng.uniform_int(0, cfg.classes - 1);
    }
    const std::vector<int> labels = voronoi_labels(cfg, sh, sw, sc);
    for (Index q = 0; q < p; ++q) {
      const int y = labels[static_cast<std::size_t>(q)];
      out.pixel_labels[static_cast<std::size_t>(i * p + q)] = y;
      out.images.row(i).segment(q * c, c) = w.features[static_cast<std::size_t>(y)].sample(rng).transpose();
    }
  }
  return out;
}

std::vector<int> present_class_conditions(const SegSamples& s, const SegWorldConfig& cfg, Rng& rng) {
  const Index p = cfg.pixels();
  std::vector<int> cond(static_cast<std::size_t>(s.images.rows()));
  for (Index i = 0; i < s.images.rows(); ++i) {
    std::vector<char> seen(cfg.classes, 0);
    for (Index q = 0; q < p; ++q) seen[s.pixel_labels[static_cast<std::size_t>(i * p + q)]] = 1;
    std::vector<int> present;
    for (int k = 0; k < cfg.classes; ++k)
      if (seen[k]) present.push_back(k);
    cond[static_cast<std::size_t>(i)] =
        present[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(present.size()) - 1))];
  }
  return cond;
}

Vec pixel_mean(const SegWorld& w) {
  Vec mu = Vec::Zero(w.config.channels);
  for (const auto& g : w.features) mu += g.mean();
  return mu / static_cast<double>(w.features.size());
}

}  // namespace dusa::world
