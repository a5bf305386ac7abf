#include "dusa/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dusa::corruption {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::add_noise: return "add_noise";
    case Kind::mean_shift: return "mean_shift";
    case Kind::cov_scale: return "cov_scale";
    case Kind::rotate: return "rotate";
    case Kind::feature_drop: return "feature_drop";
  }
  return "?";
}

const std::vector<Kind>& registry() {
  static const std::vector<Kind> kinds{Kind::add_noise, Kind::mean_shift, Kind::cov_scale, Kind::rotate,
                                       Kind::feature_drop};
  return kinds;
}

Kind parse_kind(const std::string& name) {
  for (Kind k : registry())
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown corruption kind '" + name + "'");
}

double magnitude(Kind kind, int severity) {
  if (severity < 1 || severity > 5) throw std::invalid_argument("corruption severity must lie in 1..5");
  switch (kind) {
    case Kind::add_noise: return 0.5 * severity;
    case Kind::mean_shift: return 0.8 * severity;
    case Kind::cov_scale: return 1.0 + 0.2 * severity;
    case Kind::rotate: return 6.0 * severity;
    case Kind::feature_drop: return severity;
  }
  return 0.0;
}

namespace {

Vec unit(Rng& rng, Index d) {
  Vec u(d);
  do {
    for (Index i = 0; i < d; ++i) u(i) = rng.normal();
  } while (u.norm() == 0.0);
  return u / u.norm();
}

}  // namespace

Params make_params(const Vec& center, std::uint64_t seed) {
  const Index d = center.size();
  Rng rng(seed);
  Params p;
  p.center = center;
  p.direction = unit(rng, d);
  if (d >= 2) {
    p.plane_u = unit(rng, d);
    Vec v = unit(rng, d);
    v -= v.dot(p.plane_u) * p.plane_u;
    while (v.norm() < 1e-6) {
      v = unit(rng, d);
      v -= v.dot(p.plane_u) * p.plane_u;
    }
    p.plane_v = v / v.norm();
  } else {
    p.plane_u = p.plane_v = Vec::Zero(d);
  }
  p.drop_order = rng.permutation(static_cast<int>(d));
  return p;
}

Mat corrupt(const Mat& x, Kind kind, int severity, const Params& p, Rng& rng) {
  const double mag = magnitude(kind, severity);
  const Index d = x.cols();
  if (p.center.size() != d) throw ShapeError("corrupt: parameters built for another dimension");
  Mat out = x;
  switch (kind) {
    case Kind::add_noise:
      out += mag * rng.normal(x.rows(), d);
      break;
    case Kind::mean_shift:
      out.rowwise() += mag * p.direction.transpose();
      break;
    case Kind::cov_scale:
      out = (x.rowwise() - p.center.transpose()) * mag;
      out.rowwise() += p.center.transpose();
      break;
    case Kind::rotate: {
      if (d < 2) throw std::invalid_argument("rotate needs at least two dimensions");
      const double th = mag * std::numbers::pi / 180.0;
      const Vec a = x * p.plane_u, b = x * p.plane_v;
      const Vec na = std::cos(th) * a - std::sin(th) * b;
      const Vec nb = std::sin(th) * a + std::cos(th) * b;
      out += (na - a) * p.plane_u.transpose() + (nb - b) * p.plane_v.transpose();
      break;
    }
    case Kind::feature_drop: {
      const Index drops = std::min<Index>(static_cast<Index>(mag), d - 1);
      for (Index i = 0; i < drops; ++i) out.col(p.drop_order[static_cast<std::size_t>(i)]).setZero();
      break;
    }
  }
  return out;
}

Mat corrupt_pixels(const Mat& images, Index channels, Kind kind, int severity, const Params& p, Rng& rng) {
  if (channels < 1 || images.cols() % channels != 0) throw ShapeError("corrupt_pixels: bad channel count");
  const Index n = images.rows(), pix = images.cols() / channels;
  Mat flat(n * pix, channels);
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < pix; ++q) flat.row(i * pix + q) = images.row(i).segment(q * channels, channels);
  const Mat done = corrupt(flat, kind, severity, p, rng);
  Mat out(n, images.cols());
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < pix; ++q) out.row(i).segment(q * channels, channels) = done.row(i * pix + q);
  return out;
}

std::string Spec::label() const { return to_string(kind) + ":" + std::to_string(severity); }

Spec parse_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) return {parse_kind(text), 3};
  Spec s{parse_kind(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
  magnitude(s.kind, s.severity);
  return s;
}

}  // namespace dusa::corruption
