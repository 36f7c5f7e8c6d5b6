#include "agcl/data/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "agcl/core/random.hpp"

namespace agcl::data {

void PhantomConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("phantom config: " + msg); };
  if (n_objects < 1) fail("n_objects must be >= 1");
  if (n_modalities < 1) fail("n_modalities must be >= 1");
  if (height < 8 || width < 8) fail("image must be at least 8x8");
  const std::size_t cells = n_objects * n_modalities;
  if (intensity_mean.size() != cells || intensity_sigma.size() != cells) {
    fail("intensity tables need n_modalities*n_objects = " + std::to_string(cells) + " entries");
  }
  if (background_mean.size() != n_modalities) fail("background_mean needs one entry per modality");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
  if (!(axis_min >= 1.0) || !(axis_max >= axis_min)) fail("need 1 <= axis_min <= axis_max");
  if (max_attempts < 1) fail("max_attempts must be >= 1");
  for (std::size_t m = 1; m <= n_modalities; ++m) {
    for (std::size_t a = 1; a <= n_objects; ++a) {
      if (!(sigma(int(m), int(a)) >= 0)) fail("intensity_sigma must be >= 0");
      for (std::size_t b = a + 1; b <= n_objects; ++b) {
        const double spread = 2.0 * std::max(sigma(int(m), int(a)), sigma(int(m), int(b)));
        if (std::abs(mean(int(m), int(a)) - mean(int(m), int(b))) < spread) {
          fail("objects " + std::to_string(a) + " and " + std::to_string(b) + " of modality " +
               std::to_string(m) + " have means closer than 2 sigma");
        }
      }
    }
  }
}

Mask PhantomSample::plane(const Mask& stack, std::size_t o) {
  const std::size_t h = stack.dim(1), w = stack.dim(2);
  Mask out({h, w});
  std::copy_n(stack.data() + o * h * w, h * w, out.data());
  return out;
}

namespace {

Mask rasterize_ellipse(std::size_t h, std::size_t w, double cy, double cx, double a, double b,
                       double angle) {
  Mask m({h, w});
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double dy = static_cast<double>(i) + 0.5 - cy, dx = static_cast<double>(j) + 0.5 - cx;
      const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
      if (u * u + v * v <= 1.0) m[i * w + j] = 1;
    }
  }
  return m;
}

// Pixels within Euclidean distance `radius` of a set pixel.
Mask dilate(const Mask& m, std::size_t radius) {
  if (radius == 0) return m;
  const std::size_t h = m.dim(0), w = m.dim(1);
  const long r = static_cast<long>(radius);
  Mask out({h, w});
  for (long i = 0; i < long(h); ++i) {
    for (long j = 0; j < long(w); ++j) {
      if (!m[i * w + j]) continue;
      for (long di = -r; di <= r; ++di) {
        for (long dj = -r; dj <= r; ++dj) {
          if (di * di + dj * dj > r * r) continue;
          const long y = i + di, x = j + dj;
          if (y >= 0 && y < long(h) && x >= 0 && x < long(w)) out[y * w + x] = 1;
        }
      }
    }
  }
  return out;
}

Mask erode(const Mask& m, std::size_t radius) {
  Mask inverted(m.shape());
  for (std::size_t i = 0; i < m.numel(); ++i) inverted[i] = m[i] ? 0 : 1;
  Mask grown = dilate(inverted, radius);
  for (auto& v : grown.values()) v = v ? 0 : 1;
  return grown;
}

Mask translate(const Mask& m, long dy, long dx) {
  const std::size_t h = m.dim(0), w = m.dim(1);
  Mask out({h, w});
  for (long i = 0; i < long(h); ++i) {
    for (long j = 0; j < long(w); ++j) {
      const long y = i - dy, x = j - dx;
      if (y >= 0 && y < long(h) && x >= 0 && x < long(w)) out[i * w + j] = m[y * w + x];
    }
  }
  return out;
}

}  // namespace

PhantomSample generate_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t h = cfg.height, w = cfg.width, plane = h * w;
  PhantomSample sample;
  sample.modality = 1 + static_cast<int>(uniform_index(rng, cfg.n_modalities));
  sample.gt_masks = Mask({cfg.n_objects, h, w});

  Mask occupied({h, w});
  for (std::size_t o = 0; o < cfg.n_objects; ++o) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const double a = uniform(rng, cfg.axis_min, cfg.axis_max);
      const double b = uniform(rng, cfg.axis_min, cfg.axis_max);
      const double angle = uniform(rng, 0.0, std::numbers::pi);
      const double reach = std::max(a, b) + 1.0;
      if (2 * reach >= double(h) || 2 * reach >= double(w)) continue;
      const double cy = uniform(rng, reach, double(h) - reach);
      const double cx = uniform(rng, reach, double(w) - reach);
      Mask candidate = rasterize_ellipse(h, w, cy, cx, a, b, angle);
      const Mask halo = dilate(candidate, cfg.min_gap);
      bool clash = false;
      std::size_t area = 0;
      for (std::size_t q = 0; q < plane; ++q) {
        clash = clash || (halo[q] && occupied[q]) || (candidate[q] && occupied[q]);
        area += candidate[q];
      }
      if (clash || area == 0) continue;
      for (std::size_t q = 0; q < plane; ++q) {
        if (candidate[q]) {
          occupied[q] = 1;
          sample.gt_masks[o * plane + q] = 1;
        }
      }
      placed = true;
    }
    if (!placed) {
      throw ConfigError("could not place object " + std::to_string(o + 1) + " in a " +
                        std::to_string(h) + "x" + std::to_string(w) + " image after " +
                        std::to_string(cfg.max_attempts) + " attempts (gap " +
                        std::to_string(cfg.min_gap) + ")");
    }
  }

  std::normal_distribution<double> normal;
  sample.image = Tensor<float>({h, w});
  for (std::size_t q = 0; q < plane; ++q) {
    double mu = cfg.background_mean[sample.modality - 1], sd = cfg.noise_sigma;
    for (std::size_t o = 0; o < cfg.n_objects; ++o) {
      if (sample.gt_masks[o * plane + q]) {
        mu = cfg.mean(sample.modality, int(o + 1));
        sd = cfg.sigma(sample.modality, int(o + 1));
      }
    }
    sample.image[q] = static_cast<float>(mu + sd * normal(rng));
  }
  return sample;
}

Mask simulate_coarse_mask(const Mask& gt, double quality, std::uint64_t seed) {
  if (!(quality >= 0.0 && quality <= 1.0)) {
    throw RangeError("coarse mask quality must lie in [0, 1], got " + std::to_string(quality));
  }
  if (gt.rank() != 2) throw StructuralError("coarse mask expects an [H, W] mask, got " + shape_string(gt.shape()));
  for (auto v : gt.values())
    if (v > 1) throw ValidationError("coarse mask input is not binary");
  if (quality == 1.0) return gt;

  Rng rng(seed);
  const double defect = 1.0 - quality;
  const long shift = static_cast<long>(std::floor(defect * 8.0));
  const auto radius_cap = static_cast<std::size_t>(std::floor(defect * 3.0));
  const long dy = shift ? static_cast<long>(uniform_index(rng, 2 * shift + 1)) - shift : 0;
  const long dx = shift ? static_cast<long>(uniform_index(rng, 2 * shift + 1)) - shift : 0;
  const std::size_t radius = radius_cap ? uniform_index(rng, radius_cap + 1) : 0;
  const bool grow = uniform(rng, 0.0, 1.0) < 0.5;

  Mask out = translate(gt, dy, dx);
  out = grow ? dilate(out, radius) : erode(out, radius);

  const std::size_t h = out.dim(0), w = out.dim(1);
  const Mask before = out;
  for (long i = 0; i < long(h); ++i) {
    for (long j = 0; j < long(w); ++j) {
      const auto v = before[i * w + j];
      bool edge = false;
      const long nbr[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      for (const auto& d : nbr) {
        const long y = i + d[0], x = j + d[1];
        if (y >= 0 && y < long(h) && x >= 0 && x < long(w) && before[y * w + x] != v) edge = true;
      }
      // one draw per pixel keeps the stream independent of the mask content
      const bool flip = uniform(rng, 0.0, 1.0) < defect;
      if (edge && flip) out[i * w + j] = v ? 0 : 1;
    }
  }
  return out;
}

double mask_dice(const Mask& a, const Mask& b) {
  if (a.shape() != b.shape()) {
    throw StructuralError("mask_dice: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::size_t inter = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    inter += (a[i] && b[i]);
    sa += a[i] != 0;
    sb += b[i] != 0;
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * double(inter) / double(sa + sb);
}

bool AttentionMaps::empty(std::size_t o) const {
  const std::size_t plane = maps.dim(1) * maps.dim(2);
  const auto* p = maps.data() + o * plane;
  return std::all_of(p, p + plane, [](std::uint8_t v) { return v == 0; });
}

AttentionMaps simulate_attention(const PhantomSample& sample, double quality, std::uint64_t seed) {
  const std::size_t n = sample.n_objects(), plane = sample.height() * sample.width();
  AttentionMaps att{Mask(sample.gt_masks.shape()), quality};
  for (std::size_t o = 0; o < n; ++o) {
    const Mask coarse = simulate_coarse_mask(PhantomSample::plane(sample.gt_masks, o), quality,
                                             derive_seed(seed, {o}));
    std::copy_n(coarse.data(), plane, att.maps.data() + o * plane);
  }
  return att;
}

}  // namespace agcl::data
