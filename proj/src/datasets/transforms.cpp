#include <algorithm>
#include <cmath>
#include <numbers>

#include "kgnn/datasets.hpp"
#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::data {
namespace {

constexpr std::size_t kPlane = kImageSide * kImageSide;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

/// Rotation about the gray axis of RGB space.
void hue_rotate(std::vector<double>& img, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a), k = (1.0 - c) / 3.0, q = std::sqrt(1.0 / 3.0) * s;
  const double m[3][3] = {{c + k, k - q, k + q}, {k + q, c + k, k - q}, {k - q, k + q, c + k}};
  for (std::size_t p = 0; p < kPlane; ++p) {
    const double r = img[p], g = img[kPlane + p], b = img[2 * kPlane + p];
    for (std::size_t o = 0; o < 3; ++o) img[o * kPlane + p] = m[o][0] * r + m[o][1] * g + m[o][2] * b;
  }
}

/// Separable mean filter with edge clamping.
void box_blur(std::vector<double>& img, std::size_t radius) {
  const long r = static_cast<long>(radius), n = static_cast<long>(kImageSide);
  const double inv = 1.0 / static_cast<double>(2 * r + 1);
  std::vector<double> tmp(kPlane);
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    double* p = img.data() + ch * kPlane;
    for (long y = 0; y < n; ++y)
      for (long x = 0; x < n; ++x) {
        double s = 0;
        for (long d = -r; d <= r; ++d) s += p[y * n + std::clamp(x + d, 0L, n - 1)];
        tmp[y * n + x] = s * inv;
      }
    for (long y = 0; y < n; ++y)
      for (long x = 0; x < n; ++x) {
        double s = 0;
        for (long d = -r; d <= r; ++d) s += tmp[std::clamp(y + d, 0L, n - 1) * n + x];
        p[y * n + x] = s * inv;
      }
  }
}

Image augment_one(std::span<const float> src, const AugmentationSpec& spec, Rng& rng) {
  const long pad = static_cast<long>(spec.pad), n = static_cast<long>(kImageSide);
  const long ox = pad ? static_cast<long>(rng.below(2 * spec.pad + 1)) - pad : 0;
  const long oy = pad ? static_cast<long>(rng.below(2 * spec.pad + 1)) - pad : 0;
  const bool flip = spec.flip_prob > 0 && rng.bernoulli(spec.flip_prob);
  const double bright = spec.brightness > 0 ? rng.uniform(-spec.brightness, spec.brightness) : 0.0;
  const double contrast = spec.contrast > 0 ? rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast) : 1.0;

  Image out(kImagePixels, 0.0f);
  for (std::size_t ch = 0; ch < kChannels; ++ch)
    for (long y = 0; y < n; ++y)
      for (long x = 0; x < n; ++x) {
        const long sx = (flip ? n - 1 - x : x) + ox, sy = y + oy;
        if (sx >= 0 && sx < n && sy >= 0 && sy < n)
          out[ch * kPlane + static_cast<std::size_t>(y * n + x)] = src[ch * kPlane + static_cast<std::size_t>(sy * n + sx)];
      }
  if (bright == 0.0 && contrast == 1.0) return out;
  double mean = 0;
  for (float v : out) mean += v;
  mean /= static_cast<double>(kImagePixels);
  for (float& v : out) v = clamp01((v - mean) * contrast + mean + bright);
  return out;
}

}  // namespace

LabeledDataset shift_domain(const LabeledDataset& ds, const DomainShiftSpec& spec, std::uint64_t seed,
                            const std::string& domain_tag) {
  if (spec.noise_sigma < 0) throw ConfigError("noise sigma must be non-negative");
  LabeledDataset out = ds;
  out.domain_tag = domain_tag;
  std::vector<double> img(kImagePixels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto src = ds.image(i);
    std::copy(src.begin(), src.end(), img.begin());
    if (spec.hue_degrees != 0) hue_rotate(img, spec.hue_degrees);
    if (spec.blur_radius > 0) box_blur(img, spec.blur_radius);
    if (spec.noise_sigma > 0) {
      Rng rng(derive_seed(seed, i));
      for (double& v : img) v += spec.noise_sigma * rng.normal();
    }
    float* dst = out.pixels.data() + i * kImagePixels;
    for (std::size_t p = 0; p < kImagePixels; ++p) dst[p] = clamp01(img[p] + spec.brightness);
  }
  return out;
}

std::pair<Image, Image> augment_pair(std::span<const float> image, const AugmentationSpec& spec, std::uint64_t seed) {
  if (image.size() != kImagePixels)
    throw DimensionError("image has " + std::to_string(image.size()) + " values, expected " + std::to_string(kImagePixels));
  if (spec.flip_prob < 0 || spec.flip_prob > 1 || spec.brightness < 0 || spec.contrast < 0)
    throw ConfigError("augmentation strengths must be non-negative and flip probability in [0, 1]");
  Rng rng(seed);
  Image a = augment_one(image, spec, rng);
  Image b = augment_one(image, spec, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace kgnn::data
