#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgnn/datasets.hpp"
#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::data {

std::span<const float> LabeledDataset::image(std::size_t i) const {
  if (i >= size()) throw LookupError("image index " + std::to_string(i) + " out of range");
  return {pixels.data() + i * kImagePixels, kImagePixels};
}

void LabeledDataset::add(std::span<const float> image, std::size_t label) {
  if (image.size() != kImagePixels)
    throw DimensionError("image has " + std::to_string(image.size()) + " values, expected " + std::to_string(kImagePixels));
  if (label >= label_names.size()) throw ContractError("label " + std::to_string(label) + " out of range");
  pixels.insert(pixels.end(), image.begin(), image.end());
  labels.push_back(label);
}

void LabeledDataset::validate() const {
  if (pixels.size() != labels.size() * kImagePixels) throw ContractError("pixel buffer does not match image count");
  for (std::size_t l : labels)
    if (l >= label_names.size()) throw ContractError("label " + std::to_string(l) + " out of range");
}

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("empty batch");
  Tensor out({indices.size(), kChannels, kImageSide, kImageSide});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto img = image(indices[b]);
    std::copy(img.begin(), img.end(), out.ptr() + b * kImagePixels);
  }
  return out;
}

std::vector<std::vector<std::size_t>> LabeledDataset::by_class() const {
  std::vector<std::vector<std::size_t>> out(label_names.size());
  for (std::size_t i = 0; i < size(); ++i) out.at(labels[i]).push_back(i);
  return out;
}

namespace {

LabeledDataset gather(const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
  LabeledDataset out;
  out.label_names = ds.label_names;
  out.domain_tag = ds.domain_tag;
  out.labels.reserve(idx.size());
  out.pixels.reserve(idx.size() * kImagePixels);
  for (std::size_t i : idx) out.add(ds.image(i), ds.labels[i]);
  return out;
}

/// First `k` entries of a seeded shuffle of `pool`.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  rng.shuffle(std::span<std::size_t>(pool));
  pool.resize(k);
  return pool;
}

}  // namespace

ContrastiveBatch view_pairs(const LabeledDataset& ds, std::span<const std::size_t> originals,
                            const AugmentationSpec& spec, std::uint64_t seed) {
  if (originals.empty()) throw SamplingError("batch needs at least one original");
  const std::size_t n = originals.size();
  ContrastiveBatch b;
  b.images = Tensor({2 * n, kChannels, kImageSide, kImageSide});
  for (std::size_t j = 0; j < n; ++j) {
    const auto [v1, v2] = augment_pair(ds.image(originals[j]), spec, derive_seed(seed, 1 + j));
    std::copy(v1.begin(), v1.end(), b.images.ptr() + (2 * j) * kImagePixels);
    std::copy(v2.begin(), v2.end(), b.images.ptr() + (2 * j + 1) * kImagePixels);
    b.labels.push_back(ds.labels[originals[j]]);
    b.labels.push_back(ds.labels[originals[j]]);
  }
  return b;
}

ContrastiveBatch make_contrastive_batch(const LabeledDataset& ds, std::size_t n, const AugmentationSpec& spec,
                                        std::uint64_t seed) {
  if (n == 0) throw SamplingError("batch size must be positive");
  if (n > ds.size())
    throw SamplingError("batch of " + std::to_string(n) + " originals from a dataset of " + std::to_string(ds.size()));
  Rng rng(derive_seed(seed, 0));
  std::vector<std::size_t> picked;
  auto classes = ds.by_class();
  std::erase_if(classes, [](const auto& c) { return c.empty(); });
  if (n >= classes.size()) {
    // Round-robin quotas over a shuffled class order, capped by class size.
    std::vector<std::size_t> order(classes.size()), quota(classes.size(), 0);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t assigned = 0; assigned < n;)
      for (std::size_t c : order)
        if (assigned < n && quota[c] < classes[c].size()) {
          ++quota[c];
          ++assigned;
        }
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto part = draw(classes[c], quota[c], rng);
      picked.insert(picked.end(), part.begin(), part.end());
    }
    rng.shuffle(std::span<std::size_t>(picked));
  } else {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    picked = draw(std::move(all), n, rng);
  }

  return view_pairs(ds, picked, spec, seed);
}

LabeledDataset kshot_subset(const LabeledDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw SamplingError("k-shot subset needs k >= 1");
  Rng rng(seed);
  const auto classes = ds.by_class();
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].size() < k)
      throw SamplingError("class '" + ds.label_names[c] + "' has " + std::to_string(classes[c].size()) +
                          " images, fewer than " + std::to_string(k));
    const auto part = draw(classes[c], k, rng);
    idx.insert(idx.end(), part.begin(), part.end());
  }
  rng.shuffle(std::span<std::size_t>(idx));
  return gather(ds, idx);
}

LabeledDataset fraction_subset(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must be in (0, 1]");
  const std::size_t total = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size())));
  if (total == 0) throw SamplingError("fraction " + std::to_string(fraction) + " selects no images");
  const auto classes = ds.by_class();
  std::vector<std::size_t> quota(classes.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    quota[c] = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(classes[c].size())));
    assigned += quota[c];
  }
  std::vector<std::size_t> order(classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return classes[a].size() > classes[b].size(); });
  while (assigned < total)
    for (std::size_t c : order)
      if (assigned < total && quota[c] < classes[c].size()) {
        ++quota[c];
        ++assigned;
      }
  Rng rng(seed);
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto part = draw(classes[c], quota[c], rng);
    idx.insert(idx.end(), part.begin(), part.end());
  }
  rng.shuffle(std::span<std::size_t>(idx));
  return gather(ds, idx);
}

LabeledDataset filter_classes(const LabeledDataset& ds, const std::vector<std::string>& names) {
  std::vector<long> remap(ds.label_names.size(), -1);
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = std::find(ds.label_names.begin(), ds.label_names.end(), names[i]);
    if (it != ds.label_names.end()) remap[static_cast<std::size_t>(it - ds.label_names.begin())] = static_cast<long>(i);
  }
  LabeledDataset out;
  out.label_names = names;
  out.domain_tag = ds.domain_tag;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (remap[ds.labels[i]] >= 0) out.add(ds.image(i), static_cast<std::size_t>(remap[ds.labels[i]]));
  return out;
}

}  // namespace kgnn::data
