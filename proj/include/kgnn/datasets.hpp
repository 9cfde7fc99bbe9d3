#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgnn/kg.hpp"
#include "kgnn/serialize.hpp"
#include "kgnn/tensor.hpp"

namespace kgnn::data {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kImagePixels = kChannels * kImageSide * kImageSide;

/// Channel-major [3 x 32 x 32] image, values in [0, 1].
using Image = std::vector<float>;

struct LabeledDataset {
  std::vector<std::string> label_names;
  std::string domain_tag;
  std::vector<std::size_t> labels;
  std::vector<float> pixels;  // size() * kImagePixels

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> image(std::size_t i) const;
  void add(std::span<const float> image, std::size_t label);
  /// Throws ContractError on inconsistent sizes or out-of-range labels.
  void validate() const;
  /// Images at `indices` as a [B x 3 x 32 x 32] tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  /// Indices per label.
  std::vector<std::vector<std::size_t>> by_class() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Rendering attributes of one class: glyph and color names.
struct ClassDef {
  std::string label;
  std::string shape;   // circle, triangle, square, octagon
  std::string fill;    // color names: red, white, blue, yellow, black
  std::string border;
  std::string icon;
};

inline constexpr std::string_view kHasShape = "rs:hasShape";
inline constexpr std::string_view kHasColor = "rs:hasColor";
inline constexpr std::string_view kHasBorderColor = "rs:hasBorderColor";
inline constexpr std::string_view kHasIcon = "rs:hasIcon";

/// Reads each label's linked entity and the local names (after the last '/')
/// of its shape, fill, border and icon objects. Throws MappingError on a
/// missing or ambiguous link or attribute.
std::vector<ClassDef> class_defs_from_kg(const kg::KnowledgeGraph& kg, const std::vector<std::string>& labels);

/// Anti-aliased sign on a random background with +-2 px position and +-10%
/// scale jitter. Throws ConfigError for an unknown glyph or color.
LabeledDataset generate_synthetic(const std::vector<ClassDef>& defs, std::size_t n_per_class, std::uint64_t seed,
                                  const std::string& domain_tag = "source");

struct DomainShiftSpec {
  double noise_sigma = 0;
  std::size_t blur_radius = 0;
  double hue_degrees = 0;
  double brightness = 0;
};

/// Hue rotation, box blur, gaussian noise, brightness offset, clamp.
LabeledDataset shift_domain(const LabeledDataset& ds, const DomainShiftSpec& spec, std::uint64_t seed,
                            const std::string& domain_tag);

struct AugmentationSpec {
  std::size_t pad = 4;
  double flip_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
};

/// Two independent draws of pad-and-crop, flip, brightness and contrast jitter.
std::pair<Image, Image> augment_pair(std::span<const float> image, const AugmentationSpec& spec, std::uint64_t seed);

struct ContrastiveBatch {
  Tensor images;  // [2N x 3 x 32 x 32]
  std::vector<std::size_t> labels;
};

/// Two augmented views of each listed original, at rows 2j and 2j+1. View
/// pair j draws from derive_seed(seed, 1 + j).
ContrastiveBatch view_pairs(const LabeledDataset& ds, std::span<const std::size_t> originals,
                            const AugmentationSpec& spec, std::uint64_t seed);

/// N originals without replacement (class-stratified when N >= number of
/// classes present), two augmented views each at rows 2j and 2j+1.
/// Throws SamplingError when N exceeds the dataset size or is 0.
ContrastiveBatch make_contrastive_batch(const LabeledDataset& ds, std::size_t n, const AugmentationSpec& spec,
                                        std::uint64_t seed);

/// Exactly k images per class, shuffled. Throws SamplingError naming a class
/// with fewer than k images.
LabeledDataset kshot_subset(const LabeledDataset& ds, std::size_t k, std::uint64_t seed);
/// floor(fraction * n) images, class-stratified; the remainder goes to the
/// largest classes first (ties: lowest class index). Shuffled.
LabeledDataset fraction_subset(const LabeledDataset& ds, double fraction, std::uint64_t seed);
/// Keeps only images whose label name is in `names`, with labels re-indexed
/// to the order of `names`.
LabeledDataset filter_classes(const LabeledDataset& ds, const std::vector<std::string>& names);

inline constexpr std::string_view kDatasetMagic = "KGND";

/// "KGND", u32 n, u16 name count + str16 names, str16 domain tag, f32 pixels,
/// u16 labels.
Bytes encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Directory with data.kgnd and labels.txt (one name per line, index order).
void save_manifest(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_manifest(const std::filesystem::path& dir);

}  // namespace kgnn::data
