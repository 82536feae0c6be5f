#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "hiernet/hierarchy.hpp"
#include "hiernet/rng.hpp"
#include "hiernet/tensor.hpp"

namespace hiernet::data {

using hierarchy::LeafLabel;
using hierarchy::NodeId;

/// H x W x C grid, row-major with interleaved channels, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class Source { Primary, Auxiliary };
enum class AuxLabel { BenignAux, MalignantAux };

struct LabeledImage {
  Image image;
  LeafLabel label = LeafLabel::Normal;
  Source source = Source::Primary;
  std::optional<AuxLabel> aux_label;

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

// ---------------------------------------------------------------------------
// Synthetic hierarchical dataset
// ---------------------------------------------------------------------------

/// Planted texture model (r = distance from the image centre, measured in
/// units of the short side so the pattern survives resizing):
///
///   Normal    background only
///   Benign    weak fine rings
///   InSitu    strong fine rings, darker
///   Invasive  strong fine rings + coarse rings, darker
///
/// Each ring pattern gets a per-sample phase offset in [-phase_jitter, phase_jitter],
/// then Gaussian noise is added and pixels are clamped to [0, 1].
struct DatasetSpec {
  int n_per_class = 50;
  int height = 32;
  int width = 32;
  int channels = 3;
  std::uint64_t seed = 0;
  double noise = 0.1;
  double phase_jitter = 0.6;
  double fine_wavelength = 0.25;    // fraction of the short side
  double coarse_wavelength = 0.75;  // fraction of the short side
  double carcinoma_amplitude = 0.2;
  double benign_amplitude = 0.08;
  double coarse_amplitude = 0.15;
  double carcinoma_shift = -0.05;
  int aux_benign = 0;
  int aux_malignant = 0;

  void validate() const;
};

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec);
/// Strict parse: unknown keys raise ConfigError; missing keys keep defaults.
DatasetSpec dataset_spec_from_json(const nlohmann::json& doc);

/// Exactly n_per_class samples per label, class-major order. Sample i draws
/// from its own generator derived from (seed, i).
std::vector<LabeledImage> generate_synthetic(const DatasetSpec& spec);

/// Auxiliary two-class stand-in set (aux_benign + aux_malignant samples).
std::vector<LabeledImage> generate_auxiliary(const DatasetSpec& spec);

/// Noise-free ring pattern value shared by the generator and its tests.
double planted_signal(const DatasetSpec& spec, LeafLabel label, double radius_fraction,
                      double fine_phase, double coarse_phase);

// ---------------------------------------------------------------------------
// Geometry and augmentation
// ---------------------------------------------------------------------------

/// Bilinear resize with half-pixel centres.
Image resize_bilinear(const Image& img, std::size_t out_height, std::size_t out_width);

/// Short side becomes target_short; long side round(target_short * aspect).
Image resize_preserve_ratio(const Image& img, int target_short);

/// side x side window at offset (floor((H-side)/2), floor((W-side)/2)).
Image center_crop(const Image& img, int side);
Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width);

/// Clockwise quarter turns.
Image rotate90(const Image& img, int quarter_turns);
/// Rotation about the centre, clockwise on screen (rows grow downward) for a
/// positive angle, so pi/2 matches rotate90(img, 1). Bilinear, borders mirrored.
Image rotate_angle(const Image& img, double radians);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

struct AugmentConfig {
  double rotate_prob = 0.0;
  double hflip_prob = 0.0;
  double vflip_prob = 0.0;
  double crop_prob = 0.0;
  int crop_side = 0;
  bool arbitrary_rotation = false;  // uniform angle instead of quarter turns

  bool enabled() const noexcept {
    return rotate_prob > 0.0 || hflip_prob > 0.0 || vflip_prob > 0.0 || crop_prob > 0.0;
  }
  void validate() const;
};

/// Applies, each with its probability and in this order: rotation by 90, 180
/// or 270 degrees (or a uniform angle), horizontal reflection, vertical reflection, random
/// crop_side crop resized back to the input size.
Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng);

struct Preprocess {
  int resize_short = 24;
  int crop = 16;

  Image apply(const Image& img) const;
};

/// Flattens pixels to (value - 0.5) * 2, i.e. into [-1, 1].
std::vector<double> to_features(const Image& img);

// ---------------------------------------------------------------------------
// Splitting and node datasets
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> val;    // ascending
};

/// Largest-remainder allocation of round(train_fraction * N) training slots
/// across classes (ties to the lower label), then a seeded shuffle within
/// each class picks the members.
SplitIndices stratified_split(std::span<const LabeledImage> data, const SplitSpec& spec);

/// Per-class training counts the stratified split will use.
std::array<std::size_t, 4> stratified_train_counts(const std::array<std::size_t, 4>& class_sizes,
                                                   double train_fraction);

struct NodeSample {
  Image image;
  int label = 0;
};
using NodeDataset = std::vector<NodeSample>;

/// Carci keeps everything (carcinoma -> 1); NorBe keeps Normal(0)/Benign(1);
/// InvIs keeps InSitu(0)/Invasive(1).
NodeDataset node_relabel(std::span<const LabeledImage> data, NodeId node);

/// node_relabel(primary) plus auxiliary contributions: Carci takes every aux
/// sample (Malignant -> 1, Benign -> 0), NorBe takes only Benign aux (as 1),
/// InvIs takes none.
NodeDataset merge_auxiliary(std::span<const LabeledImage> primary,
                            std::span<const LabeledImage> aux, NodeId node);

// ---------------------------------------------------------------------------
// On-disk layout
// ---------------------------------------------------------------------------

/// Binary sample: "HXIM", uint32 H, W, C (little-endian), then H*W*C float64 LE.
std::string encode_image(const Image& img);
Image decode_image(std::string_view bytes);
void write_image_file(const std::filesystem::path& path, const Image& img);
Image read_image_file(const std::filesystem::path& path);

struct DatasetOnDisk {
  DatasetSpec spec;
  std::vector<LabeledImage> primary;
  std::vector<LabeledImage> auxiliary;
};

/// One directory per class (normal/, benign/, in_situ/, invasive/, aux_benign/,
/// aux_malignant/) plus manifest.json listing every file in generation order.
void write_dataset(const std::filesystem::path& dir, const DatasetOnDisk& dataset);
DatasetOnDisk read_dataset(const std::filesystem::path& dir);

}  // namespace hiernet::data
