#include "hiernet/datapipe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"
#include "hiernet/io.hpp"
#include "hiernet/json_util.hpp"

namespace hiernet::data {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

void DatasetSpec::validate() const {
  if (n_per_class < 4) throw std::invalid_argument("dataset: n_per_class must be >= 4");
  if (height < 1 || width < 1 || channels < 1) {
    throw std::invalid_argument("dataset: height, width and channels must be >= 1");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("dataset: noise must be >= 0");
  if (!(phase_jitter >= 0.0)) throw std::invalid_argument("dataset: phase_jitter must be >= 0");
  if (!(fine_wavelength > 0.0) || !(coarse_wavelength > 0.0)) {
    throw std::invalid_argument("dataset: wavelengths must be positive");
  }
  if (aux_benign < 0 || aux_malignant < 0) {
    throw std::invalid_argument("dataset: auxiliary counts must be >= 0");
  }
}

json dataset_spec_to_json(const DatasetSpec& s) {
  return json{{"n_per_class", s.n_per_class},
              {"height", s.height},
              {"width", s.width},
              {"channels", s.channels},
              {"seed", s.seed},
              {"noise", s.noise},
              {"phase_jitter", s.phase_jitter},
              {"fine_wavelength", s.fine_wavelength},
              {"coarse_wavelength", s.coarse_wavelength},
              {"carcinoma_amplitude", s.carcinoma_amplitude},
              {"benign_amplitude", s.benign_amplitude},
              {"coarse_amplitude", s.coarse_amplitude},
              {"carcinoma_shift", s.carcinoma_shift},
              {"aux_benign", s.aux_benign},
              {"aux_malignant", s.aux_malignant}};
}

DatasetSpec dataset_spec_from_json(const json& doc) {
  DatasetSpec s;
  StrictObject obj(doc, "dataset");
  obj.read("n_per_class", s.n_per_class);
  obj.read("height", s.height);
  obj.read("width", s.width);
  obj.read("channels", s.channels);
  obj.read("seed", s.seed);
  obj.read("noise", s.noise);
  obj.read("phase_jitter", s.phase_jitter);
  obj.read("fine_wavelength", s.fine_wavelength);
  obj.read("coarse_wavelength", s.coarse_wavelength);
  obj.read("carcinoma_amplitude", s.carcinoma_amplitude);
  obj.read("benign_amplitude", s.benign_amplitude);
  obj.read("coarse_amplitude", s.coarse_amplitude);
  obj.read("carcinoma_shift", s.carcinoma_shift);
  obj.read("aux_benign", s.aux_benign);
  obj.read("aux_malignant", s.aux_malignant);
  obj.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

double planted_signal(const DatasetSpec& spec, LeafLabel label, double radius_fraction,
                      double fine_phase, double coarse_phase) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double fine = std::cos(kTwoPi * radius_fraction / spec.fine_wavelength + fine_phase);
  const double coarse = std::cos(kTwoPi * radius_fraction / spec.coarse_wavelength + coarse_phase);
  switch (label) {
    case LeafLabel::Normal: return 0.0;
    case LeafLabel::Benign: return spec.benign_amplitude * fine;
    case LeafLabel::InSitu: return spec.carcinoma_shift + spec.carcinoma_amplitude * fine;
    case LeafLabel::Invasive:
      return spec.carcinoma_shift + spec.carcinoma_amplitude * fine + spec.coarse_amplitude * coarse;
  }
  return 0.0;
}

namespace {

Image render_sample(const DatasetSpec& spec, LeafLabel label, Rng& rng) {
  const auto h = static_cast<std::size_t>(spec.height);
  const auto w = static_cast<std::size_t>(spec.width);
  const auto c = static_cast<std::size_t>(spec.channels);
  std::uniform_real_distribution<double> jitter(-spec.phase_jitter, spec.phase_jitter);
  const double fine_phase = spec.phase_jitter > 0.0 ? jitter(rng) : 0.0;
  const double coarse_phase = spec.phase_jitter > 0.0 ? jitter(rng) : 0.0;
  std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);

  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double short_side = static_cast<double>(std::min(h, w));
  Image img(h, w, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double r = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) / short_side;
      const double signal = planted_signal(spec, label, r, fine_phase, coarse_phase);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double gain = 1.0 - 0.15 * static_cast<double>(ch);
        double v = 0.5 + gain * signal;
        if (spec.noise > 0.0) v += noise(rng);
        img.at(y, x, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

std::vector<LabeledImage> generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> out;
  out.reserve(4 * static_cast<std::size_t>(spec.n_per_class));
  std::size_t index = 0;
  for (LeafLabel label : hierarchy::kLeafLabels) {
    for (int i = 0; i < spec.n_per_class; ++i, ++index) {
      Rng rng = make_rng(spec.seed, "sample/" + std::to_string(index));
      out.push_back({render_sample(spec, label, rng), label, Source::Primary, std::nullopt});
    }
  }
  return out;
}

std::vector<LabeledImage> generate_auxiliary(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> out;
  const int total = spec.aux_benign + spec.aux_malignant;
  for (int i = 0; i < total; ++i) {
    Rng rng = make_rng(spec.seed, "aux/" + std::to_string(i));
    const bool benign = i < spec.aux_benign;
    LeafLabel label = LeafLabel::Benign;
    if (!benign) label = (i - spec.aux_benign) % 2 == 0 ? LeafLabel::InSitu : LeafLabel::Invasive;
    out.push_back({render_sample(spec, label, rng), label, Source::Auxiliary,
                   benign ? AuxLabel::BenignAux : AuxLabel::MalignantAux});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

namespace {

void require_valid(const Image& img) {
  if (img.height == 0 || img.width == 0 || img.channels == 0 ||
      img.pixels.size() != img.height * img.width * img.channels) {
    throw std::invalid_argument("degenerate image (" + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + "x" + std::to_string(img.channels) + ")");
  }
}

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

Tap source_tap(std::size_t dst, std::size_t in_size, std::size_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  double pos = (static_cast<double>(dst) + 0.5) * scale - 0.5;
  pos = std::clamp(pos, 0.0, static_cast<double>(in_size - 1));
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, pos - static_cast<double>(lo)};
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t out_height, std::size_t out_width) {
  require_valid(img);
  if (out_height == 0 || out_width == 0) throw std::invalid_argument("resize to an empty image");
  Image out(out_height, out_width, img.channels);
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap ty = source_tap(y, img.height, out_height);
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap tx = source_tap(x, img.width, out_width);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double p00 = img.at(ty.lo, tx.lo, c);
        const double p01 = img.at(ty.lo, tx.hi, c);
        const double p10 = img.at(ty.hi, tx.lo, c);
        const double p11 = img.at(ty.hi, tx.hi, c);
        const double top = p00 + tx.frac * (p01 - p00);
        const double bottom = p10 + tx.frac * (p11 - p10);
        const double v = top + ty.frac * (bottom - top);
        const double lo = std::min({p00, p01, p10, p11});
        const double hi = std::max({p00, p01, p10, p11});
        out.at(y, x, c) = std::clamp(v, lo, hi);
      }
    }
  }
  return out;
}

Image resize_preserve_ratio(const Image& img, int target_short) {
  require_valid(img);
  if (target_short < 1) throw std::invalid_argument("resize target must be >= 1");
  const auto target = static_cast<double>(target_short);
  if (img.height <= img.width) {
    const double aspect = static_cast<double>(img.width) / static_cast<double>(img.height);
    const auto long_side = static_cast<std::size_t>(std::llround(target * aspect));
    return resize_bilinear(img, static_cast<std::size_t>(target_short), long_side);
  }
  const double aspect = static_cast<double>(img.height) / static_cast<double>(img.width);
  const auto long_side = static_cast<std::size_t>(std::llround(target * aspect));
  return resize_bilinear(img, long_side, static_cast<std::size_t>(target_short));
}

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width) {
  require_valid(img);
  if (top + height > img.height || left + width > img.width || height == 0 || width == 0) {
    throw std::invalid_argument("crop window exceeds image bounds");
  }
  Image out(height, width, img.channels);
  for (std::size_t y = 0; y < height; ++y) {
    const double* src = &img.pixels[((top + y) * img.width + left) * img.channels];
    std::copy(src, src + width * img.channels, &out.pixels[y * width * img.channels]);
  }
  return out;
}

Image center_crop(const Image& img, int side) {
  require_valid(img);
  if (side < 1 || static_cast<std::size_t>(side) > std::min(img.height, img.width)) {
    throw std::invalid_argument("center crop side " + std::to_string(side) + " exceeds image " +
                                std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  const auto s = static_cast<std::size_t>(side);
  return crop(img, (img.height - s) / 2, (img.width - s) / 2, s, s);
}

Image rotate90(const Image& img, int quarter_turns) {
  require_valid(img);
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return img;
  Image current = img;
  for (int t = 0; t < turns; ++t) {
    Image next(current.width, current.height, current.channels);
    // Clockwise: source (y, x) lands at (x, H - 1 - y).
    for (std::size_t y = 0; y < current.height; ++y) {
      for (std::size_t x = 0; x < current.width; ++x) {
        for (std::size_t c = 0; c < current.channels; ++c) {
          next.at(x, current.height - 1 - y, c) = current.at(y, x, c);
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

Image flip_horizontal(const Image& img) {
  require_valid(img);
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

Image flip_vertical(const Image& img) {
  require_valid(img);
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(img.height - 1 - y, x, c) = img.at(y, x, c);
  return out;
}

namespace {

// Folds a pixel-centre coordinate into [-0.5, n - 0.5] by mirroring at the borders.
double reflect_coord(double u, std::size_t n) {
  const double period = 2.0 * static_cast<double>(n);
  double v = std::fmod(u + 0.5, period);
  if (v < 0.0) v += period;
  if (v > static_cast<double>(n)) v = period - v;
  return std::clamp(v - 0.5, 0.0, static_cast<double>(n - 1));
}

}  // namespace

Image rotate_angle(const Image& img, double radians) {
  require_valid(img);
  Image out(img.height, img.width, img.channels);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // Inverse map: rotate the output position back into the source.
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = reflect_coord(cy + c * dy - s * dx, img.height);
      const double sx = reflect_coord(cx + s * dy + c * dx, img.width);
      const auto y0 = static_cast<std::size_t>(sy);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, img.height - 1);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < img.channels; ++ch) {
        const double top = img.at(y0, x0, ch) + fx * (img.at(y0, x1, ch) - img.at(y0, x0, ch));
        const double bottom = img.at(y1, x0, ch) + fx * (img.at(y1, x1, ch) - img.at(y1, x0, ch));
        out.at(y, x, ch) = std::clamp(top + fy * (bottom - top), 0.0, 1.0);
      }
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  for (double p : {rotate_prob, hflip_prob, vflip_prob, crop_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("augment probabilities must be in [0, 1]");
  }
  if (crop_prob > 0.0 && crop_side < 1) throw std::invalid_argument("augment crop_side must be >= 1");
}

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  require_valid(img);
  cfg.validate();
  if (cfg.crop_prob > 0.0 &&
      static_cast<std::size_t>(cfg.crop_side) > std::min(img.height, img.width)) {
    throw std::invalid_argument("augment crop side " + std::to_string(cfg.crop_side) +
                                " exceeds image size");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image out = img;
  if (cfg.rotate_prob > 0.0 && unit(rng) < cfg.rotate_prob) {
    if (cfg.arbitrary_rotation) {
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      out = rotate_angle(out, angle(rng));
    } else {
      std::uniform_int_distribution<int> turns(1, 3);
      out = rotate90(out, turns(rng));
    }
  }
  if (cfg.hflip_prob > 0.0 && unit(rng) < cfg.hflip_prob) out = flip_horizontal(out);
  if (cfg.vflip_prob > 0.0 && unit(rng) < cfg.vflip_prob) out = flip_vertical(out);
  if (cfg.crop_prob > 0.0 && unit(rng) < cfg.crop_prob) {
    const auto side = static_cast<std::size_t>(cfg.crop_side);
    std::uniform_int_distribution<std::size_t> top(0, out.height - side);
    std::uniform_int_distribution<std::size_t> left(0, out.width - side);
    const std::size_t t = top(rng);
    const std::size_t l = left(rng);
    const std::size_t h = out.height;
    const std::size_t w = out.width;
    out = resize_bilinear(crop(out, t, l, side, side), h, w);
  }
  return out;
}

Image Preprocess::apply(const Image& img) const {
  return center_crop(resize_preserve_ratio(img, resize_short), crop);
}

std::vector<double> to_features(const Image& img) {
  std::vector<double> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (img.pixels[i] - 0.5) * 2.0;
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

std::array<std::size_t, 4> stratified_train_counts(const std::array<std::size_t, 4>& class_sizes,
                                                   double train_fraction) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainders{};
  std::size_t total = 0;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double quota = train_fraction * static_cast<double>(class_sizes[k]);
    counts[k] = static_cast<std::size_t>(std::floor(quota));
    remainders[k] = quota - static_cast<double>(counts[k]);
    total += class_sizes[k];
    assigned += counts[k];
  }
  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(total)));
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    const std::size_t k = order[i];
    if (counts[k] < class_sizes[k]) {
      ++counts[k];
      ++assigned;
    }
  }
  return counts;
}

SplitIndices stratified_split(std::span<const LabeledImage> data, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0, 1)");
  }
  Rng rng = make_rng(spec.seed, "split");
  SplitIndices split;

  if (!spec.stratified) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(data.size())));
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  } else {
    std::array<std::vector<std::size_t>, 4> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      members[static_cast<std::size_t>(data[i].label)].push_back(i);
    }
    std::array<std::size_t, 4> sizes{};
    for (std::size_t k = 0; k < 4; ++k) {
      sizes[k] = members[k].size();
      if (sizes[k] == 1) {
        throw StratificationError("class '" +
                                  std::string(hierarchy::leaf_name(static_cast<LeafLabel>(k))) +
                                  "' has fewer than 2 samples");
      }
    }
    const auto counts = stratified_train_counts(sizes, spec.train_fraction);
    for (std::size_t k = 0; k < 4; ++k) {
      auto& m = members[k];
      std::shuffle(m.begin(), m.end(), rng);
      split.train.insert(split.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(counts[k]));
      split.val.insert(split.val.end(), m.begin() + static_cast<std::ptrdiff_t>(counts[k]), m.end());
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

// ---------------------------------------------------------------------------
// Node datasets
// ---------------------------------------------------------------------------

NodeDataset node_relabel(std::span<const LabeledImage> data, NodeId node) {
  NodeDataset out;
  for (const auto& sample : data) {
    const LeafLabel label = sample.label;
    switch (node) {
      case NodeId::Carci:
        out.push_back({sample.image, hierarchy::is_carcinoma(label) ? 1 : 0});
        break;
      case NodeId::NorBe:
        if (label == LeafLabel::Normal) out.push_back({sample.image, 0});
        if (label == LeafLabel::Benign) out.push_back({sample.image, 1});
        break;
      case NodeId::InvIs:
        if (label == LeafLabel::InSitu) out.push_back({sample.image, 0});
        if (label == LeafLabel::Invasive) out.push_back({sample.image, 1});
        break;
    }
  }
  return out;
}

NodeDataset merge_auxiliary(std::span<const LabeledImage> primary,
                            std::span<const LabeledImage> aux, NodeId node) {
  NodeDataset out = node_relabel(primary, node);
  for (const auto& sample : aux) {
    if (!sample.aux_label) {
      throw std::invalid_argument("auxiliary sample without an auxiliary label");
    }
    const bool malignant = *sample.aux_label == AuxLabel::MalignantAux;
    switch (node) {
      case NodeId::Carci: out.push_back({sample.image, malignant ? 1 : 0}); break;
      case NodeId::NorBe:
        if (!malignant) out.push_back({sample.image, 1});
        break;
      case NodeId::InvIs: break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disk format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'X', 'I', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::string_view aux_dir(AuxLabel label) {
  return label == AuxLabel::BenignAux ? "aux_benign" : "aux_malignant";
}

std::string sample_file(std::string_view dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%05zu.bin", index);
  return std::string(dir) + "/" + name;
}

}  // namespace

std::string encode_image(const Image& img) {
  require_valid(img);
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(img.height));
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.channels));
  out.reserve(out.size() + img.pixels.size() * 8);
  for (double v : img.pixels) put_f64(out, v);
  return out;
}

Image decode_image(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not an image sample (bad magic)");
  }
  const auto h = static_cast<std::size_t>(get_le(bytes, 4, 4));
  const auto w = static_cast<std::size_t>(get_le(bytes, 8, 4));
  const auto c = static_cast<std::size_t>(get_le(bytes, 12, 4));
  if (h == 0 || w == 0 || c == 0) throw DataError("image sample has a zero dimension");
  if (bytes.size() != 16 + h * w * c * 8) throw DataError("image sample is truncated or oversized");
  Image img(h, w, c);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = std::bit_cast<double>(get_le(bytes, 16 + 8 * i, 8));
  }
  return img;
}

void write_image_file(const std::filesystem::path& path, const Image& img) {
  io::write_file_atomic(path, encode_image(img));
}

Image read_image_file(const std::filesystem::path& path) { return decode_image(io::read_file(path)); }

void write_dataset(const std::filesystem::path& dir, const DatasetOnDisk& dataset) {
  json samples = json::array();
  json counts = json::object();
  auto bump = [&counts](std::string_view key) {
    const std::string k(key);
    counts[k] = counts.value(k, 0) + 1;
  };
  for (std::size_t i = 0; i < dataset.primary.size(); ++i) {
    const auto& s = dataset.primary[i];
    const auto name = hierarchy::leaf_name(s.label);
    const std::string file = sample_file(name, i);
    write_image_file(dir / file, s.image);
    samples.push_back({{"file", file}, {"label", name}, {"source", "primary"}});
    bump(name);
  }
  for (std::size_t i = 0; i < dataset.auxiliary.size(); ++i) {
    const auto& s = dataset.auxiliary[i];
    if (!s.aux_label) throw std::invalid_argument("auxiliary sample without an auxiliary label");
    const auto folder = aux_dir(*s.aux_label);
    const std::string file = sample_file(folder, i);
    write_image_file(dir / file, s.image);
    samples.push_back({{"file", file},
                       {"label", hierarchy::leaf_name(s.label)},
                       {"source", "auxiliary"},
                       {"aux_label", *s.aux_label == AuxLabel::BenignAux ? "benign" : "malignant"}});
    bump(folder);
  }
  json manifest{{"format_version", 1},
                {"spec", dataset_spec_to_json(dataset.spec)},
                {"seed", dataset.spec.seed},
                {"counts", counts},
                {"samples", samples}};
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetOnDisk read_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw DataError("dataset manifest is not valid JSON: " + std::string(e.what()));
  }
  DatasetOnDisk dataset;
  try {
    dataset.spec = dataset_spec_from_json(manifest.at("spec"));
    for (const auto& entry : manifest.at("samples")) {
      LabeledImage sample;
      sample.image = read_image_file(dir / entry.at("file").get<std::string>());
      sample.label = hierarchy::leaf_from_name(entry.at("label").get<std::string>());
      if (entry.at("source").get<std::string>() == "auxiliary") {
        sample.source = Source::Auxiliary;
        sample.aux_label = entry.at("aux_label").get<std::string>() == "benign" ? AuxLabel::BenignAux
                                                                                : AuxLabel::MalignantAux;
        dataset.auxiliary.push_back(std::move(sample));
      } else {
        dataset.primary.push_back(std::move(sample));
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw DataError("dataset manifest spec: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw DataError("dataset manifest: " + std::string(e.what()));
  }
  return dataset;
}

}  // namespace hiernet::data
