#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "satfuse/error.hpp"
#include "satfuse/io.hpp"
#include "satfuse/rng.hpp"

namespace satfuse {

inline constexpr int kPatchSize = 28;
inline constexpr int kChannels = 4;  // R, G, B, NIR
inline constexpr std::size_t kSatbinHeaderBytes = 20;

enum Channel : int { kRed = 0, kGreen = 1, kBlue = 2, kNir = 3 };

/// Non-owning view of one H x W x 4 patch, row-major, channel-interleaved.
struct PatchView {
  std::span<const std::uint8_t> pixels;
  int height = kPatchSize;
  int width = kPatchSize;
  int channels = kChannels;

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Owning patch.
struct ImagePatch {
  int height = kPatchSize;
  int width = kPatchSize;
  int channels = kChannels;
  std::vector<std::uint8_t> pixels;

  ImagePatch() : pixels(static_cast<std::size_t>(kPatchSize) * kPatchSize * kChannels, 0) {}
  ImagePatch(int h, int w, int c = kChannels)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  PatchView view() const { return {pixels, height, width, channels}; }
};

struct DatasetHeader {
  std::array<char, 4> magic{'S', 'A', 'T', 'B'};
  std::uint32_t count = 0;
  std::uint16_t height = kPatchSize;
  std::uint16_t width = kPatchSize;
  std::uint16_t channels = kChannels;
  std::uint16_t num_classes = 0;
};

/// Labeled patch collection stored contiguously. Immutable once loaded.
class LabeledSet {
 public:
  LabeledSet() = default;
  LabeledSet(int num_classes, int height = kPatchSize, int width = kPatchSize, int channels = kChannels)
      : num_classes_(num_classes), height_(height), width_(width), channels_(channels) {
    require(num_classes >= 1 && num_classes <= 255, ErrorKind::Argument, "num_classes must be in [1,255]");
    require(height > 0 && width > 0 && channels > 0, ErrorKind::Argument, "patch dimensions must be positive");
  }

  void add(PatchView patch, int label) {
    require(patch.height == height_ && patch.width == width_ && patch.channels == channels_, ErrorKind::Argument,
            "patch dimensions do not match the set");
    require(label >= 0 && label < num_classes_, ErrorKind::Label, "label " + std::to_string(label) + " out of range");
    pixels_.insert(pixels_.end(), patch.pixels.begin(), patch.pixels.end());
    labels_.push_back(static_cast<std::uint8_t>(label));
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int num_classes() const { return num_classes_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t patch_bytes() const { return static_cast<std::size_t>(height_) * width_ * channels_; }

  PatchView patch(std::size_t i) const {
    return {std::span(pixels_).subspan(i * patch_bytes(), patch_bytes()), height_, width_, channels_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  LabeledSet subset(std::span<const std::size_t> indices) const {
    LabeledSet out(num_classes_, height_, width_, channels_);
    out.pixels_.reserve(indices.size() * patch_bytes());
    out.labels_.reserve(indices.size());
    for (auto i : indices) out.add(patch(i), label(i));
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (auto l : labels_) ++counts[l];
    return counts;
  }

  /// Adopts pre-laid-out buffers; labels are validated against num_classes.
  static LabeledSet from_buffers(int num_classes, int height, int width, int channels,
                                 std::vector<std::uint8_t> pixels, std::vector<std::uint8_t> labels) {
    LabeledSet set(num_classes, height, width, channels);
    require(pixels.size() == labels.size() * set.patch_bytes(), ErrorKind::Length,
            "pixel buffer does not match label count");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= num_classes)
        throw Error(ErrorKind::Label, "patch " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                                          " >= " + std::to_string(num_classes));
    set.pixels_ = std::move(pixels);
    set.labels_ = std::move(labels);
    return set;
  }

  friend bool operator==(const LabeledSet&, const LabeledSet&) = default;

 private:
  int num_classes_ = 2;
  int height_ = kPatchSize;
  int width_ = kPatchSize;
  int channels_ = kChannels;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint8_t> labels_;
};

// ---------------------------------------------------------------------------
// SATBIN container
//
//   0  'SATB'            4 bytes
//   4  count             u32
//   8  height            u16
//  10  width             u16
//  12  channels          u16
//  14  num_classes       u16
//  16  reserved (0)      u32
//  20  pixels            count*H*W*C bytes, patch-major, row-major, channel-interleaved
//      labels            count bytes
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_satbin(const LabeledSet& set) {
  io::ByteWriter w;
  for (char c : {'S', 'A', 'T', 'B'}) w.put(static_cast<std::uint8_t>(c));
  w.put(static_cast<std::uint32_t>(set.size()));
  w.put(static_cast<std::uint16_t>(set.height()));
  w.put(static_cast<std::uint16_t>(set.width()));
  w.put(static_cast<std::uint16_t>(set.channels()));
  w.put(static_cast<std::uint16_t>(set.num_classes()));
  w.put(static_cast<std::uint32_t>(0));
  w.put_bytes(set.pixels());
  w.put_bytes(set.labels());
  return w.take();
}

inline LabeledSet parse_satbin(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= kSatbinHeaderBytes, ErrorKind::Length, "SATBIN shorter than its 20-byte header");
  require(bytes[0] == 'S' && bytes[1] == 'A' && bytes[2] == 'T' && bytes[3] == 'B', ErrorKind::Format,
          "bad SATBIN magic");
  io::ByteReader r(bytes.subspan(4));
  DatasetHeader h;
  h.count = r.get<std::uint32_t>();
  h.height = r.get<std::uint16_t>();
  h.width = r.get<std::uint16_t>();
  h.channels = r.get<std::uint16_t>();
  h.num_classes = r.get<std::uint16_t>();
  r.get<std::uint32_t>();
  require(h.height > 0 && h.width > 0 && h.channels > 0, ErrorKind::Format, "SATBIN has a zero dimension");
  require(h.num_classes >= 1 && h.num_classes <= 255, ErrorKind::Format, "SATBIN num_classes out of range");

  const std::uint64_t payload = std::uint64_t{h.count} * h.height * h.width * h.channels;
  require(r.remaining() == payload + h.count, ErrorKind::Length,
          "SATBIN payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
              std::to_string(payload + h.count));

  auto pix = r.get_bytes(payload);
  auto lab = r.get_bytes(h.count);
  return LabeledSet::from_buffers(h.num_classes, h.height, h.width, h.channels, {pix.begin(), pix.end()},
                                  {lab.begin(), lab.end()});
}

inline LabeledSet read_satbin(const std::filesystem::path& path) { return parse_satbin(io::read_file(path)); }

inline void write_satbin(const LabeledSet& set, const std::filesystem::path& path) {
  io::atomic_write(path, encode_satbin(set));
}

// ---------------------------------------------------------------------------

/// Stratified, seeded split. Per-class counts follow largest-remainder
/// apportionment so the first part has exactly round(fraction * N) patches and
/// each class lands within one patch of fraction * class count.
inline std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::Argument, "split fraction must lie in (0,1)");
  require(!set.empty(), ErrorKind::Argument, "cannot split an empty set");

  const int k = set.num_classes();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.label(i)].push_back(i);

  const auto total_first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(set.size())));
  std::vector<std::size_t> take(k);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int c = 0; c < k; ++c) {
    const double ideal = fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(ideal));
    assigned += take[c];
    remainders.emplace_back(ideal - std::floor(ideal), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total_first && r < remainders.size(); ++r) {
    const int c = remainders[r].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> first, second;
  for (int c = 0; c < k; ++c) {
    auto& idx = by_class[c];
    rng.shuffle(std::span(idx));
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {set.subset(first), set.subset(second)};
}

/// Unit-scaled copy of a patch, same layout (H x W x C, channel-interleaved).
inline std::vector<double> to_unit(PatchView patch) {
  std::vector<double> out(patch.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = patch.pixels[i] / 255.0;
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic SAT-like data
//
// Each class has its own mean level per channel (NIR means at least 30 gray
// levels apart) and its own texture: a Gaussian field box-smoothed with a
// class-specific radius and anisotropy, so co-occurrence statistics differ
// between classes. A random per-patch gain in [0.3, 1.7] multiplies every
// band, so absolute levels overlap between classes while band ratios keep the
// class signal; independent per-pixel noise is added on top.
// ---------------------------------------------------------------------------

struct SynthClassProfile {
  std::array<double, kChannels> mean;  // gray levels
  int radius_y;                        // smoothing half-widths
  int radius_x;
  double amplitude;                    // texture std in gray levels
};

inline SynthClassProfile synth_profile(int c) {
  static constexpr std::array<std::array<int, 2>, 6> kRadii{{{1, 1}, {2, 2}, {1, 2}, {2, 1}, {0, 1}, {3, 0}}};
  SynthClassProfile p{};
  // NIR levels stay clear of 255 so no gain saturates a whole channel.
  static constexpr std::array<double, 6> kNir{50.0, 90.0, 130.0, 170.0, 210.0, 20.0};
  p.mean = {100.0 + 4.0 * c, 105.0 - 3.0 * c, 90.0, kNir[c]};
  p.radius_y = kRadii[c][0];
  p.radius_x = kRadii[c][1];
  p.amplitude = 22.0;
  return p;
}

inline LabeledSet synth_generate(int num_per_class, int num_classes, std::uint64_t seed) {
  require(num_classes == 4 || num_classes == 6, ErrorKind::Argument, "synthetic data supports K = 4 or 6");
  require(num_per_class > 0, ErrorKind::Argument, "num_per_class must be positive");

  constexpr int n = kPatchSize;
  constexpr int pad = 4;
  constexpr int big = n + 2 * pad;
  LabeledSet set(num_classes);
  Rng rng(seed);
  std::vector<double> noise(static_cast<std::size_t>(big) * big);
  std::vector<double> field(static_cast<std::size_t>(n) * n);

  for (int i = 0; i < num_per_class; ++i) {
    for (int c = 0; c < num_classes; ++c) {
      const auto prof = synth_profile(c);
      const double gain = rng.uniform(0.3, 1.7);
      ImagePatch patch;
      for (int ch = 0; ch < kChannels; ++ch) {
        for (auto& v : noise) v = rng.normal();
        double sum = 0.0, sum_sq = 0.0;
        for (int y = 0; y < n; ++y) {
          for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int dy = -prof.radius_y; dy <= prof.radius_y; ++dy)
              for (int dx = -prof.radius_x; dx <= prof.radius_x; ++dx)
                acc += noise[static_cast<std::size_t>(y + pad + dy) * big + (x + pad + dx)];
            field[static_cast<std::size_t>(y) * n + x] = acc;
            sum += acc;
            sum_sq += acc * acc;
          }
        }
        const double mean = sum / (n * n);
        const double sd = std::sqrt(std::max(sum_sq / (n * n) - mean * mean, 1e-12));
        for (int y = 0; y < n; ++y) {
          for (int x = 0; x < n; ++x) {
            const double z = (field[static_cast<std::size_t>(y) * n + x] - mean) / sd;
            const double v = gain * (prof.mean[ch] + prof.amplitude * z) + 20.0 * rng.normal();
            patch.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          }
        }
      }
      set.add(patch.view(), c);
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Raw conversion inputs
//
// RAWSAT layout (little-endian), the one-time dump of the published arrays:
//   u32 count, u16 height, u16 width, u16 channels, u16 num_classes,
//   count*H*W*C pixel bytes in the same order as SATBIN,
//   count*num_classes one-hot label bytes (class index fastest).
//
// CSV layout: one patch per row, H*W*C integer columns in row-major,
// channel-interleaved order, no header; labels in a second CSV with one
// one-hot row of K integers per patch.
// ---------------------------------------------------------------------------

inline int one_hot_to_index(std::span<const std::uint8_t> row, std::size_t patch) {
  int found = -1;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] == 0) continue;
    require(row[k] == 1 && found < 0, ErrorKind::Label, "patch " + std::to_string(patch) + ": label row is not one-hot");
    found = static_cast<int>(k);
  }
  require(found >= 0, ErrorKind::Label, "patch " + std::to_string(patch) + ": label row is all zero");
  return found;
}

inline LabeledSet parse_rawsat(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const auto count = r.get<std::uint32_t>();
  const int h = r.get<std::uint16_t>();
  const int w = r.get<std::uint16_t>();
  const int c = r.get<std::uint16_t>();
  const int k = r.get<std::uint16_t>();
  require(h > 0 && w > 0 && c > 0 && k >= 1, ErrorKind::Format, "raw header has a zero dimension");
  const std::uint64_t per = std::uint64_t(h) * w * c;
  require(r.remaining() == count * per + std::uint64_t{count} * k, ErrorKind::Length, "raw payload size mismatch");
  auto pix = r.get_bytes(count * per);
  auto hot = r.get_bytes(std::uint64_t{count} * k);
  LabeledSet set(k, h, w, c);
  for (std::size_t i = 0; i < count; ++i)
    set.add({pix.subspan(i * per, per), h, w, c}, one_hot_to_index(hot.subspan(i * k, k), i));
  return set;
}

inline LabeledSet parse_csv_patches(std::string_view pixels_csv, std::string_view labels_csv, int height, int width,
                                    int channels) {
  auto rows = [](std::string_view text) {
    std::vector<std::vector<std::uint8_t>> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(pos, end - pos);
      pos = end + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      std::vector<std::uint8_t> row;
      std::size_t start = 0;
      while (true) {
        auto comma = line.find(',', start);
        auto item = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        const double v = io::parse_real(item);
        require(v >= 0 && v <= 255 && v == std::floor(v), ErrorKind::Format, "CSV value outside 0..255");
        row.push_back(static_cast<std::uint8_t>(v));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      out.push_back(std::move(row));
    }
    return out;
  };
  auto pix = rows(pixels_csv);
  auto hot = rows(labels_csv);
  require(pix.size() == hot.size(), ErrorKind::Length, "pixel and label CSVs differ in row count");
  require(!hot.empty(), ErrorKind::Length, "no rows in label CSV");
  const auto per = static_cast<std::size_t>(height) * width * channels;
  LabeledSet set(static_cast<int>(hot.front().size()), height, width, channels);
  for (std::size_t i = 0; i < pix.size(); ++i) {
    require(pix[i].size() == per, ErrorKind::Length, "pixel row " + std::to_string(i) + " has wrong width");
    require(hot[i].size() == hot.front().size(), ErrorKind::Length, "label row " + std::to_string(i) + " has wrong width");
    set.add({pix[i], height, width, channels}, one_hot_to_index(hot[i], i));
  }
  return set;
}

}  // namespace satfuse
