#pragma once

// Grid attention maps: box rasterization, L1 normalization, two-glimpse
// supervision stacks, KL divergence and block-mean downsampling.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vqag/dataset.hpp"
#include "vqag/error.hpp"
#include "vqag/miner.hpp"

namespace vqag {

// Row-major H x W grid of non-negative reals; cell (y, x) is values[y * W + x].
class AttentionMap {
 public:
  AttentionMap() = default;
  AttentionMap(std::size_t height, std::size_t width)
      : height_(height), width_(width), values_(height * width, 0.0) {
    if (height == 0 || width == 0) throw InputError("attention map dimensions must be at least 1x1");
  }
  AttentionMap(std::size_t height, std::size_t width, std::vector<double> values, bool normalized = false)
      : height_(height), width_(width), values_(std::move(values)), normalized_(normalized) {
    if (height == 0 || width == 0) throw InputError("attention map dimensions must be at least 1x1");
    if (values_.size() != height * width) {
      throw InputError("attention map expects " + std::to_string(height * width) + " values, got " +
                       std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("attention map values must be finite and >= 0");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool normalized() const { return normalized_; }

  double at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  double& at(std::size_t y, std::size_t x) { return values_[y * width_ + x]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }
  bool same_shape(const AttentionMap& o) const { return height_ == o.height_ && width_ == o.width_; }

  AttentionMap& operator+=(const AttentionMap& o) {
    if (!same_shape(o)) throw InputError("attention map shape mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    normalized_ = false;
    return *this;
  }

  bool operator==(const AttentionMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
  bool normalized_ = false;
};

struct GlimpseStack {
  std::vector<AttentionMap> glimpses;
  std::vector<bool> supervision_mask;

  std::size_t size() const { return glimpses.size(); }

  bool operator==(const GlimpseStack&) const = default;
};

// Inclusive grid-cell span [lo, hi] touched by pixels [p_min, p_max] of an
// image `extent` pixels wide divided into `cells` cells.
struct CellSpan {
  std::size_t lo;
  std::size_t hi;
};

inline CellSpan cell_span(int p_min, int p_max, int extent, std::size_t cells) {
  const long long n = static_cast<long long>(cells);
  const long long lo = (static_cast<long long>(p_min) * n) / extent;
  const long long hi = ((static_cast<long long>(p_max) + 1) * n + extent - 1) / extent - 1;
  const auto clamp = [n](long long v) { return static_cast<std::size_t>(std::clamp(v, 0LL, n - 1)); };
  return {clamp(lo), clamp(hi)};
}

// Each cell counts the boxes whose scaled extent overlaps it.
inline AttentionMap rasterize(std::span<const BoundingBox> boxes, int img_w, int img_h, std::size_t height,
                              std::size_t width) {
  if (img_w <= 0 || img_h <= 0) throw InputError("image dimensions must be positive");
  AttentionMap map(height, width);
  for (const auto& b : boxes) {
    if (!b.valid_in(img_w, img_h)) throw InputError("box lies outside the image");
    const auto xs = cell_span(b.x_min, b.x_max, img_w, width);
    const auto ys = cell_span(b.y_min, b.y_max, img_h, height);
    for (std::size_t y = ys.lo; y <= ys.hi; ++y) {
      for (std::size_t x = xs.lo; x <= xs.hi; ++x) map.at(y, x) += 1.0;
    }
  }
  return map;
}

inline AttentionMap l1_normalize(const AttentionMap& m) {
  const double total = m.sum();
  if (!(total > 0.0)) throw InputError("no grounding mass: cannot normalize an all-zero map");
  std::vector<double> v(m.values().begin(), m.values().end());
  for (double& x : v) x /= total;
  return AttentionMap(m.height(), m.width(), std::move(v), true);
}

// Glimpse 0 is the object map, glimpse 1 the region map. An empty component
// is left as zeros and masked out; counting labels never supervise glimpse 1.
inline GlimpseStack build_supervision(const GroundingLabel& label, const QaTriplet& t, std::size_t height,
                                      std::size_t width) {
  const bool use_regions = !label.is_counting && !label.region_boxes.empty();
  const bool use_objects = !label.object_boxes.empty();
  if (!use_regions && !use_objects) {
    throw InputError("label for qa_id " + std::to_string(label.qa_id) + " has no boxes to supervise");
  }
  GlimpseStack s;
  const auto component = [&](const std::vector<BoundingBox>& boxes, bool use) {
    if (!use) return AttentionMap(height, width);
    return l1_normalize(rasterize(boxes, t.image_width, t.image_height, height, width));
  };
  s.glimpses.push_back(component(label.object_boxes, use_objects));
  s.glimpses.push_back(component(label.region_boxes, use_regions));
  s.supervision_mask = {use_objects, use_regions};
  return s;
}

inline double kl_divergence(const AttentionMap& p, const AttentionMap& q) {
  if (!p.same_shape(q)) throw InputError("kl_divergence: shape mismatch");
  double kl = 0.0;
  const auto pv = p.values();
  const auto qv = q.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] == 0.0) continue;
    if (!(qv[i] > 0.0)) throw InputError("kl_divergence: predicted map has zero mass where target is positive");
    kl += pv[i] * std::log(pv[i] / qv[i]);
  }
  return kl;
}

// Sum over the glimpses that `p` marks as supervised.
inline double kl_divergence(const GlimpseStack& p, const GlimpseStack& q) {
  if (p.size() != q.size() || p.supervision_mask.size() != p.size()) {
    throw InputError("kl_divergence: glimpse count mismatch");
  }
  double kl = 0.0;
  for (std::size_t g = 0; g < p.size(); ++g) {
    if (!p.glimpses[g].same_shape(q.glimpses[g])) throw InputError("kl_divergence: shape mismatch");
    if (p.supervision_mask[g]) kl += kl_divergence(p.glimpses[g], q.glimpses[g]);
  }
  return kl;
}

// Block-mean pooling; block i spans source rows [floor(i*h/H), floor((i+1)*h/H)).
inline AttentionMap downsample(const AttentionMap& src, std::size_t height, std::size_t width) {
  if (src.height() < height || src.width() < width) {
    throw InputError("downsample: source grid is smaller than the target grid");
  }
  AttentionMap out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t y0 = y * src.height() / height;
    const std::size_t y1 = (y + 1) * src.height() / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t x0 = x * src.width() / width;
      const std::size_t x1 = (x + 1) * src.width() / width;
      double acc = 0.0;
      for (std::size_t sy = y0; sy < y1; ++sy) {
        for (std::size_t sx = x0; sx < x1; ++sx) acc += src.at(sy, sx);
      }
      out.at(y, x) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace vqag
