#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "selfsim/tensor.hpp"

namespace selfsim {

/// One lattice snapshot: `channels` feature planes over a periodic lattice
/// with 1 or 2 axes. Values are channels-first, `[channel, axis0, axis1]`.
class Field {
 public:
  Field() = default;
  Field(std::vector<std::size_t> extents, std::size_t channels, double fill = 0.0);
  Field(std::vector<std::size_t> extents, std::size_t channels, std::vector<double> values);

  /// Single-channel 1D field.
  static Field line(std::vector<double> values);

  const std::vector<std::size_t>& extents() const noexcept { return extents_; }
  std::size_t dims() const noexcept { return extents_.size(); }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t sites() const noexcept;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Value of channel `c` at 1D site `i`.
  double at(std::size_t c, std::size_t i) const { return values_[c * sites() + i]; }
  /// Value of channel `c` at 2D site `(i, j)`.
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return values_[(c * extents_[0] + i) * extents_[1] + j];
  }

  bool same_shape(const Field& other) const noexcept {
    return extents_ == other.extents_ && channels_ == other.channels_;
  }
  double sum() const noexcept;

  /// `[1, channels, extents...]`
  Tensor as_batch() const;
  static Field from_tensor(const Tensor& t, std::size_t batch_index = 0);

  /// Cyclic shift of every axis by the given offsets (positive = towards
  /// larger indices).
  Field rolled(std::span<const std::ptrdiff_t> shift) const;

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::vector<std::size_t> extents_;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

enum class Scale { micro, macro };

/// Time-ordered, shape-congruent Fields with a fixed frame spacing.
struct Trajectory {
  std::vector<Field> frames;
  double dt = 1.0;
  Scale origin = Scale::micro;

  std::size_t length() const noexcept { return frames.size(); }
  const Field& operator[](std::size_t t) const { return frames[t]; }

  /// Throws DimensionError if frames are missing or not shape-congruent.
  void validate(std::size_t min_length = 2) const;

  /// Frames `[first, first + count)` stacked as `[1, channels, count, extents...]`,
  /// the layout the coarse-graining encoder consumes.
  Tensor block(std::size_t first, std::size_t count) const;

  /// Inverse of block(): splits `[1, channels, count, extents...]` into frames.
  static Trajectory from_block(const Tensor& block, double dt, Scale origin);

  Trajectory rolled(std::span<const std::ptrdiff_t> shift) const;
};

}  // namespace selfsim
