#include "selfsim/field.hpp"

#include "selfsim/errors.hpp"

namespace selfsim {

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t n = 1;
  for (auto e : v) n *= e;
  return n;
}

void check_field_shape(const std::vector<std::size_t>& extents, std::size_t channels) {
  if (extents.empty() || extents.size() > 2) {
    throw DimensionError("fields have 1 or 2 lattice axes, got " + std::to_string(extents.size()));
  }
  if (channels == 0) throw DimensionError("fields need at least one channel");
  for (auto e : extents) {
    if (e == 0) throw DimensionError("lattice extents must be positive");
  }
}

}  // namespace

Field::Field(std::vector<std::size_t> extents, std::size_t channels, double fill)
    : extents_(std::move(extents)), channels_(channels) {
  check_field_shape(extents_, channels_);
  values_.assign(channels_ * product(extents_), fill);
}

Field::Field(std::vector<std::size_t> extents, std::size_t channels, std::vector<double> values)
    : extents_(std::move(extents)), channels_(channels), values_(std::move(values)) {
  check_field_shape(extents_, channels_);
  if (values_.size() != channels_ * product(extents_)) {
    throw DimensionError("field needs " + std::to_string(channels_ * product(extents_)) + " values, got " +
                         std::to_string(values_.size()));
  }
}

Field Field::line(std::vector<double> values) {
  const std::size_t n = values.size();
  return Field({n}, 1, std::move(values));
}

std::size_t Field::sites() const noexcept { return product(extents_); }

double Field::sum() const noexcept {
  double acc = 0.0;
  for (double v : values_) acc += v;
  return acc;
}

Tensor Field::as_batch() const {
  Shape shape{1, channels_};
  shape.insert(shape.end(), extents_.begin(), extents_.end());
  return Tensor(std::move(shape), values_);
}

Field Field::from_tensor(const Tensor& t, std::size_t batch_index) {
  const auto& s = t.shape();
  if (s.size() < 3 || s.size() > 4 || batch_index >= s[0]) {
    throw DimensionError("cannot view tensor " + to_string(s) + " as a lattice field");
  }
  std::vector<std::size_t> extents(s.begin() + 2, s.end());
  const std::size_t n = s[1] * product(extents);
  std::vector<double> values(t.data() + batch_index * n, t.data() + (batch_index + 1) * n);
  return Field(std::move(extents), s[1], std::move(values));
}

Field Field::rolled(std::span<const std::ptrdiff_t> shift) const {
  if (shift.size() != extents_.size()) throw DimensionError("roll needs one offset per axis");
  Field out(extents_, channels_);
  const std::size_t n0 = extents_[0];
  const std::size_t n1 = extents_.size() > 1 ? extents_[1] : 1;
  const auto wrap = [](std::ptrdiff_t v, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
  };
  for (std::size_t c = 0; c < channels_; ++c) {
    for (std::size_t i = 0; i < n0; ++i) {
      const std::size_t ti = wrap(static_cast<std::ptrdiff_t>(i) + shift[0], n0);
      for (std::size_t j = 0; j < n1; ++j) {
        const std::size_t tj = extents_.size() > 1 ? wrap(static_cast<std::ptrdiff_t>(j) + shift[1], n1) : 0;
        out.values_[(c * n0 + ti) * n1 + tj] = values_[(c * n0 + i) * n1 + j];
      }
    }
  }
  return out;
}

void Trajectory::validate(std::size_t min_length) const {
  if (frames.size() < min_length) {
    throw DimensionError("trajectory needs at least " + std::to_string(min_length) + " frames, has " +
                         std::to_string(frames.size()));
  }
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw DimensionError("trajectory frames differ in shape");
  }
}

Tensor Trajectory::block(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > frames.size()) {
    throw DimensionError("block [" + std::to_string(first) + ", " + std::to_string(first + count) +
                         ") outside trajectory of length " + std::to_string(frames.size()));
  }
  const Field& f0 = frames[first];
  const std::size_t sites = f0.sites();
  const std::size_t channels = f0.channels();
  Shape shape{1, channels, count};
  shape.insert(shape.end(), f0.extents().begin(), f0.extents().end());
  Tensor out(shape);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < count; ++t) {
      const Field& f = frames[first + t];
      if (!f.same_shape(f0)) throw DimensionError("trajectory frames differ in shape");
      std::copy_n(f.values().data() + c * sites, sites, out.data() + (c * count + t) * sites);
    }
  }
  return out;
}

Trajectory Trajectory::from_block(const Tensor& block, double dt, Scale origin) {
  const auto& s = block.shape();
  if (s.size() < 4 || s.size() > 5 || s[0] != 1) {
    throw DimensionError("expected [1, channels, frames, extents...], got " + to_string(s));
  }
  std::vector<std::size_t> extents(s.begin() + 3, s.end());
  const std::size_t channels = s[1];
  const std::size_t count = s[2];
  const std::size_t sites = product(extents);
  Trajectory out;
  out.dt = dt;
  out.origin = origin;
  for (std::size_t t = 0; t < count; ++t) {
    Field f(extents, channels);
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(block.data() + (c * count + t) * sites, sites, f.values().data() + c * sites);
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

Trajectory Trajectory::rolled(std::span<const std::ptrdiff_t> shift) const {
  Trajectory out{{}, dt, origin};
  out.frames.reserve(frames.size());
  for (const auto& f : frames) out.frames.push_back(f.rolled(shift));
  return out;
}

}  // namespace selfsim
