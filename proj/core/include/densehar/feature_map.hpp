#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "densehar/error.hpp"

namespace densehar {

// Three-axis activation tensor, laid out channel-major: (channel, row, step)
// with `step` contiguous. Rows are the sensor-attribute axis, steps are time.
template <typename T>
class BasicFeatureMap {
 public:
  using value_type = T;

  BasicFeatureMap() = default;
  BasicFeatureMap(std::size_t channels, std::size_t rows, std::size_t steps, T fill = T(0))
      : channels_(channels), rows_(rows), steps_(steps), values_(channels * rows * steps, fill) {
    require(channels >= 1 && rows >= 1 && steps >= 1, ErrorKind::kInvalidArgument,
            "feature map extents must all be >= 1");
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t k, std::size_t i, std::size_t j) noexcept {
    return values_[(k * rows_ + i) * steps_ + j];
  }
  const T& operator()(std::size_t k, std::size_t i, std::size_t j) const noexcept {
    return values_[(k * rows_ + i) * steps_ + j];
  }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  bool same_shape(const BasicFeatureMap& other) const noexcept {
    return channels_ == other.channels_ && rows_ == other.rows_ && steps_ == other.steps_;
  }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    BasicFeatureMap<U> out(channels_, rows_, steps_);
    for (std::size_t n = 0; n < values_.size(); ++n) out.values()[n] = static_cast<U>(values_[n]);
    return out;
  }

  friend bool operator==(const BasicFeatureMap&, const BasicFeatureMap&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t rows_ = 0;
  std::size_t steps_ = 0;
  std::vector<T> values_;
};

using FeatureMap = BasicFeatureMap<float>;

}  // namespace densehar
