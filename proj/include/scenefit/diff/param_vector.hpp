#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scenefit/errors.hpp"

namespace scenefit::diff {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named, contiguous, disjoint index ranges covering [0, total()).
class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t size) {
    if (find(name) != nullptr) throw InvalidInput("duplicate parameter segment '" + name + "'");
    const std::size_t offset = total_;
    segments_.push_back({std::move(name), offset, size});
    total_ += size;
    return offset;
  }

  const Segment* find(const std::string& name) const {
    for (const auto& s : segments_)
      if (s.name == name) return &s;
    return nullptr;
  }

  const Segment& at(const std::string& name) const {
    if (const Segment* s = find(name)) return *s;
    throw InvalidInput("unknown parameter segment '" + name + "'");
  }

  /// Segment owning a flat index.
  const Segment& segment_of(std::size_t index) const {
    for (const auto& s : segments_)
      if (index >= s.offset && index < s.offset + s.size) return s;
    throw InvalidInput("parameter index out of range");
  }

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t total() const { return total_; }

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    if (a.segments_.size() != b.segments_.size()) return false;
    for (std::size_t i = 0; i < a.segments_.size(); ++i) {
      const auto &x = a.segments_[i], &y = b.segments_[i];
      if (x.name != y.name || x.offset != y.offset || x.size != y.size) return false;
    }
    return true;
  }

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

using NamedValues = std::vector<std::pair<std::string, std::vector<double>>>;

class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout)
      : layout_(std::move(layout)), values_(layout_.total(), 0.0) {}
  ParamVector(ParamLayout layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_.total()) throw InvalidInput("parameter count does not match layout");
  }

  const ParamLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> segment(const std::string& name) {
    const Segment& s = layout_.at(name);
    return std::span<double>(values_).subspan(s.offset, s.size);
  }
  std::span<const double> segment(const std::string& name) const {
    const Segment& s = layout_.at(name);
    return std::span<const double>(values_).subspan(s.offset, s.size);
  }

  NamedValues unpack() const {
    NamedValues out;
    out.reserve(layout_.segments().size());
    for (const auto& s : layout_.segments()) {
      out.emplace_back(s.name, std::vector<double>(values_.begin() + static_cast<long>(s.offset),
                                                   values_.begin() + static_cast<long>(s.offset + s.size)));
    }
    return out;
  }

  static ParamVector pack(const NamedValues& named) {
    ParamLayout layout;
    std::vector<double> values;
    for (const auto& [name, v] : named) {
      layout.add(name, v.size());
      values.insert(values.end(), v.begin(), v.end());
    }
    return ParamVector(std::move(layout), std::move(values));
  }

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

/// Derivative of a scalar objective, index-aligned with its ParamVector.
struct Gradient {
  std::vector<double> values;
};

}  // namespace scenefit::diff
