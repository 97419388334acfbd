#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scenefit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed inputs: mismatched shapes, invalid intrinsics, bad files.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& where, long step = -1)
      : Error("non-finite loss in " + where +
              (step >= 0 ? " at step " + std::to_string(step) : std::string())),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class NonFiniteGradient : public Error {
 public:
  NonFiniteGradient(const std::string& segment, std::size_t begin, std::size_t end)
      : Error("non-finite gradient in segment '" + segment + "' [" + std::to_string(begin) +
              ", " + std::to_string(end) + ")"),
        segment_(segment),
        begin_(begin),
        end_(end) {}
  const std::string& segment() const { return segment_; }
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }

 private:
  std::string segment_;
  std::size_t begin_, end_;
};

class EmptyCloud : public Error {
 public:
  EmptyCloud() : Error("point cloud is empty") {}
};

class EmptyMask : public Error {
 public:
  EmptyMask() : Error("mask has no foreground pixels") {}
};

class VertexOutsideCage : public Error {
 public:
  explicit VertexOutsideCage(std::size_t vertex)
      : Error("mesh vertex " + std::to_string(vertex) + " is not strictly inside the cage"),
        vertex_(vertex) {}
  std::size_t vertex() const { return vertex_; }

 private:
  std::size_t vertex_;
};

class IsolatedVertex : public Error {
 public:
  explicit IsolatedVertex(std::size_t vertex)
      : Error("mesh vertex " + std::to_string(vertex) + " has no neighbours"), vertex_(vertex) {}
  std::size_t vertex() const { return vertex_; }

 private:
  std::size_t vertex_;
};

class EmptyObjectCloud : public Error {
 public:
  explicit EmptyObjectCloud(std::size_t object)
      : Error("object " + std::to_string(object) + " has too few valid depth points"), object_(object) {}
  std::size_t object() const { return object_; }

 private:
  std::size_t object_;
};

class PlacementFailed : public Error {
 public:
  PlacementFailed() : Error("scene placement failed after the rejection-sampling budget") {}
};

class NotRenderable : public Error {
 public:
  using Error::Error;
};

}  // namespace scenefit
