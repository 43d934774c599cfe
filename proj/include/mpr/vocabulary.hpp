#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mpr/descriptors.hpp"

namespace mpr {

/// Hierarchical k-medoids tree over 256-bit binary features. Leaves are words,
/// numbered in depth-first order at build time.
class Vocabulary {
 public:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  struct Node {
    std::uint32_t parent = kNone;
    std::uint32_t word = kNone;  // kNone for internal nodes
    BinaryFeature center{};
    std::vector<std::uint32_t> children;

    bool operator==(const Node&) const = default;
  };

  Vocabulary() = default;

  /// Throws InsufficientFeatures when fewer than k features are given. Identical
  /// inputs collapse to a single word.
  static Vocabulary build(std::span<const BinaryFeature> features, int k, int depth, std::uint64_t seed);

  std::uint32_t quantize(const BinaryFeature& feature) const;

  int branching() const noexcept { return k_; }
  int depth() const noexcept { return depth_; }
  std::size_t word_count() const noexcept { return word_count_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  bool empty() const noexcept { return nodes_.empty(); }

  std::vector<std::uint8_t> serialize() const;
  static Vocabulary deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary&) const = default;

 private:
  int k_ = 0;
  int depth_ = 0;
  std::size_t word_count_ = 0;
  std::vector<Node> nodes_;
};

/// Convenience: build with the same degenerate-input rules as Vocabulary::build.
inline Vocabulary build_vocabulary(std::span<const BinaryFeature> features, int k, int depth, std::uint64_t seed) {
  return Vocabulary::build(features, k, depth, seed);
}

}  // namespace mpr
