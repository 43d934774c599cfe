#include "mpr/vocabulary.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "mpr/error.hpp"

namespace mpr {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'M', 'P', 'R', 'V', 'O', 'C', '0', '1'};
constexpr int kMaxIterations = 10;

using Index = std::uint32_t;

/// Bitwise majority of a cluster (ties -> 0), then the member closest to it.
std::size_t medoid_of(std::span<const BinaryFeature> features, const std::vector<Index>& members) {
  std::array<int, 256> ones{};
  if (members.size() < 64) {
    for (Index m : members) {
      const auto& f = features[m];
      for (int b = 0; b < 256; ++b) ones[std::size_t(b)] += (f[std::size_t(b / 8)] >> (b % 8)) & 1;
    }
  } else {
    // large clusters: histogram byte values per position, expand to bits once
    std::vector<std::array<int, 256>> histogram(32);
    for (Index m : members) {
      const auto& f = features[m];
      for (std::size_t i = 0; i < 32; ++i) ++histogram[i][f[i]];
    }
    for (std::size_t i = 0; i < 32; ++i) {
      for (int v = 0; v < 256; ++v) {
        if (const int n = histogram[i][std::size_t(v)]) {
          for (int b = 0; b < 8; ++b) ones[i * 8 + std::size_t(b)] += ((v >> b) & 1) * n;
        }
      }
    }
  }
  BinaryFeature majority{};
  for (int b = 0; b < 256; ++b) {
    if (2 * ones[std::size_t(b)] > int(members.size())) majority[std::size_t(b / 8)] |= std::uint8_t(1u << (b % 8));
  }
  std::size_t best = 0;
  int best_d = 257;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const int d = hamming(features[members[i]], majority);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return members[best];
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const BinaryFeature> features, int k, int depth, std::uint64_t seed,
              std::vector<Vocabulary::Node>& nodes)
      : features_(features), k_(k), depth_(depth), rng_(seed), nodes_(nodes) {}

  std::size_t grow(Index node, std::vector<Index> members, int level) {
    std::vector<Index> distinct = distinct_members(members);
    if (level == depth_ || distinct.size() <= 1) {
      nodes_[node].word = Index(words_++);
      return words_;
    }

    std::vector<std::vector<Index>> groups;
    std::vector<Index> centers;
    if (distinct.size() <= std::size_t(k_)) {
      for (Index d : distinct) {
        centers.push_back(d);
        groups.emplace_back();
      }
      for (Index m : members) {
        const auto it = std::find_if(distinct.begin(), distinct.end(),
                                     [&](Index d) { return features_[d] == features_[m]; });
        groups[std::size_t(it - distinct.begin())].push_back(m);
      }
    } else {
      cluster(members, distinct, centers, groups);
    }

    const Index first_child = Index(nodes_.size());
    Index child = first_child;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].empty()) continue;
      Vocabulary::Node n;
      n.parent = node;
      n.center = features_[centers[c]];
      nodes_.push_back(n);
      nodes_[node].children.push_back(child++);
    }
    child = first_child;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].empty()) continue;
      grow(child++, std::move(groups[c]), level + 1);
    }
    return words_;
  }

 private:
  std::vector<Index> distinct_members(const std::vector<Index>& members) const {
    std::vector<Index> sorted = members;
    std::sort(sorted.begin(), sorted.end(), [&](Index a, Index b) {
      return features_[a] != features_[b] ? features_[a] < features_[b] : a < b;
    });
    std::vector<Index> out;
    for (Index m : sorted) {
      if (out.empty() || features_[out.back()] != features_[m]) out.push_back(m);
    }
    return out;
  }

  /// Seeded k-means++ initialization over distinct features, then medoid refinement.
  void cluster(const std::vector<Index>& members, const std::vector<Index>& distinct, std::vector<Index>& centers,
               std::vector<std::vector<Index>>& groups) {
    centers.push_back(distinct[std::uniform_int_distribution<std::size_t>(0, distinct.size() - 1)(rng_)]);
    std::vector<double> nearest(distinct.size(), 0.0);
    while (centers.size() < std::size_t(k_)) {
      double total = 0.0;
      for (std::size_t i = 0; i < distinct.size(); ++i) {
        int d = 257;
        for (Index c : centers) d = std::min(d, hamming(features_[distinct[i]], features_[c]));
        nearest[i] = double(d) * double(d);
        total += nearest[i];
      }
      if (total <= 0.0) break;
      double target = std::uniform_real_distribution<double>(0.0, total)(rng_);
      std::size_t pick = distinct.size() - 1;
      for (std::size_t i = 0; i < distinct.size(); ++i) {
        if (nearest[i] <= 0.0) continue;
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      centers.push_back(distinct[pick]);
    }

    std::vector<std::size_t> assignment(members.size(), std::size_t(-1));
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < members.size(); ++i) {
        std::size_t best = 0;
        int best_d = 257;
        for (std::size_t c = 0; c < centers.size(); ++c) {
          const int d = hamming(features_[members[i]], features_[centers[c]]);
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        if (assignment[i] != best) {
          assignment[i] = best;
          changed = true;
        }
      }
      groups.assign(centers.size(), {});
      for (std::size_t i = 0; i < members.size(); ++i) groups[assignment[i]].push_back(members[i]);
      if (!changed) break;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        if (!groups[c].empty()) centers[c] = Index(medoid_of(features_, groups[c]));
      }
    }
  }

  std::span<const BinaryFeature> features_;
  int k_;
  int depth_;
  std::mt19937_64 rng_;
  std::vector<Vocabulary::Node>& nodes_;
  std::size_t words_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw Error(ErrorCode::ParseError, "truncated vocabulary");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[pos + std::size_t(i)]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

Vocabulary Vocabulary::build(std::span<const BinaryFeature> features, int k, int depth, std::uint64_t seed) {
  if (k < 2 || depth < 1) throw Error(ErrorCode::InvalidArgument, "vocabulary needs k >= 2 and depth >= 1");
  if (features.size() < std::size_t(k)) {
    throw Error(ErrorCode::InsufficientFeatures,
                std::to_string(features.size()) + " features for branching factor " + std::to_string(k));
  }
  Vocabulary vocab;
  vocab.k_ = k;
  vocab.depth_ = depth;
  vocab.nodes_.emplace_back();
  vocab.nodes_[0].center = features[0];
  std::vector<Index> all(features.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = Index(i);
  TreeBuilder builder(features, k, depth, seed, vocab.nodes_);
  vocab.word_count_ = builder.grow(0, std::move(all), 0);
  return vocab;
}

std::uint32_t Vocabulary::quantize(const BinaryFeature& feature) const {
  if (nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "quantize with an empty vocabulary");
  Index node = 0;
  while (!nodes_[node].children.empty()) {
    Index best = nodes_[node].children.front();
    int best_d = 257;
    for (Index c : nodes_[node].children) {
      const int d = hamming(feature, nodes_[c].center);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    node = best;
  }
  return nodes_[node].word;
}

std::vector<std::uint8_t> Vocabulary::serialize() const {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, std::uint32_t(k_));
  put_u32(out, std::uint32_t(depth_));
  put_u32(out, std::uint32_t(nodes_.size()));
  put_u32(out, std::uint32_t(word_count_));
  for (const auto& n : nodes_) {
    put_u32(out, n.parent);
    put_u32(out, n.word);
  }
  for (const auto& n : nodes_) out.insert(out.end(), n.center.begin(), n.center.end());
  return out;
}

Vocabulary Vocabulary::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::ParseError, "not a vocabulary file");
  }
  std::size_t pos = kMagic.size();
  Vocabulary v;
  v.k_ = int(get_u32(bytes, pos));
  v.depth_ = int(get_u32(bytes, pos));
  const std::uint32_t count = get_u32(bytes, pos);
  v.word_count_ = get_u32(bytes, pos);
  if (v.k_ < 2 || v.depth_ < 1 || count == 0) throw Error(ErrorCode::ParseError, "bad vocabulary header");
  if (bytes.size() != pos + std::size_t(count) * (8 + 32)) throw Error(ErrorCode::ParseError, "vocabulary size mismatch");
  v.nodes_.resize(count);
  std::size_t words = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& n = v.nodes_[i];
    n.parent = get_u32(bytes, pos);
    n.word = get_u32(bytes, pos);
    if ((i == 0) != (n.parent == kNone) || (i > 0 && n.parent >= i)) {
      throw Error(ErrorCode::ParseError, "bad vocabulary node table");
    }
    if (n.word != kNone) ++words;
    if (i > 0) v.nodes_[n.parent].children.push_back(i);
  }
  for (auto& n : v.nodes_) {
    std::memcpy(n.center.data(), bytes.data() + pos, n.center.size());
    pos += n.center.size();
  }
  for (const auto& n : v.nodes_) {
    if ((n.word == kNone) == n.children.empty() || (n.word != kNone && n.word >= v.word_count_)) {
      throw Error(ErrorCode::ParseError, "inconsistent vocabulary leaves");
    }
  }
  if (words != v.word_count_) throw Error(ErrorCode::ParseError, "vocabulary word count mismatch");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace mpr
