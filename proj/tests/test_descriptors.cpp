#include <doctest.h>

#include <fstream>
#include <numeric>
#include <random>

#include <opencv2/imgproc.hpp>

#include "mpr/descriptors.hpp"
#include "mpr/error.hpp"
#include "mpr/vocabulary.hpp"
#include "support.hpp"

using namespace mpr;
using test::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an mpr::Error");
  return ErrorCode::InvalidArgument;
}

cv::Mat checkerboard(int size, int square) {
  cv::Mat img(size, size, CV_8UC1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) img.at<std::uint8_t>(y, x) = ((x / square + y / square) % 2) ? 255 : 0;
  }
  return img;
}

std::vector<BinaryFeature> random_features(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::vector<BinaryFeature> out(n);
  for (auto& f : out) {
    for (auto& b : f) b = std::uint8_t(rng());
  }
  return out;
}

const cv::Mat& street_frame() {
  static const cv::Mat frame = generate_synthetic_pair(3, 1, {}).database.frames[0].color;
  return frame;
}

double l2(const DenseVector& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

TEST_CASE("channel naming and validity") {
  CHECK(kCanonicalChannels.size() == 9);
  for (std::size_t k = 0; k < kCanonicalChannels.size(); ++k) {
    const Channel c = kCanonicalChannels[k];
    CHECK(is_valid_channel(c));
    CHECK(canonical_index(c) == k);
    CHECK(parse_channel(channel_key(c)) == c);
    CHECK(parse_channel(channel_label(c)) == c);
  }
  CHECK(channel_label(kCanonicalChannels[0]) == "BoW-c");
  CHECK(channel_label(kCanonicalChannels[8]) == "CNN-c");
  CHECK_FALSE(is_valid_channel({DescriptorKind::BoW, Modality::Depth}));
  CHECK_FALSE(is_valid_channel({DescriptorKind::CNN, Modality::Depth}));
  CHECK_FALSE(is_valid_channel({DescriptorKind::CNN, Modality::Infrared}));
  CHECK(code_of([] { canonical_index({DescriptorKind::CNN, Modality::Infrared}); }) == ErrorCode::InvalidChannel);
}

TEST_CASE("illumination invariant transform") {
  SUBCASE("gray pixels give 0.5 before rescaling") {
    cv::Mat gray(4, 4, CV_8UC3);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        const auto v = std::uint8_t(y * 60 + x * 5);
        gray.at<cv::Vec3b>(y, x) = {v, v, v};
      }
    }
    for (double alpha : {0.1, 0.48, 0.9}) {
      const cv::Mat r = illumination_invariant_response(gray, alpha);
      for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) CHECK(r.at<double>(y, x) == doctest::Approx(0.5).epsilon(1e-12));
      }
      const cv::Mat t = illumination_invariant_transform(gray, alpha);
      CHECK(t.type() == CV_8UC1);
      CHECK(cv::countNonZero(t) == 0);
    }
  }
  SUBCASE("exposure scaling shifts the response by a constant") {
    // X -> 2X + 1 doubles (X + 1) / 256 exactly
    std::mt19937 rng(3);
    cv::Mat base(16, 16, CV_8UC3);
    cv::Mat bright(16, 16, CV_8UC3);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) {
          const int v = int(rng() % 128);
          base.at<cv::Vec3b>(y, x)[c] = std::uint8_t(v);
          bright.at<cv::Vec3b>(y, x)[c] = std::uint8_t(2 * v + 1);
        }
      }
    }
    const cv::Mat a = illumination_invariant_response(base);
    const cv::Mat b = illumination_invariant_response(bright);
    const double offset = b.at<double>(0, 0) - a.at<double>(0, 0);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) CHECK(b.at<double>(y, x) - a.at<double>(y, x) == doctest::Approx(offset).epsilon(1e-12));
    }
  }
  SUBCASE("rescaled to the full 8-bit range") {
    const cv::Mat t = illumination_invariant_transform(street_frame());
    double lo = 0;
    double hi = 0;
    cv::minMaxLoc(t, &lo, &hi);
    CHECK(lo == 0);
    CHECK(hi == 255);
  }
  SUBCASE("needs three channels") {
    CHECK(code_of([] { illumination_invariant_response(cv::Mat(4, 4, CV_8UC1, cv::Scalar(1))); }) ==
          ErrorCode::WrongChannelCount);
  }
  CHECK(kDefaultIlluminationAlpha == 0.48);
}

TEST_CASE("GIST") {
  const cv::Mat gray = to_gray(street_frame());
  const DescriptorVector d = extract_gist(gray);
  CHECK(d.dimension == 512);
  CHECK(d.dense().size() == 512);
  CHECK(d.kind == DescriptorKind::GIST);
  for (double v : d.dense()) REQUIRE((std::isfinite(v) && v >= 0.0));
  CHECK(l2(d.dense()) > 0.0);

  CHECK(extract_gist(gray).dense() == d.dense());

  const DescriptorVector flat = extract_gist(cv::Mat(240, 320, CV_8UC1, cv::Scalar(77)));
  CHECK(flat.dense() == DenseVector(512, 0.0));

  SUBCASE("quarter turn keeps total energy within 2%") {
    const cv::Mat square = gray(cv::Rect(40, 0, 240, 240)).clone();
    cv::Mat turned;
    cv::rotate(square, turned, cv::ROTATE_90_CLOCKWISE);
    const double a = l2(extract_gist(square).dense());
    const double b = l2(extract_gist(turned).dense());
    CHECK(std::abs(a - b) / a < 0.02);
  }
  CHECK(code_of([] { extract_gist(cv::Mat()); }) == ErrorCode::EmptyImage);
}

TEST_CASE("LDB") {
  LdbParams p;
  // direct enumeration of unordered cell pairs per level
  std::size_t pairs = 0;
  for (int g : p.levels) {
    for (int a = 0; a < g * g; ++a) {
      for (int b = a + 1; b < g * g; ++b) ++pairs;
    }
  }
  CHECK(3 * pairs == 1386);
  CHECK(p.bit_count() == 1386);
  LdbParams other;
  other.levels = {1, 3, 7};
  CHECK(other.bit_count() == 3 * (0 + 36 + 1176));

  const cv::Mat gray = to_gray(street_frame());
  const DescriptorVector d = extract_ldb(gray);
  CHECK(d.dimension == 1386);
  CHECK(d.bits().size == 1386);
  CHECK(d.bits().popcount() > 0);
  CHECK(descriptor_distance(d, extract_ldb(gray)) == 0.0);

  const DescriptorVector flat = extract_ldb(cv::Mat(50, 70, CV_8UC1, cv::Scalar(200)));
  CHECK(flat.bits().popcount() == 0);

  SUBCASE("first level encodes the brighter half") {
    // left half dark, right half bright: at level 2 cells 1 and 3 (right) beat 0 and 2
    cv::Mat img(64, 64, CV_8UC1, cv::Scalar(10));
    img(cv::Rect(32, 0, 32, 64)).setTo(200);
    LdbParams two;
    two.levels = {2};
    const BitString bits = extract_ldb(img, two).bits();
    // pair order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3); bit 0 of each triple is intensity
    CHECK_FALSE(bits.test(0 * 3));
    CHECK_FALSE(bits.test(1 * 3));
    CHECK_FALSE(bits.test(2 * 3));
    CHECK(bits.test(3 * 3));
    CHECK_FALSE(bits.test(4 * 3));
    CHECK_FALSE(bits.test(5 * 3));
  }
  CHECK(code_of([] { extract_ldb(cv::Mat()); }) == ErrorCode::EmptyImage);
}

TEST_CASE("ORB features") {
  CHECK(detect_and_describe(cv::Mat(100, 100, CV_8UC1, cv::Scalar(90))).empty());

  const cv::Mat board = checkerboard(64, 8);
  const auto kps = detect_and_describe(board);
  CHECK(kps.size() >= 20);
  CHECK(detect_and_describe(board) == kps);

  const cv::Mat gray = to_gray(street_frame());
  OrbParams few;
  few.max_keypoints = 25;
  const auto top = detect_and_describe(gray, few);
  CHECK(top.size() == 25);
  for (std::size_t k = 1; k < top.size(); ++k) CHECK(top[k - 1].response >= top[k].response);
  const auto all = detect_and_describe(gray);
  REQUIRE(all.size() >= 25);
  CHECK(std::equal(top.begin(), top.end(), all.begin()));

  OrbParams bad;
  bad.max_keypoints = 0;
  CHECK(code_of([&] { detect_and_describe(gray, bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("vocabulary") {
  SUBCASE("identical features give a single word") {
    const std::vector<BinaryFeature> same(10, random_features(1, 1)[0]);
    const Vocabulary v = build_vocabulary(same, 2, 4, 1);
    CHECK(v.word_count() == 1);
    CHECK(v.quantize(same[0]) == 0);
  }
  SUBCASE("fewer features than branches") {
    CHECK(code_of([] { build_vocabulary(random_features(3, 2), 4, 2, 1); }) == ErrorCode::InsufficientFeatures);
  }
  SUBCASE("capacity bound and determinism") {
    const auto features = random_features(10000, 5);
    const Vocabulary a = build_vocabulary(features, 10, 3, 42);
    const Vocabulary b = build_vocabulary(features, 10, 3, 42);
    CHECK(a.word_count() <= 1000);
    CHECK(a.word_count() > 100);
    CHECK(a.serialize() == b.serialize());
    for (std::size_t k = 0; k < 50; ++k) CHECK(a.quantize(features[k]) < a.word_count());
  }
  SUBCASE("serialization round trip") {
    TempDir dir("voc");
    const Vocabulary v = build_vocabulary(random_features(500, 9), 4, 3, 7);
    v.save(dir / "v.bin");
    const Vocabulary back = Vocabulary::load(dir / "v.bin");
    CHECK(back == v);
    CHECK(back.serialize() == v.serialize());
    auto bytes = v.serialize();
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "MPRVOC01");
    bytes[0] = 'X';
    CHECK(code_of([&] { Vocabulary::deserialize(bytes); }) == ErrorCode::ParseError);
    bytes = v.serialize();
    bytes.resize(bytes.size() - 3);
    CHECK(code_of([&] { Vocabulary::deserialize(bytes); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("bag of words") {
  const auto features = random_features(2000, 13);
  const Vocabulary vocab = build_vocabulary(features, 4, 3, 3);
  REQUIRE(vocab.word_count() > 7);

  SUBCASE("single word histogram") {
    const auto probe = std::find_if(features.begin(), features.end(), [&](const auto& f) { return vocab.quantize(f) == 7; });
    REQUIRE(probe != features.end());
    const std::vector<BinaryFeature> list(5, *probe);
    const DescriptorVector d = extract_bow(list, vocab);
    CHECK(d.dimension == vocab.word_count());
    CHECK(d.sparse().index == std::vector<std::uint32_t>{7});
    CHECK(d.sparse().value == std::vector<double>{1.0});
    CHECK_FALSE(d.degenerate);
  }
  SUBCASE("empty list is degenerate") {
    const DescriptorVector d = extract_bow({}, vocab);
    CHECK(d.degenerate);
    CHECK(d.sparse().index.empty());
    CHECK(descriptor_distance(d, d) == 2.0);
  }
  SUBCASE("normalized for any non-empty input") {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t count = 1 + rng() % 300;
      const std::size_t offset = rng() % (features.size() - count);
      const DescriptorVector d = extract_bow(std::span(features).subspan(offset, count), vocab);
      double sum = 0.0;
      for (double v : d.sparse().value) {
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      CHECK(std::is_sorted(d.sparse().index.begin(), d.sparse().index.end()));
    }
  }
}

TEST_CASE("external descriptors") {
  TempDir dir("cnn");
  std::vector<float> v(256);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = float(k % 7) - 3.0f;
  write_external_descriptor(dir / "a.f32", v);
  const DescriptorVector d = ingest_external_descriptor(dir / "a.f32", 256);
  CHECK(d.dimension == 256);
  CHECK(std::abs(l2(d.dense()) - 1.0) <= 1e-6);
  CHECK(ingest_external_descriptor(dir / "a.f32", 0).dimension == 256);
  CHECK(code_of([&] { ingest_external_descriptor(dir / "a.f32", 200); }) == ErrorCode::DimensionMismatch);

  write_external_descriptor(dir / "short.f32", std::vector<float>(200, 1.0f));
  CHECK(code_of([&] { ingest_external_descriptor(dir / "short.f32", 256); }) == ErrorCode::DimensionMismatch);

  write_external_descriptor(dir / "zero.f32", std::vector<float>(256, 0.0f));
  CHECK(code_of([&] { ingest_external_descriptor(dir / "zero.f32", 256); }) == ErrorCode::ParseError);

  std::ofstream(dir / "odd.f32") << "abcdef";
  CHECK(code_of([&] { ingest_external_descriptor(dir / "odd.f32", 0); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { ingest_external_descriptor(dir / "missing.f32", 0); }) == ErrorCode::IoError);
  CHECK(external_descriptor_path(dir.path(), 42).filename() == "000042.f32");
}

TEST_CASE("extract_all") {
  TempDir dir("all");
  const auto pair = generate_synthetic_pair(4, 2, {});
  const MultimodalFrame& frame = pair.database.frames[1];
  write_external_descriptor(external_descriptor_path(dir.path(), 1), std::vector<float>(64, 0.5f));

  std::vector<BinaryFeature> features;
  for (const auto& kp : detect_and_describe(to_gray(frame.color))) features.push_back(kp.descriptor);
  const Vocabulary vocab = build_vocabulary(features, 5, 2, 1);

  ExtractionConfig all;
  all.channels = ChannelSet(kCanonicalChannels.begin(), kCanonicalChannels.end());
  const DescriptorSet set = extract_all(frame, all, &vocab, ExternalSource{dir.path(), 64});
  CHECK(set.size() == 9);
  for (const auto& [c, d] : set) {
    CHECK(d.channel() == c);
    CHECK(d.dimension > 0);
  }
  CHECK(set.at({DescriptorKind::LDB, Modality::Depth}).dimension == 1386);
  CHECK(set.at({DescriptorKind::GIST, Modality::Infrared}).dimension == 512);

  // color LDB sees the illumination-invariant image
  const auto ldb_c = set.at({DescriptorKind::LDB, Modality::Color});
  CHECK(ldb_c == extract_ldb(illumination_invariant_transform(frame.color), {}, Modality::Color));

  ExtractionConfig one;
  one.channels = {{DescriptorKind::LDB, Modality::Color}};
  CHECK(extract_all(frame, one, nullptr, std::nullopt).size() == 1);

  ExtractionConfig bad;
  bad.channels = {{DescriptorKind::CNN, Modality::Depth}};
  CHECK(code_of([&] { extract_all(frame, bad, nullptr, ExternalSource{dir.path(), 0}); }) == ErrorCode::InvalidChannel);
  bad.channels = {{DescriptorKind::BoW, Modality::Depth}};
  CHECK(code_of([&] { extract_all(frame, bad, &vocab, std::nullopt); }) == ErrorCode::InvalidChannel);

  MultimodalFrame no_ir = frame;
  no_ir.infrared = cv::Mat();
  ExtractionConfig ir;
  ir.channels = {{DescriptorKind::GIST, Modality::Infrared}};
  CHECK(code_of([&] { extract_all(no_ir, ir, nullptr, std::nullopt); }) == ErrorCode::MissingModality);

  CHECK(required_modalities(all.channels) == ModalitySet{Modality::Color, Modality::Depth, Modality::Infrared});
  CHECK(required_modalities(one.channels) == ModalitySet{Modality::Color});
}
