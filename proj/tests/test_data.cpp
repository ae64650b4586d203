#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "gcml/data.hpp"

using namespace gcml;

namespace {

SiteSpec small_spec(SiteId id = 0) {
  SiteSpec s;
  s.site_id = id;
  s.n_cases = 6;
  s.height = 12;
  s.width = 10;
  s.min_radius = 1.5;
  s.max_radius = 3.0;
  return s;
}

double mean_intensity(const std::vector<Case>& cases) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& c : cases) {
    for (double v : c.image.values()) total += v;
    n += c.image.size();
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("split sizes: 14 cases give 9/2/3 and the 70/10/20 rule holds") {
  CHECK(split_sizes(14).train == 9);
  CHECK(split_sizes(14).val == 2);
  CHECK(split_sizes(14).test == 3);
  CHECK(split_sizes(10).train == 7);
  CHECK(split_sizes(10).val == 1);
  CHECK(split_sizes(10).test == 2);
  for (std::size_t n = 5; n <= 500; ++n) {
    const auto s = split_sizes(n);
    CHECK(s.train + s.val + s.test == n);
    // Validation and test are 10% and 20% rounded up, the rest trains.
    CHECK(10 * s.val >= n);
    CHECK(10 * (s.val - 1) < n);
    CHECK(5 * s.test >= n);
    CHECK(5 * (s.test - 1) < n);
    CHECK(s.train >= 1);
  }
  CHECK_THROWS_AS(split_sizes(4), Error);
}

TEST_CASE("split_cases is a shuffled partition") {
  RngStream rng(41, 1);
  SiteSpec spec = small_spec();
  spec.n_cases = 23;
  const auto cases = generate_site(spec, rng);
  RngStream split_rng(41, 2);
  const auto s = split_cases(cases, split_rng);
  std::multiset<std::uint32_t> ids;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& c : *part) ids.insert(c.case_id);
  }
  CHECK(ids.size() == 23);
  CHECK(std::set<std::uint32_t>(ids.begin(), ids.end()).size() == 23);
  CHECK(s.train.size() == 23 - 3 - 5);
  std::vector<std::uint32_t> train_ids;
  for (const auto& c : s.train) train_ids.push_back(c.case_id);
  CHECK_FALSE(std::is_sorted(train_ids.begin(), train_ids.end()));
  RngStream short_rng(1, 1);
  CHECK_THROWS_AS(split_cases(std::vector<Case>(cases.begin(), cases.begin() + 4), short_rng), Error);
}

TEST_CASE("generation is deterministic in the stream") {
  RngStream a(42, 1), b(42, 1), c(42, 2);
  const auto x = generate_site(small_spec(), a);
  CHECK(x == generate_site(small_spec(), b));
  CHECK_FALSE(x == generate_site(small_spec(), c));
}

TEST_CASE("no blobs means all-background labels") {
  SiteSpec spec = small_spec();
  spec.min_blobs = 0;
  spec.max_blobs = 0;
  RngStream rng(43, 1);
  for (const auto& c : generate_site(spec, rng)) {
    for (auto l : c.labels.labels()) CHECK(l == 0);
  }
}

TEST_CASE("background mean shifts the image mean") {
  SiteSpec lo = small_spec(), hi = small_spec();
  lo.n_cases = hi.n_cases = 100;
  lo.min_blobs = lo.max_blobs = hi.min_blobs = hi.max_blobs = 0;
  lo.bg_mean = 0.2;
  hi.bg_mean = 0.8;
  RngStream a(44, 1), b(44, 2);
  const double diff = mean_intensity(generate_site(hi, b)) - mean_intensity(generate_site(lo, a));
  CHECK(diff == doctest::Approx(0.6).epsilon(0.01));
}

TEST_CASE("foreground is brighter than background by at least half the contrast") {
  SiteSpec spec = small_spec();
  spec.n_cases = 50;
  spec.height = spec.width = 24;
  spec.max_radius = 5.0;
  RngStream rng(45, 1);
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (const auto& c : generate_site(spec, rng)) {
    for (std::size_t v = 0; v < c.image.size(); ++v) {
      if (c.labels.label(v) != 0) {
        in += c.image.values()[v];
        ++n_in;
      } else {
        out += c.image.values()[v];
        ++n_out;
      }
    }
  }
  REQUIRE(n_in > 0);
  CHECK(in / n_in - out / n_out >= 0.5 * (spec.fg_mean - spec.bg_mean));
}

TEST_CASE("multi-class sites use every foreground class") {
  SiteSpec spec = small_spec();
  spec.num_classes = 4;
  spec.n_cases = 20;
  RngStream rng(46, 1);
  std::set<int> seen;
  for (const auto& c : generate_site(spec, rng)) {
    for (auto l : c.labels.labels()) seen.insert(l);
  }
  CHECK(seen == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("spec validation") {
  SiteSpec s = small_spec();
  s.max_radius = 5.0;  // min(12, 10) / 2
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("degenerate geometry"), Error);
  s = small_spec();
  s.n_cases = 4;
  CHECK_THROWS_AS(s.validate(), Error);
  s = small_spec();
  s.bg_std = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("NSEG round trip is bitwise lossless") {
  RngStream rng(47, 1);
  for (int t = 0; t < 20; ++t) {
    SiteSpec spec = small_spec(static_cast<SiteId>(t));
    spec.num_classes = 2 + t % 3;
    spec.height = static_cast<int>(rng.next_int(8, 20));
    spec.bg_mean = rng.next_uniform(-1.0, 1.0);
    const auto cases = generate_site(spec, rng);
    const auto bytes = encode_dataset(cases);
    const auto back = decode_dataset(bytes);
    CHECK(back == cases);
    CHECK(encode_dataset(back) == bytes);
  }
}

TEST_CASE("NSEG errors name the offset") {
  RngStream rng(48, 1);
  const auto cases = generate_site(small_spec(), rng);
  auto bytes = encode_dataset(cases);

  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  try {
    decode_dataset(bad_magic);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }

  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    decode_dataset(bad_version);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }

  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 30);
  try {
    decode_dataset(truncated);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() <= 30);
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_dataset(trailing), ParseError);

  // The first label byte sits after the header and the first image.
  auto bad_label = bytes;
  const std::size_t first_label = 12 + 9 + 4 * 12 * 10;
  bad_label[first_label] = 7;
  try {
    decode_dataset(bad_label);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == first_label);
  }
}

TEST_CASE("empty dataset and file round trip") {
  const auto bytes = encode_dataset({});
  CHECK(bytes.size() == 12);
  CHECK(decode_dataset(bytes).empty());

  RngStream rng(49, 1);
  const auto cases = generate_site(small_spec(), rng);
  const auto path = std::filesystem::temp_directory_path() / "gcml_test_roundtrip.nseg";
  save_dataset(path, cases);
  CHECK(load_dataset(path) == cases);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset(path), Error);
}

TEST_CASE("default benchmark has six 32x32 sites") {
  const auto sites = default_benchmark_sites();
  REQUIRE(sites.size() == 6);
  int total = 0;
  for (const auto& s : sites) {
    CHECK(s.height == 32);
    CHECK(s.width == 32);
    s.validate();
    total += s.n_cases;
  }
  CHECK(total == 140);
}
