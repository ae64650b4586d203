#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcml/losses.hpp"
#include "gcml/numerics.hpp"

namespace gcml {

using SiteId = std::uint32_t;

/// Generator parameters for one synthetic site. Heterogeneity across sites
/// comes from the intensity statistics, blob morphology and blob count.
struct SiteSpec {
  SiteId site_id = 0;
  int n_cases = 20;
  int height = 32;
  int width = 32;
  int min_blobs = 1;
  int max_blobs = 3;
  double min_radius = 2.0;
  double max_radius = 5.0;
  double fg_mean = 0.8;
  double fg_std = 0.1;
  double bg_mean = 0.2;
  double bg_std = 0.1;
  double noise_std = 0.05;
  int num_classes = 2;

  void validate() const;
};

struct Case {
  std::uint32_t case_id = 0;
  DenseGrid image;
  GroundTruth labels;

  friend bool operator==(const Case&, const Case&) = default;
};

/// Deterministic in (spec, rng). Intensities are rounded to float32 so the
/// NSEG container stores them losslessly.
std::vector<Case> generate_site(const SiteSpec& spec, RngStream& rng);

struct Splits {
  std::vector<Case> train;
  std::vector<Case> val;
  std::vector<Case> test;
};

/// Split sizes for n cases: (train, val, test).
struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};
SplitSizes split_sizes(std::size_t n);

/// Shuffles with `rng` and splits roughly 70/10/20. Needs at least 5 cases.
Splits split_cases(std::vector<Case> cases, RngStream& rng);

/// Container failure. `offset` is the byte position where decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

inline constexpr std::uint32_t kNsegVersion = 1;

std::vector<std::uint8_t> encode_dataset(std::span<const Case> cases);
std::vector<Case> decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const std::filesystem::path& path, std::span<const Case> cases);
std::vector<Case> load_dataset(const std::filesystem::path& path);

/// The six-site desk benchmark: sizes 40/30/30/20/12/8, 32x32, two classes.
std::vector<SiteSpec> default_benchmark_sites();

}  // namespace gcml
