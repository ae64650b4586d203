#include "gcml/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gcml {

void SiteSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw Error("SiteSpec " + std::to_string(site_id) + ": " + what);
  };
  if (n_cases < 5) fail("n_cases must be >= 5");
  if (height < 1 || width < 1 || height > 65535 || width > 65535) fail("bad image size");
  if (min_blobs < 0 || max_blobs < min_blobs) fail("bad blob count range");
  if (!(min_radius > 0.0) || max_radius < min_radius) fail("bad blob radius range");
  if (max_radius >= std::min(height, width) / 2.0) {
    fail("degenerate geometry: blob radius must be < min(H, W) / 2");
  }
  if (!(fg_std > 0.0) || !(bg_std > 0.0)) fail("intensity stds must be > 0");
  if (noise_std < 0.0) fail("noise_std must be >= 0");
  if (num_classes < 2 || num_classes > 255) fail("num_classes must be in [2, 255]");
}

std::vector<Case> generate_site(const SiteSpec& spec, RngStream& rng) {
  spec.validate();
  struct Blob {
    double ci, cj, radius;
    int cls;
  };
  const auto rows = static_cast<std::size_t>(spec.height);
  const auto cols = static_cast<std::size_t>(spec.width);
  const double contrast = spec.fg_mean - spec.bg_mean;

  std::vector<Case> cases;
  cases.reserve(static_cast<std::size_t>(spec.n_cases));
  for (int n = 0; n < spec.n_cases; ++n) {
    const auto k = rng.next_int(spec.min_blobs, spec.max_blobs);
    std::vector<Blob> blobs;
    for (std::int64_t b = 0; b < k; ++b) {
      Blob blob{};
      blob.ci = rng.next_uniform(0.0, static_cast<double>(rows));
      blob.cj = rng.next_uniform(0.0, static_cast<double>(cols));
      blob.radius = rng.next_uniform(spec.min_radius, spec.max_radius);
      blob.cls = static_cast<int>(rng.next_int(1, spec.num_classes - 1));
      blobs.push_back(blob);
    }

    DenseGrid image({rows, cols});
    std::vector<std::uint8_t> labels(rows * cols, 0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        // Strongest covering bump decides the label.
        double bump = 0.0;
        int cls = 0;
        for (const auto& blob : blobs) {
          const double di = static_cast<double>(i) - blob.ci;
          const double dj = static_cast<double>(j) - blob.cj;
          const double d2 = di * di + dj * dj;
          if (d2 > blob.radius * blob.radius) continue;
          const double sigma = 0.5 * blob.radius;
          const double b = 0.5 + 0.5 * std::exp(-d2 / (2.0 * sigma * sigma));
          if (b > bump) {
            bump = b;
            cls = blob.cls;
          }
        }
        double value;
        if (cls == 0) {
          value = spec.bg_mean + spec.bg_std * rng.next_normal();
        } else {
          const double level = static_cast<double>(cls) / (spec.num_classes - 1);
          value = spec.bg_mean + contrast * level * bump + spec.fg_std * rng.next_normal();
        }
        value += spec.noise_std * rng.next_normal();
        image(i, j) = static_cast<double>(static_cast<float>(value));
        labels[i * cols + j] = static_cast<std::uint8_t>(cls);
      }
    }
    cases.push_back(Case{static_cast<std::uint32_t>(n), std::move(image),
                         GroundTruth(rows, cols, spec.num_classes, std::move(labels))});
  }
  return cases;
}

SplitSizes split_sizes(std::size_t n) {
  if (n < 5) throw Error("split_cases: need at least 5 cases, got " + std::to_string(n));
  SplitSizes s;
  s.val = (n + 9) / 10;  // ceil(0.1 n)
  s.test = (n + 4) / 5;  // ceil(0.2 n)
  s.train = n - s.val - s.test;
  return s;
}

Splits split_cases(std::vector<Case> cases, RngStream& rng) {
  const SplitSizes sizes = split_sizes(cases.size());
  rng.shuffle(cases);
  Splits out;
  auto it = std::make_move_iterator(cases.begin());
  out.train.assign(it, it + static_cast<long>(sizes.train));
  it += static_cast<long>(sizes.train);
  out.val.assign(it, it + static_cast<long>(sizes.val));
  it += static_cast<long>(sizes.val);
  out.test.assign(it, std::make_move_iterator(cases.end()));
  return out;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int s = 0; s < 16; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t u8(const char* field) {
    need(1, field);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(bytes_[pos_ + s]) << (8 * s);
    pos_ += 4;
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

 private:
  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("NSEG: truncated while reading ") + field, pos_);
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kMagic[4] = {0x4E, 0x53, 0x45, 0x47};  // "NSEG"

}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const Case> cases) {
  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u32(kNsegVersion);
  w.u32(static_cast<std::uint32_t>(cases.size()));
  for (const auto& c : cases) {
    if (c.image.rank() != 2 || c.image.rows() > 65535 || c.image.cols() > 65535 ||
        c.image.rows() != c.labels.rows() || c.image.cols() != c.labels.cols()) {
      throw Error("NSEG: case " + std::to_string(c.case_id) + " has an unencodable shape");
    }
    w.u32(c.case_id);
    w.u16(static_cast<std::uint16_t>(c.image.rows()));
    w.u16(static_cast<std::uint16_t>(c.image.cols()));
    w.u8(static_cast<std::uint8_t>(c.labels.num_classes()));
    for (double v : c.image.values()) w.f32(static_cast<float>(v));
    for (auto l : c.labels.labels()) w.u8(l);
  }
  return w.take();
}

std::vector<Case> decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (std::size_t i = 0; i < 4; ++i) {
    if (r.u8("magic") != kMagic[i]) throw ParseError("NSEG: bad magic", 0);
  }
  const std::size_t version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kNsegVersion) {
    throw ParseError("NSEG: unsupported version " + std::to_string(version), version_at);
  }
  const auto count = r.u32("case_count");
  std::vector<Case> cases;
  for (std::uint32_t n = 0; n < count; ++n) {
    Case c;
    c.case_id = r.u32("case_id");
    const std::size_t rows = r.u16("H");
    const std::size_t cols = r.u16("W");
    const std::size_t classes_at = r.offset();
    const int classes = r.u8("C");
    if (classes < 2) throw ParseError("NSEG: class count below 2", classes_at);
    std::vector<double> values(rows * cols);
    for (auto& v : values) {
      const std::size_t at = r.offset();
      v = r.f32("intensities");
      if (!std::isfinite(v)) throw ParseError("NSEG: non-finite intensity", at);
    }
    std::vector<std::uint8_t> labels(rows * cols);
    for (auto& l : labels) {
      const std::size_t at = r.offset();
      l = r.u8("labels");
      if (l >= classes) throw ParseError("NSEG: label out of range", at);
    }
    c.image = DenseGrid({rows, cols}, std::move(values));
    c.labels = GroundTruth(rows, cols, classes, std::move(labels));
    cases.push_back(std::move(c));
  }
  if (!r.done()) throw ParseError("NSEG: trailing bytes", r.offset());
  return cases;
}

void save_dataset(const std::filesystem::path& path, std::span<const Case> cases) {
  const auto bytes = encode_dataset(cases);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<Case> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

std::vector<SiteSpec> default_benchmark_sites() {
  // Per-site: cases, bg mean, fg mean, bg std, noise, blob radius range,
  // blob count range. Intensity shift is mild; sites differ mostly in size,
  // noise and lesion morphology.
  struct Row {
    int n;
    double bg, fg, bg_std, noise, r_min, r_max;
    int b_min, b_max;
  };
  const Row rows[] = {
      {40, 0.200, 0.800, 0.15, 0.10, 2.0, 6.0, 1, 3},
      {30, 0.285, 0.735, 0.15, 0.12, 2.0, 5.0, 1, 2},
      {30, 0.345, 0.795, 0.15, 0.10, 3.0, 7.0, 2, 4},
      {20, 0.225, 0.675, 0.15, 0.12, 2.0, 5.0, 1, 3},
      {12, 0.315, 0.765, 0.20, 0.12, 2.0, 4.0, 1, 2},
      {8, 0.285, 0.685, 0.20, 0.15, 2.0, 5.0, 2, 3},
  };
  std::vector<SiteSpec> out;
  SiteId id = 0;
  for (const auto& r : rows) {
    SiteSpec s;
    s.site_id = id++;
    s.n_cases = r.n;
    s.bg_mean = r.bg;
    s.fg_mean = r.fg;
    s.bg_std = r.bg_std;
    s.fg_std = r.bg_std;
    s.noise_std = r.noise;
    s.min_radius = r.r_min;
    s.max_radius = r.r_max;
    s.min_blobs = r.b_min;
    s.max_blobs = r.b_max;
    out.push_back(s);
  }
  return out;
}

}  // namespace gcml
