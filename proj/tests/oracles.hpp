#pragma once

// Reference implementations written independently of the library: naive
// loops, no shared helpers. Tests compare library output against these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gcml/numerics.hpp"

namespace oracle {

using Probs = std::vector<std::vector<double>>;  // voxel -> class distribution

struct Arch {
  int radius = 1;
  int hidden = 0;
  int classes = 2;
};

inline Probs forward(const Arch& a, const std::vector<double>& w, const gcml::DenseGrid& img) {
  const int rows = static_cast<int>(img.rows()), cols = static_cast<int>(img.cols());
  const int side = 2 * a.radius + 1;
  const int f = side * side + 1;
  Probs out;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      std::vector<double> x;
      for (int di = -a.radius; di <= a.radius; ++di) {
        for (int dj = -a.radius; dj <= a.radius; ++dj) {
          const int ii = std::min(std::max(i + di, 0), rows - 1);
          const int jj = std::min(std::max(j + dj, 0), cols - 1);
          x.push_back(img(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)));
        }
      }
      x.push_back(1.0);
      std::vector<double> z(static_cast<std::size_t>(a.classes), 0.0);
      if (a.hidden == 0) {
        for (int k = 0; k < a.classes; ++k) {
          for (int u = 0; u < f; ++u) z[k] += w[static_cast<std::size_t>(k * f + u)] * x[u];
        }
      } else {
        std::vector<double> hid;
        for (int u = 0; u < a.hidden; ++u) {
          double s = 0.0;
          for (int t = 0; t < f; ++t) s += w[static_cast<std::size_t>(u * f + t)] * x[t];
          hid.push_back(std::tanh(s));
        }
        hid.push_back(1.0);
        const int base = a.hidden * f;
        for (int k = 0; k < a.classes; ++k) {
          for (int u = 0; u <= a.hidden; ++u) {
            z[k] += w[static_cast<std::size_t>(base + k * (a.hidden + 1) + u)] * hid[u];
          }
        }
      }
      const double m = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (double& v : z) total += (v = std::exp(v - m));
      for (double& v : z) v /= total;
      out.push_back(z);
    }
  }
  return out;
}

inline double jaccard(const Probs& p, const std::vector<std::uint8_t>& labels) {
  const int classes = static_cast<int>(p[0].size());
  double total = 0.0;
  for (int k = 1; k < classes; ++k) {
    double inter = 0.0, sg = 0.0, sq = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) {
      const double g = labels[v] == k ? 1.0 : 0.0;
      inter += g * p[v][k];
      sg += g;
      sq += p[v][k];
    }
    total += 1.0 - (inter + 1e-5) / (sg + sq - inter + 1e-5);
  }
  return total / (classes - 1);
}

inline double kl(const std::vector<double>& p, const std::vector<double>& s) {
  double d = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] > 0.0) d += p[y] * std::log(p[y] / std::max(s[y], 1e-12));
  }
  return std::max(d, 0.0);
}

inline std::size_t argmax(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t y = 1; y < p.size(); ++y) {
    if (p[y] > p[best]) best = y;
  }
  return best;
}

inline double foreground(const std::vector<double>& p) {
  return p.size() == 2 ? p[1] : 1.0 - p[0];
}

struct Term {
  bool contrast = true;
  bool regional = true;
  double kappa = 10.0;
};

/// The mutual-learning term of `own` against a frozen `peer`.
inline double term(const Probs& own, const Probs& peer, const std::vector<std::uint8_t>& labels,
                   const Term& t) {
  double numer = 0.0, denom = 0.0, plain = 0.0;
  for (std::size_t v = 0; v < own.size(); ++v) {
    const double c = !t.contrast || argmax(peer[v]) == labels[v] ? 1.0 : -1.0;
    const double klc = std::min(kl(own[v], peer[v]), t.kappa) * c;
    const double w = (labels[v] != 0 ? 1.0 : 0.0) + foreground(own[v]);
    numer += klc * w;
    denom += w;
    plain += klc;
  }
  return t.regional ? numer / (denom + 1e-8) : plain / static_cast<double>(own.size());
}

inline double objective(const Probs& own, const Probs* peer,
                        const std::vector<std::uint8_t>& labels, double lambda, const Term& t) {
  double v = (1.0 - lambda) * jaccard(own, labels);
  if (peer != nullptr && lambda > 0.0) v += lambda * term(own, *peer, labels, t);
  return v;
}

/// Central differences of `f` at `w`.
template <typename F>
std::vector<double> central_difference(F&& f, std::vector<double> w, double h) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w[i];
    w[i] = x + h;
    const double up = f(w);
    w[i] = x - h;
    const double down = f(w);
    w[i] = x;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Relative error with a floor on the denominator.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double s = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / s);
  }
  return worst;
}

// Surface distances by exhaustive search.
struct Mask {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> bits;
  bool at(int i, int j) const {
    return i >= 0 && j >= 0 && i < rows && j < cols && bits[static_cast<std::size_t>(i * cols + j)];
  }
};

inline std::vector<std::pair<int, int>> boundary(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (!m.at(i, j)) continue;
      if (!m.at(i - 1, j) || !m.at(i + 1, j) || !m.at(i, j - 1) || !m.at(i, j + 1)) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

inline std::vector<double> directed(const Mask& a, const Mask& b, double dx, double dy) {
  const auto ba = boundary(a), bb = boundary(b);
  std::vector<double> out;
  for (auto [i, j] : ba) {
    double best = std::numeric_limits<double>::infinity();
    for (auto [k, l] : bb) {
      const double di = (i - k) * dy, dj = (j - l) * dx;
      best = std::min(best, std::sqrt(di * di + dj * dj));
    }
    out.push_back(best);
  }
  return out;
}

inline double percentile95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  std::size_t k = 1;
  while (100 * k < 95 * d.size()) ++k;
  return d[k - 1];
}

inline double hd95(const Mask& a, const Mask& b, double dx = 1.0, double dy = 1.0) {
  return std::max(percentile95(directed(a, b, dx, dy)), percentile95(directed(b, a, dx, dy)));
}

inline double assd(const Mask& a, const Mask& b, double dx = 1.0, double dy = 1.0) {
  const auto ab = directed(a, b, dx, dy), ba = directed(b, a, dx, dy);
  double s = 0.0;
  for (double d : ab) s += d;
  for (double d : ba) s += d;
  return s / static_cast<double>(ab.size() + ba.size());
}

}  // namespace oracle
