#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code under test beyond its plain data types.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dnr/action_codec.hpp"
#include "dnr/coverage_static.hpp"

namespace oracle {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Extrinsic x, then y, then z: R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 matrix_from_euler(double roll_deg, double pitch_deg, double yaw_deg) {
  const double r = rad(roll_deg), p = rad(pitch_deg), y = rad(yaw_deg);
  const Mat3 rx{{{1, 0, 0}, {0, std::cos(r), -std::sin(r)}, {0, std::sin(r), std::cos(r)}}};
  const Mat3 ry{{{std::cos(p), 0, std::sin(p)}, {0, 1, 0}, {-std::sin(p), 0, std::cos(p)}}};
  const Mat3 rz{{{std::cos(y), -std::sin(y), 0}, {std::sin(y), std::cos(y), 0}, {0, 0, 1}}};
  return mul(rz, mul(ry, rx));
}

inline Mat3 matrix_from_quat(const dnr::Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return Mat3{{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
               {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
               {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  }
  return m;
}

// Shortest signed angular distance in degrees.
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d < -180.0) d += 360.0;
  return std::abs(d);
}

template <typename T>
double jaccard(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<T> ua = a, ub = b;
  std::sort(ua.begin(), ua.end());
  ua.erase(std::unique(ua.begin(), ua.end()), ua.end());
  std::sort(ub.begin(), ub.end());
  ub.erase(std::unique(ub.begin(), ub.end()), ub.end());
  if (ua.empty() && ub.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : ua) inter += std::count(ub.begin(), ub.end(), x);
  return static_cast<double>(inter) / static_cast<double>(ua.size() + ub.size() - inter);
}

// Coverage instance: static entries with explicit per-token weights.
struct Entry {
  std::string id;
  std::size_t length = 0;
  std::set<dnr::CoverageToken> tokens;
};

inline double weight_of(const dnr::CoverageToken& t, std::size_t n_documents,
                        const std::map<dnr::CoverageToken, std::size_t>& df, double beta) {
  const auto it = df.find(t);
  const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
  return std::pow(std::log((static_cast<double>(n_documents) + 1.0) / (d + 1.0)) + 1.0, beta);
}

// Greedy reference: every round rescans all candidates from scratch and keeps
// the best score, breaking exact ties by the smaller id.
inline std::vector<std::string> naive_greedy(const std::set<dnr::CoverageToken>& gap,
                                             const std::vector<Entry>& entries,
                                             std::size_t n_documents,
                                             const std::map<dnr::CoverageToken, std::size_t>& df,
                                             double beta, double gamma, std::size_t budget) {
  std::set<dnr::CoverageToken> remaining = gap;
  std::vector<std::string> chosen;
  for (std::size_t round = 0; round < budget && !remaining.empty(); ++round) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), entries[i].id) != chosen.end()) continue;
      double sum = 0.0;
      for (const auto& t : entries[i].tokens) {
        if (remaining.count(t)) sum += weight_of(t, n_documents, df, beta);
      }
      const double score = sum / (1.0 + gamma * static_cast<double>(entries[i].length));
      if (score <= 0.0) continue;
      if (!best || score > best_score ||
          (score == best_score && entries[i].id < entries[*best].id)) {
        best = i;
        best_score = score;
      }
    }
    if (!best) break;
    chosen.push_back(entries[*best].id);
    for (const auto& t : entries[*best].tokens) remaining.erase(t);
  }
  return chosen;
}

inline double covered_weight(const std::set<dnr::CoverageToken>& gap,
                             const std::vector<const Entry*>& picked, std::size_t n_documents,
                             const std::map<dnr::CoverageToken, std::size_t>& df, double beta) {
  std::set<dnr::CoverageToken> covered;
  for (const auto* e : picked) {
    for (const auto& t : e->tokens) {
      if (gap.count(t)) covered.insert(t);
    }
  }
  double total = 0.0;
  for (const auto& t : covered) total += weight_of(t, n_documents, df, beta);
  return total;
}

// Best coverage over all subsets of at most `budget` entries.
inline double exhaustive_optimum(const std::set<dnr::CoverageToken>& gap,
                                 const std::vector<Entry>& entries, std::size_t n_documents,
                                 const std::map<dnr::CoverageToken, std::size_t>& df, double beta,
                                 std::size_t budget) {
  double best = 0.0;
  const std::size_t n = entries.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > budget) continue;
    std::vector<const Entry*> picked;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) picked.push_back(&entries[i]);
    }
    best = std::max(best, covered_weight(gap, picked, n_documents, df, beta));
  }
  return best;
}

// Deterministic test RNG with platform-independent mapping to doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [lo, hi].
  int integer(int lo, int hi) {
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace oracle
