#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tacslab/common.hpp"
#include "tacslab/rng.hpp"

namespace tacslab {

using FeatureVector = std::vector<double>;

// One example: query features plus class label. The group id is the leakage
// unit (candidates sharing a query's group are masked out of its pool view);
// the key id is generator bookkeeping, never exposed to the networks.
struct LabeledSample {
  FeatureVector features;
  std::int64_t label = 0;
  std::int64_t group = 0;
  std::int64_t key = 0;
};

// Immutable ordered candidate set, fixed for a whole run. pool_version is a
// content hash so reports can prove which snapshot was scored.
struct CandidatePool {
  std::vector<LabeledSample> candidates;
  std::uint64_t pool_version = 0;
  double fraction = 0.0;

  std::size_t size() const { return candidates.size(); }
  const LabeledSample& operator[](std::size_t i) const { return candidates[i]; }
};

inline std::uint64_t hash_samples(const std::vector<LabeledSample>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : samples) {
    for (double f : s.features) {
      std::uint64_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      mix(bits);
    }
    mix(static_cast<std::uint64_t>(s.label));
    mix(static_cast<std::uint64_t>(s.group));
    mix(static_cast<std::uint64_t>(s.key));
  }
  return h;
}

inline CandidatePool make_pool(std::vector<LabeledSample> candidates,
                               double fraction = 0.0) {
  CandidatePool pool;
  pool.candidates = std::move(candidates);
  pool.pool_version = hash_samples(pool.candidates);
  pool.fraction = fraction;
  return pool;
}

// True at i when candidate i must be excluded for this query's group.
inline std::vector<bool> leakage_mask(const CandidatePool& pool,
                                      std::int64_t query_group) {
  std::vector<bool> masked(pool.size(), false);
  for (std::size_t i = 0; i < pool.size(); ++i)
    masked[i] = pool[i].group == query_group;
  return masked;
}

inline std::size_t count_unmasked(const std::vector<bool>& masked) {
  std::size_t n = 0;
  for (bool m : masked)
    if (!m) ++n;
  return n;
}

// Samples `fraction` of the training set (without replacement, seeded) into
// a fixed pool and removes the sampled items from the training queries.
inline std::pair<CandidatePool, std::vector<LabeledSample>> build_pool(
    const std::vector<LabeledSample>& train, double fraction,
    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("build_pool: fraction must be in (0, 1), got " +
                      std::to_string(fraction));
  const std::size_t pool_size =
      static_cast<std::size_t>(fraction * static_cast<double>(train.size()));
  if (pool_size == 0)
    throw ConfigError("build_pool: fraction " + std::to_string(fraction) +
                      " yields an empty pool for " +
                      std::to_string(train.size()) + " samples");
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = rng_substream(seed, "pool");
  rng.shuffle(order);

  std::vector<bool> in_pool(train.size(), false);
  for (std::size_t i = 0; i < pool_size; ++i) in_pool[order[i]] = true;

  std::vector<LabeledSample> pool_items, remaining;
  pool_items.reserve(pool_size);
  remaining.reserve(train.size() - pool_size);
  for (std::size_t i = 0; i < train.size(); ++i)
    (in_pool[i] ? pool_items : remaining).push_back(train[i]);
  return {make_pool(std::move(pool_items), fraction), std::move(remaining)};
}

// ---- dataset snapshots ----
//
// Flat binary layout (little-endian): three int64 header fields
// (feature dimension, class count, row count) followed by one record per
// row: features as float64, then label, group id, key id as int64.
// The CSV form carries the same fields with a header line.

namespace detail {

inline void write_i64(std::ostream& out, std::int64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_i64(out, static_cast<std::int64_t>(bits));
}

inline std::int64_t read_i64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw InvalidArgumentError("dataset read: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<std::int64_t>(v);
}

inline double read_f64(std::istream& in) {
  const std::int64_t raw = read_i64(in);
  std::uint64_t bits = static_cast<std::uint64_t>(raw);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline void write_samples_binary(std::ostream& out,
                                 const std::vector<LabeledSample>& samples,
                                 std::int64_t feature_dim,
                                 std::int64_t class_count) {
  detail::write_i64(out, feature_dim);
  detail::write_i64(out, class_count);
  detail::write_i64(out, static_cast<std::int64_t>(samples.size()));
  for (const auto& s : samples) {
    if (static_cast<std::int64_t>(s.features.size()) != feature_dim)
      throw ShapeError("dataset write: row has " +
                       std::to_string(s.features.size()) +
                       " features, expected " + std::to_string(feature_dim));
    for (double f : s.features) detail::write_f64(out, f);
    detail::write_i64(out, s.label);
    detail::write_i64(out, s.group);
    detail::write_i64(out, s.key);
  }
}

struct SampleFile {
  std::int64_t feature_dim = 0;
  std::int64_t class_count = 0;
  std::vector<LabeledSample> samples;
};

inline SampleFile read_samples_binary(std::istream& in) {
  SampleFile f;
  f.feature_dim = detail::read_i64(in);
  f.class_count = detail::read_i64(in);
  const std::int64_t count = detail::read_i64(in);
  if (f.feature_dim <= 0 || count < 0)
    throw InvalidArgumentError("dataset read: bad header");
  f.samples.resize(static_cast<std::size_t>(count));
  for (auto& s : f.samples) {
    s.features.resize(static_cast<std::size_t>(f.feature_dim));
    for (auto& x : s.features) x = detail::read_f64(in);
    s.label = detail::read_i64(in);
    s.group = detail::read_i64(in);
    s.key = detail::read_i64(in);
  }
  return f;
}

inline void write_samples_csv(std::ostream& out,
                              const std::vector<LabeledSample>& samples,
                              std::int64_t feature_dim) {
  out << "label,group,key";
  for (std::int64_t d = 0; d < feature_dim; ++d) out << ",f" << d;
  out << "\n";
  char buf[32];
  for (const auto& s : samples) {
    out << s.label << "," << s.group << "," << s.key;
    for (double f : s.features) {
      std::snprintf(buf, sizeof buf, "%.17g", f);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace tacslab
