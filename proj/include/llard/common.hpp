// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace llard {

inline constexpr std::string_view kToolVersion = "llard 0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. Exit codes: 0 ok, 2 usage, 3 data, 4 provider, 5 numeric.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class ProviderError : public Error {
public:
  explicit ProviderError(const std::string& msg, int status = 0)
      : Error(msg), status_(status) {}
  int status() const { return status_; }

private:
  int status_;
};

// Transport-level failure (connection refused, timeout); retryable.
class TransportError : public ProviderError {
public:
  using ProviderError::ProviderError;
};

// Structured-response parse failure; carries the raw text for diagnostics.
class ResponseParseError : public ProviderError {
public:
  ResponseParseError(const std::string& msg, std::string raw)
      : ProviderError(msg), raw_(std::move(raw)) {}
  const std::string& raw_text() const { return raw_; }

private:
  std::string raw_;
};

class NumericError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. mt19937_64 is fully specified by the standard;
// the derived draws below avoid std distributions, whose output is
// implementation-defined.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable stream derivation: mix a parent seed with a stream label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0, n) without modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw NumericError("Rng::index: n must be positive");
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return static_cast<std::size_t>(x % span);
  }

  // Uniform in [0, 1).
  double real01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in (eps, 1 - eps); used for logistic noise where log(x) and
  // log(1-x) must stay finite.
  double real_open(double eps = 1e-6) {
    const double u = real01();
    return eps + u * (1.0 - 2.0 * eps);
  }

  // Standard normal (Box-Muller).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = real01();
    while (u1 <= 0.0) u1 = real01();
    const double u2 = real01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// 128-bit FNV-1a content hash; 32 hex chars. Used for cache keys, config
// hashes, and artifact integrity checks.
// ---------------------------------------------------------------------------

struct Hash128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  bool operator==(const Hash128&) const = default;

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(32, '0');
    for (int i = 0; i < 16; ++i) {
      const std::uint64_t w = i < 8 ? hi : lo;
      const int shift = 56 - 8 * (i % 8);
      const unsigned byte = static_cast<unsigned>((w >> shift) & 0xff);
      out[2 * i] = digits[byte >> 4];
      out[2 * i + 1] = digits[byte & 0xf];
    }
    return out;
  }
};

class Fnv128 {
public:
  Fnv128() {
    // FNV-1a 128-bit offset basis.
    state_ = (static_cast<unsigned __int128>(0x6c62272e07bb0142ULL) << 64) |
             0x62b821756295c58dULL;
  }

  void update(std::string_view bytes) {
    // FNV prime for 128 bits: 2^88 + 2^8 + 0x3b.
    const unsigned __int128 prime =
        (static_cast<unsigned __int128>(1) << 88) + (1u << 8) + 0x3b;
    for (const unsigned char c : bytes) {
      state_ ^= c;
      state_ *= prime;
    }
  }

  Hash128 digest() const {
    return Hash128{static_cast<std::uint64_t>(state_ >> 64),
                   static_cast<std::uint64_t>(state_)};
  }

private:
  unsigned __int128 state_;
};

inline Hash128 hash_bytes(std::string_view bytes) {
  Fnv128 h;
  h.update(bytes);
  return h.digest();
}

// Hash of several fields with an unambiguous separator.
inline Hash128 hash_fields(const std::vector<std::string_view>& fields) {
  Fnv128 h;
  for (const auto& f : fields) {
    std::uint64_t len = f.size();
    h.update(std::string_view(reinterpret_cast<const char*>(&len), 8));
    h.update(f);
  }
  return h.digest();
}

inline Hash128 hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  Fnv128 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------
// Small string helpers.
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

inline std::string replace_all(std::string text, std::string_view from,
                               std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

// Escape newlines/tabs so multi-line text fits a tab-separated line.
inline std::string escape_tsv(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string unescape_tsv(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      switch (s[i]) {
        case '\\': out += '\\'; break;
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        default: out += s[i];
      }
    } else {
      out += s[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numerics.
// ---------------------------------------------------------------------------

// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace llard
