#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nlidisc/metrics.hpp"

namespace nlidisc {

/// Maps texts to per-token unit vectors. Results are returned in input
/// order. An empty text yields an empty TokenEmbeddings.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::vector<TokenEmbeddings> embed(const std::vector<std::string>& texts) = 0;
};

/// Lowercased alphanumeric runs.
std::vector<std::string> simple_tokenize(std::string_view text);

/// Deterministic stand-in encoder: each token maps to a unit vector drawn
/// from an RNG seeded by (seed, token). Identical tokens get identical
/// vectors; distinct tokens are nearly orthogonal in high dimension.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 64, std::uint64_t seed = 0);
  std::string id() const override;
  std::vector<TokenEmbeddings> embed(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Remote encoder: POST {path} {"texts": [...]} ->
/// {"items": [{"tokens": [...], "vectors": [[...], ...]}, ...]}.
/// Vectors are normalized on receipt.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, std::string path = "/embed", std::string api_key = {},
                        std::size_t batch_size = 32);
  std::string id() const override;
  std::vector<TokenEmbeddings> embed(const std::vector<std::string>& texts) override;

 private:
  std::string base_url_;
  std::string path_;
  std::string api_key_;
  std::size_t batch_size_;
};

}  // namespace nlidisc
