#include "httplib.h"

#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "nlidisc/embeddings.hpp"
#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/rng.hpp"

namespace nlidisc {

std::vector<std::string> simple_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) != 0) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw Error(Errc::invalid_argument, "embedding dimension must be positive");
}

std::string HashEmbeddingProvider::id() const {
  return "hash-" + std::to_string(dim_) + "-" + std::to_string(seed_);
}

std::vector<TokenEmbeddings> HashEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<TokenEmbeddings> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    auto tokens = simple_tokenize(text);
    if (tokens.empty()) {
      out.emplace_back();
      continue;
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(tokens.size());
    for (const auto& tok : tokens) {
      Rng rng(derive_seed(seed_, fnv1a64(tok)));
      std::vector<double> v(dim_);
      for (double& x : v) x = 2.0 * rng.unit() - 1.0;
      vectors.push_back(std::move(v));
    }
    out.push_back(TokenEmbeddings::normalized(std::move(tokens), std::move(vectors)));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::string path, std::string api_key,
                                             std::size_t batch_size)
    : base_url_(std::move(base_url)), path_(std::move(path)), api_key_(std::move(api_key)),
      batch_size_(batch_size == 0 ? 1 : batch_size) {}

std::string HttpEmbeddingProvider::id() const { return "http:" + base_url_ + path_; }

std::vector<TokenEmbeddings> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  using nlohmann::json;
  std::vector<TokenEmbeddings> out;
  out.reserve(texts.size());
  httplib::Client client(base_url_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const std::size_t end = std::min(texts.size(), start + batch_size_);
    json body = {{"texts", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                    texts.begin() + static_cast<std::ptrdiff_t>(end))}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::backend_unavailable, "embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::backend_unavailable, "embedding provider HTTP " + std::to_string(res->status));
    try {
      const json j = json::parse(res->body);
      const json& items = j.at("items");
      if (!items.is_array() || items.size() != end - start)
        throw Error(Errc::schema_error, "embedding provider returned the wrong number of items");
      for (const auto& item : items) {
        auto tokens = item.at("tokens").get<std::vector<std::string>>();
        auto vectors = item.at("vectors").get<std::vector<std::vector<double>>>();
        if (tokens.empty() && vectors.empty()) {
          out.emplace_back();
        } else {
          out.push_back(TokenEmbeddings::normalized(std::move(tokens), std::move(vectors)));
        }
      }
    } catch (const json::exception& e) {
      throw Error(Errc::schema_error, std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

}  // namespace nlidisc
