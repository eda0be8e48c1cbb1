#pragma once

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace masattr {

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TextPair = std::pair<std::string, std::string>;

// Text similarity in [-1, 1].
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string name() const = 0;
  virtual double similarity(const std::string& a, const std::string& b) const = 0;
  // Results in input order. Throws ProviderError if any request fails.
  virtual std::vector<double> similarity_batch(const std::vector<TextPair>& pairs) const;
};

// Token-set Jaccard overlap; offline and deterministic.
class LexicalSimilarity : public SimilarityProvider {
 public:
  std::string name() const override { return "mock"; }
  double similarity(const std::string& a, const std::string& b) const override;
};

// POSTs {"text_a", "text_b"} as JSON and reads {"similarity"} from the reply.
class HttpSimilarity : public SimilarityProvider {
 public:
  struct Options {
    std::string url;
    std::string api_key;
    std::chrono::milliseconds timeout{5000};
    std::size_t max_in_flight = 4;
  };

  explicit HttpSimilarity(Options options);
  // Reads MAS_EMBED_URL and MAS_EMBED_KEY; throws ProviderError when the URL is unset.
  static std::unique_ptr<HttpSimilarity> from_environment();

  std::string name() const override { return "http"; }
  double similarity(const std::string& a, const std::string& b) const override;
  std::vector<double> similarity_batch(const std::vector<TextPair>& pairs) const override;

 private:
  Options options_;
  std::string origin_;
  std::string path_;
};

std::unique_ptr<SimilarityProvider> make_provider(const std::string& kind);

}  // namespace masattr
