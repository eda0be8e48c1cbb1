#include "masattr/similarity.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "masattr/text.hpp"

namespace masattr {

std::vector<double> SimilarityProvider::similarity_batch(const std::vector<TextPair>& pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back(similarity(a, b));
  return out;
}

double LexicalSimilarity::similarity(const std::string& a, const std::string& b) const {
  return jaccard_similarity(a, b);
}

HttpSimilarity::HttpSimilarity(Options options) : options_(std::move(options)) {
  const auto scheme = options_.url.find("://");
  if (scheme == std::string::npos) throw ProviderError("embedding URL needs a scheme: " + options_.url);
  const auto slash = options_.url.find('/', scheme + 3);
  origin_ = options_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : options_.url.substr(slash);
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

std::unique_ptr<HttpSimilarity> HttpSimilarity::from_environment() {
  const char* url = std::getenv("MAS_EMBED_URL");
  if (!url || !*url) throw ProviderError("MAS_EMBED_URL is not set");
  Options opts;
  opts.url = url;
  if (const char* key = std::getenv("MAS_EMBED_KEY")) opts.api_key = key;
  return std::make_unique<HttpSimilarity>(std::move(opts));
}

double HttpSimilarity::similarity(const std::string& a, const std::string& b) const {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const nlohmann::json body = {{"text_a", a}, {"text_b", b}};
  const auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw ProviderError("embedding service returned HTTP " + std::to_string(res->status));
  try {
    const double s = nlohmann::json::parse(res->body).at("similarity").get<double>();
    if (!(s >= -1.0 && s <= 1.0)) throw ProviderError("embedding similarity out of range");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed embedding reply: ") + e.what());
  }
}

std::vector<double> HttpSimilarity::similarity_batch(const std::vector<TextPair>& pairs) const {
  std::vector<double> out(pairs.size(), 0.0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size() && !failed; i = next++) {
      try {
        out[i] = similarity(pairs[i].first, pairs[i].second);
      } catch (const ProviderError& e) {
        std::lock_guard lock(error_mutex);
        if (!failed.exchange(true)) error = e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  const auto n = std::min(options_.max_in_flight, pairs.size());
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed) throw ProviderError(error);
  return out;
}

std::unique_ptr<SimilarityProvider> make_provider(const std::string& kind) {
  if (kind == "mock" || kind == "lexical") return std::make_unique<LexicalSimilarity>();
  if (kind == "http") return HttpSimilarity::from_environment();
  throw std::invalid_argument("unknown embedder: " + kind);
}

}  // namespace masattr
