#include "masattr/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace masattr {

namespace {

constexpr std::array<std::string_view, 16> kErrorVocabulary = {
    "error",   "errors",  "exception", "failed",  "fail",   "failure", "traceback", "invalid",
    "timeout", "unable",  "cannot",    "incorrect", "wrong", "missing", "refused",   "crash"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc) != 0) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

int bracket_depth(std::string_view text) {
  int depth = 0;
  int best = 0;
  for (char ch : text) {
    if (ch == '(' || ch == '[' || ch == '{') {
      best = std::max(best, ++depth);
    } else if ((ch == ')' || ch == ']' || ch == '}') && depth > 0) {
      --depth;
    }
  }
  return best;
}

int error_token_count(std::string_view text) {
  int count = 0;
  for (const auto& tok : tokenize(text)) {
    if (std::find(kErrorVocabulary.begin(), kErrorVocabulary.end(), tok) != kErrorVocabulary.end()) {
      ++count;
    }
  }
  return count;
}

}  // namespace masattr
