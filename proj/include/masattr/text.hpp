#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace masattr {

// Lowercased runs of ASCII alphanumerics. "Paris population 2.1M" -> {paris, population, 2, 1m}.
std::vector<std::string> tokenize(std::string_view text);

// Jaccard overlap of the token sets of two texts; 0 when both are empty.
double jaccard_similarity(std::string_view a, std::string_view b);

// Maximum nesting depth over (), [] and {}; unbalanced closers are ignored.
int bracket_depth(std::string_view text);

// Number of tokens drawn from a fixed error vocabulary (error, failed, timeout, ...).
int error_token_count(std::string_view text);

}  // namespace masattr
