#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gaug {

/// Splits on anything that is not an ASCII letter/digit or a non-ASCII byte,
/// lowercasing ASCII letters.
std::vector<std::string> tokenize(std::string_view text);

/// Jaccard index of the token sets of `a` and `b`; 1 when both are empty.
double token_jaccard(std::string_view a, std::string_view b);

/// Replaces line breaks and tabs with spaces so a text fits on one prompt line.
std::string single_line(std::string_view text);

}  // namespace gaug
