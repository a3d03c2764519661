#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace saspec {

/// Finite word over {1,...,N}; symbols are stored 1-indexed.
using Word = std::vector<std::uint8_t>;

/// "121" -> {1,2,1}. Only digits 1-9 are accepted.
Word word_from_string(const std::string& s);
/// Symbols above 9 are written in brackets, e.g. "1[12]3".
std::string word_to_string(const Word& w);

Word concat(const Word& a, const Word& b);
Word power(const Word& w, int k);

}  // namespace saspec
