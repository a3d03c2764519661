#include "saspec/word.hpp"

#include "saspec/errors.hpp"

namespace saspec {

Word word_from_string(const std::string& s) {
  Word w;
  w.reserve(s.size());
  for (char ch : s) {
    if (ch < '1' || ch > '9') throw InvalidInput("bad symbol '" + std::string(1, ch) + "' in word \"" + s + "\"");
    w.push_back(static_cast<std::uint8_t>(ch - '0'));
  }
  return w;
}

std::string word_to_string(const Word& w) {
  std::string out;
  for (auto c : w) {
    if (c >= 1 && c <= 9)
      out.push_back(static_cast<char>('0' + c));
    else
      out += "[" + std::to_string(c) + "]";
  }
  return out;
}

Word concat(const Word& a, const Word& b) {
  Word w = a;
  w.insert(w.end(), b.begin(), b.end());
  return w;
}

Word power(const Word& w, int k) {
  Word out;
  out.reserve(w.size() * static_cast<std::size_t>(k > 0 ? k : 0));
  for (int i = 0; i < k; ++i) out.insert(out.end(), w.begin(), w.end());
  return out;
}

}  // namespace saspec
