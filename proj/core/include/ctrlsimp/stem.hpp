#pragma once

#include <string>
#include <string_view>

namespace ctrlsimp::lexicon {

// One pass of the classic Porter suffix stripper over a lowercase
// alphabetic word. Words of length <= 2 are returned unchanged.
std::string porter_pass(std::string_view word);

// Lowercases, then repeats porter_pass until the word stops changing.
// Tokens containing non-letters are only lowercased. Idempotent.
std::string stem(std::string_view word);

}  // namespace ctrlsimp::lexicon
