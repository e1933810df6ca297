#pragma once

#include <string>

#include "prpo/errors.hpp"

namespace prpo {

using Token = int;

// Flat token id space shared by the environment and the policy head:
//   [0, content)                       content tokens; ids [0, choices) double
//                                      as the answer-candidate fact tokens
//   [content, content+choices)         answer-choice markers
//   then <memory> </memory> <answer> </answer> BOS STOP
struct Vocab {
    int content = 0;  // K
    int choices = 0;  // C

    static constexpr int kNumStructural = 6;

    int total() const { return content + choices + kNumStructural; }

    Token choice_marker(int c) const { return content + c; }
    Token mem_open() const { return content + choices; }
    Token mem_close() const { return content + choices + 1; }
    Token ans_open() const { return content + choices + 2; }
    Token ans_close() const { return content + choices + 3; }
    Token bos() const { return content + choices + 4; }
    Token stop() const { return content + choices + 5; }

    bool is_content(Token t) const { return t >= 0 && t < content; }
    bool is_choice_marker(Token t) const { return t >= content && t < content + choices; }
    bool is_tag(Token t) const { return t >= mem_open() && t <= ans_close(); }
    bool in_range(Token t) const { return t >= 0 && t < total(); }

    // Choice index of a marker token; caller must check is_choice_marker first.
    int choice_index(Token t) const { return t - content; }

    void validate() const {
        if (choices < 2) throw ConfigError("vocab: choices must be >= 2, got " + std::to_string(choices));
        if (content < choices + 2)
            throw ConfigError("vocab: content must be >= choices + 2, got content=" + std::to_string(content) +
                              " choices=" + std::to_string(choices));
    }
};

}  // namespace prpo
