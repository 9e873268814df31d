// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

namespace postlab {

namespace {
constexpr const char* kPunct = " \n.,:<>/\\{}";
constexpr const char* kOps = "+-*()=";
}  // namespace

Tokenizer::Tokenizer() {
  pieces_.reserve(64);
  pieces_.push_back("");  // eos
  for (char c = '0'; c <= '9'; ++c) pieces_.push_back(std::string(1, c));
  for (const char* p = kOps; *p; ++p) pieces_.push_back(std::string(1, *p));
  for (const char* p = kPunct; *p; ++p) pieces_.push_back(std::string(1, *p));
  for (char c = 'a'; c <= 'z'; ++c) pieces_.push_back(std::string(1, c));
  words_ = {"wait",  "check", "mistake", "alternative", "however",
            "first", "next",  "verify",  "hmm",         "maybe"};
  for (const auto& w : words_) pieces_.push_back(w);
  if (pieces_.size() != 64) throw std::logic_error("vocab must be 64");

  for (int& v : char_ids_) v = -1;
  for (int id = 1; id < kFirstWord; ++id) {
    char_ids_[static_cast<unsigned char>(pieces_[id][0])] = id;
  }
}

const Tokenizer& Tokenizer::instance() {
  static const Tokenizer tok;
  return tok;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    int best = -1;
    size_t best_len = 0;
    for (size_t w = 0; w < words_.size(); ++w) {
      const std::string& word = words_[w];
      if (word.size() > best_len && text.compare(i, word.size(), word) == 0) {
        best = kFirstWord + static_cast<int>(w);
        best_len = word.size();
      }
    }
    if (best < 0) {
      const int id = char_ids_[static_cast<unsigned char>(text[i])];
      if (id < 0) {
        throw std::invalid_argument("unsupported character in text: '" +
                                    std::string(1, text[i]) + "'");
      }
      best = id;
      best_len = 1;
    }
    out.push_back(best);
    i += best_len;
  }
  return out;
}

std::string Tokenizer::decode(std::span<const int> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= 64) throw std::out_of_range("token id out of range");
    out += pieces_[t];
  }
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace postlab
