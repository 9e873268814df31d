// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_TOKENIZER_HPP_
#define POSTLAB_TOKENIZER_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace postlab {

// Fixed 64-entry vocabulary over lowercase text:
//   id 0            end-of-sequence, renders as ""
//   ids 1..10       digits '0'..'9'
//   ids 11..16      + - * ( ) =
//   ids 17..27      space \n . , : < > / \ { }
//   ids 28..53      'a'..'z'
//   ids 54..63      whole reasoning words (wait, check, ...), one token each
// Encoding is greedy longest-match, so every supported string round-trips.
class Tokenizer {
 public:
  static const Tokenizer& instance();

  int vocab_size() const { return 64; }
  int eos_id() const { return 0; }

  // Throws std::invalid_argument on characters outside the charset
  // (including uppercase; callers normalise first).
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> tokens) const;

  const std::string& piece(int id) const { return pieces_[id]; }
  bool is_word_token(int id) const { return id >= kFirstWord; }
  // the multi-character reasoning words, in id order
  const std::vector<std::string>& word_pieces() const { return words_; }

 private:
  Tokenizer();
  static constexpr int kFirstWord = 54;
  std::vector<std::string> pieces_;
  std::vector<std::string> words_;
  int char_ids_[256];
};

std::string to_lower_ascii(std::string_view s);

}  // namespace postlab

#endif  // POSTLAB_TOKENIZER_HPP_
