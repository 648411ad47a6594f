#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gate/ratings.hpp"

namespace gate {

std::vector<std::string_view> split_tabs(std::string_view line);

// Lowercases, splits on non-alphanumeric ASCII, and drops bundled stopwords.
std::vector<std::string> tokenize(std::string_view text);
bool is_stopword(std::string_view token);

// Reads `item_id<TAB>text` lines; `\n`, `\t` and `\\` escapes in text are decoded.
std::map<std::string, std::string> read_documents_tsv(const std::filesystem::path& path);
// Reads `item_id<TAB>item_id` lines.
std::vector<std::pair<std::string, std::string>> read_relations_tsv(const std::filesystem::path& path);

inline constexpr Id kPadToken = 0;
// Sole token of a textless item's document, so every item has a content branch.
inline constexpr Id kUnknownToken = 1;
inline constexpr Id kFirstWordToken = 2;

// Vocabulary plus per-item token-id sequences. Word ids start at kFirstWordToken;
// ids 0 (padding) and 1 (unknown) are reserved, so vocab_size() = num_words() + 2.
class ItemCorpus {
 public:
  ItemCorpus() = default;
  ItemCorpus(std::vector<std::string> words, std::vector<std::vector<Id>> docs,
             std::vector<bool> has_text, std::size_t max_len);

  std::size_t num_items() const { return docs_.size(); }
  std::size_t num_words() const { return tokens_.size() - kFirstWordToken; }
  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t max_len() const { return max_len_; }

  const std::string& token(Id id) const { return tokens_.at(id); }
  std::optional<Id> find(std::string_view token) const;

  // Never empty: textless items map to {kUnknownToken}.
  std::span<const Id> doc(Id item) const { return docs_.at(item); }
  bool has_text(Id item) const { return has_text_.at(item); }
  std::size_t num_textless() const;

  bool operator==(const ItemCorpus& o) const {
    return tokens_ == o.tokens_ && docs_ == o.docs_ && has_text_ == o.has_text_ &&
           max_len_ == o.max_len_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Id> index_;
  std::vector<std::vector<Id>> docs_;
  std::vector<bool> has_text_;
  std::size_t max_len_ = 300;
};

struct VocabOptions {
  std::size_t max_vocab = 8000;
  std::size_t min_df = 1;
  std::size_t max_len = 300;
};

// Keeps the top `max_vocab` tokens by document frequency (ties by token string) among
// those with df >= min_df. Out-of-vocabulary tokens are dropped and every document is
// truncated to `max_len` tokens. `texts[i]` is item i's description, if any.
ItemCorpus build_vocab(std::span<const std::optional<std::string>> texts, const VocabOptions& opts = {});

}  // namespace gate
