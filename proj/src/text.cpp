#include "gate/text.hpp"

#include <algorithm>
#include <iterator>
#include <fstream>

#include "gate/error.hpp"

namespace gate {

namespace {

// Sorted for binary search.
constexpr std::string_view kStopwords[] = {
    "a",       "about",  "above",   "after",   "again",   "against", "all",     "am",
    "an",      "and",    "any",     "are",     "as",      "at",      "be",      "because",
    "been",    "before", "being",   "below",   "between", "both",    "but",     "by",
    "can",     "could",  "did",     "do",      "does",    "doing",   "down",    "during",
    "each",    "few",    "for",     "from",    "further", "had",     "has",     "have",
    "having",  "he",     "her",     "here",    "hers",    "herself", "him",     "himself",
    "his",     "how",    "i",       "if",      "in",      "into",    "is",      "it",
    "its",     "itself", "just",    "me",      "more",    "most",    "my",      "myself",
    "no",      "nor",    "not",     "now",     "of",      "off",     "on",      "once",
    "only",    "or",     "other",   "our",     "ours",    "ourselves", "out",   "over",
    "own",     "s",      "same",   "she",     "should",  "so",      "some",    "such",    "than",
    "that",    "the",    "their",   "theirs",  "them",    "themselves", "then", "there",
    "these",   "they",   "this",    "those",   "through", "to",      "too",     "under",
    "until",   "up",     "very",    "was",     "we",      "were",    "what",    "when",
    "where",   "which",  "while",   "who",     "whom",    "why",     "will",    "with",
    "would",   "you",    "your",    "yours",   "yourself", "yourselves",
};

bool is_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == 'n') { out.push_back('\n'); ++i; continue; }
      if (n == 't') { out.push_back('\t'); ++i; continue; }
      if (n == '\\') { out.push_back('\\'); ++i; continue; }
    }
    out.push_back(s[i]);
  }
  return out;
}

std::ifstream open_or_throw(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path.string());
  return in;
}

}  // namespace

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_stopword(std::string_view token) {
  return std::binary_search(std::begin(kStopwords), std::end(kStopwords), token);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !is_stopword(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (is_alnum(c)) {
      cur.push_back(lower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::map<std::string, std::string> read_documents_tsv(const std::filesystem::path& path) {
  auto in = open_or_throw(path, "documents");
  std::map<std::string, std::string> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected item_id<TAB>text");
    }
    auto [it, fresh] = docs.emplace(line.substr(0, tab), unescape(std::string_view(line).substr(tab + 1)));
    if (!fresh) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate item '" +
                      it->first + "'");
    }
  }
  return docs;
}

std::vector<std::pair<std::string, std::string>> read_relations_tsv(const std::filesystem::path& path) {
  auto in = open_or_throw(path, "relations");
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected item_id<TAB>item_id");
    }
    edges.emplace_back(std::string(f[0]), std::string(f[1]));
  }
  return edges;
}

ItemCorpus::ItemCorpus(std::vector<std::string> words, std::vector<std::vector<Id>> docs,
                       std::vector<bool> has_text, std::size_t max_len)
    : docs_(std::move(docs)), has_text_(std::move(has_text)), max_len_(max_len) {
  if (docs_.size() != has_text_.size()) throw DataError("corpus: docs/has_text size mismatch");
  tokens_.reserve(words.size() + kFirstWordToken);
  tokens_.push_back("<pad>");
  tokens_.push_back("<unk>");
  for (auto& w : words) tokens_.push_back(std::move(w));
  for (Id id = kFirstWordToken; id < tokens_.size(); ++id) {
    if (!index_.emplace(tokens_[id], id).second) throw DataError("corpus: duplicate token '" + tokens_[id] + "'");
  }
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    auto& d = docs_[i];
    if (d.empty()) {
      d = {kUnknownToken};
      has_text_[i] = false;
    }
    for (Id t : d) {
      if (t == kPadToken || t >= tokens_.size()) {
        throw DataError("corpus: item " + std::to_string(i) + " has invalid token id " + std::to_string(t));
      }
    }
  }
}

std::optional<Id> ItemCorpus::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ItemCorpus::num_textless() const {
  return static_cast<std::size_t>(std::count(has_text_.begin(), has_text_.end(), false));
}

ItemCorpus build_vocab(std::span<const std::optional<std::string>> texts, const VocabOptions& opts) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(texts.size());
  std::map<std::string, std::size_t> df;
  for (const auto& t : texts) {
    tokenized.push_back(t ? tokenize(*t) : std::vector<std::string>{});
    auto uniq = tokenized.back();
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& w : uniq) ++df[w];
  }

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, c] : df)
    if (c >= opts.min_df) ranked.emplace_back(w, c);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > opts.max_vocab) ranked.resize(opts.max_vocab);

  std::vector<std::string> words;
  std::unordered_map<std::string, Id> ids;
  for (auto& [w, _] : ranked) {
    ids.emplace(w, static_cast<Id>(words.size() + kFirstWordToken));
    words.push_back(w);
  }

  std::vector<std::vector<Id>> docs(texts.size());
  std::vector<bool> has_text(texts.size(), false);
  for (std::size_t i = 0; i < tokenized.size(); ++i) {
    for (const auto& w : tokenized[i]) {
      if (docs[i].size() >= opts.max_len) break;
      if (auto it = ids.find(w); it != ids.end()) docs[i].push_back(it->second);
    }
    has_text[i] = !docs[i].empty();
  }
  return ItemCorpus(std::move(words), std::move(docs), std::move(has_text), opts.max_len);
}

}  // namespace gate
