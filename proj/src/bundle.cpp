#include "gate/bundle.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "gate/error.hpp"

namespace gate {

namespace fs = std::filesystem;

std::string fingerprint(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

const FoldData& Bundle::fold(std::size_t k) const {
  if (k >= folds.size()) {
    throw ConfigError("fold " + std::to_string(k) + " out of range; bundle has " +
                      std::to_string(folds.size()) + " folds");
  }
  return folds[k];
}

RawInputs read_raw_inputs(const fs::path& ratings, const fs::path& documents,
                          const std::optional<fs::path>& relations) {
  for (const auto& p : {ratings, documents}) {
    if (!fs::exists(p)) throw DataError("input file not found: " + p.string());
  }
  RawInputs raw;
  raw.ratings = read_ratings_tsv(ratings);
  raw.documents = read_documents_tsv(documents);
  if (relations) {
    if (!fs::exists(*relations)) throw DataError("input file not found: " + relations->string());
    raw.relations = read_relations_tsv(*relations);
  }
  return raw;
}

namespace {

std::string raw_fingerprint(const RawInputs& raw) {
  std::string canon;
  for (const auto& r : raw.ratings) {
    canon += r.user + '\t' + r.item + '\t' + (r.has_score ? format_double(r.score) : "") + '\n';
  }
  canon += "\x1d";
  for (const auto& [k, v] : raw.documents) canon += k + '\t' + v + '\n';
  canon += "\x1d";
  if (raw.relations)
    for (const auto& [a, b] : *raw.relations) canon += a + '\t' + b + '\n';
  return fingerprint(canon);
}

const char* metric_name(SimilarityMetric m) {
  return m == SimilarityMetric::kCosine ? "cosine" : "jaccard";
}

}  // namespace

Bundle preprocess(const RawInputs& raw, const PreprocessOptions& opts) {
  Bundle b;
  const auto pairs = binarize_ratings(raw.ratings, opts.rating_threshold, opts.prebinarized);
  auto filtered = filter_sparse(pairs, opts.filter);
  b.user_names = std::move(filtered.user_names);
  b.item_names = std::move(filtered.item_names);
  b.ratings = SparseBinaryRatings(b.user_names.size(), b.item_names.size(), filtered.pairs);

  std::vector<std::optional<std::string>> texts(b.item_names.size());
  for (std::size_t i = 0; i < b.item_names.size(); ++i) {
    if (auto it = raw.documents.find(b.item_names[i]); it != raw.documents.end()) texts[i] = it->second;
  }
  b.corpus = build_vocab(texts, opts.vocab);

  std::optional<NeighborGraph> relation_graph;
  if (raw.relations) {
    std::unordered_map<std::string, Id> index;
    for (Id i = 0; i < b.item_names.size(); ++i) index.emplace(b.item_names[i], i);
    std::vector<std::pair<Id, Id>> edges;
    for (const auto& [a, c] : *raw.relations) {
      auto ia = index.find(a), ic = index.find(c);
      if (ia != index.end() && ic != index.end()) edges.emplace_back(ia->second, ic->second);
    }
    relation_graph = build_neighbors_from_adjacency(edges, b.item_names.size());
  }

  for (std::size_t k = 0; k < opts.num_folds; ++k) {
    FoldData f;
    f.split = split_per_user(b.ratings, opts.test_frac, opts.seed, k);
    f.graph = relation_graph ? *relation_graph : build_neighbors_from_similarity(f.split.train, opts.similarity);
    b.folds.push_back(std::move(f));
  }

  auto& m = b.manifest;
  m["format"] = "gate-bundle";
  m["version"] = std::to_string(kBundleVersion);
  m["tool_version"] = kToolVersion;
  m["dataset_fingerprint"] = raw_fingerprint(raw);
  m["num_users"] = std::to_string(b.num_users());
  m["num_items"] = std::to_string(b.num_items());
  m["num_ratings"] = std::to_string(b.ratings.nnz());
  m["num_words"] = std::to_string(b.corpus.num_words());
  m["num_textless_items"] = std::to_string(b.corpus.num_textless());
  m["num_folds"] = std::to_string(opts.num_folds);
  m["seed"] = std::to_string(opts.seed);
  m["test_frac"] = format_double(opts.test_frac);
  m["rating_threshold"] = format_double(opts.rating_threshold);
  m["prebinarized"] = opts.prebinarized ? "true" : "false";
  m["min_user_ratings"] = std::to_string(opts.filter.min_user_ratings);
  m["min_item_ratings"] = std::to_string(opts.filter.min_item_ratings);
  m["max_vocab"] = std::to_string(opts.vocab.max_vocab);
  m["min_df"] = std::to_string(opts.vocab.min_df);
  m["max_len"] = std::to_string(opts.vocab.max_len);
  m["neighbor_source"] = relation_graph ? "relations" : "similarity";
  m["similarity_metric"] = metric_name(opts.similarity.metric);
  m["similarity_threshold"] = format_double(opts.similarity.threshold);
  m["max_neighbors"] = std::to_string(opts.similarity.max_neighbors);
  m["symmetrize_neighbors"] = opts.similarity.symmetrize ? "true" : "false";
  return b;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("bundle file missing: " + p.string());
  return in;
}

void write_ids(std::ostream& out, std::span<const Id> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ' ';
    out << ids[i];
  }
}

std::vector<Id> parse_ids(std::string_view s, const fs::path& p, std::size_t line_no) {
  std::vector<Id> out;
  const char* cur = s.data();
  const char* end = s.data() + s.size();
  while (cur < end) {
    if (*cur == ' ') {
      ++cur;
      continue;
    }
    Id v;
    auto [ptr, ec] = std::from_chars(cur, end, v);
    if (ec != std::errc{}) throw DataError(p.string() + ":" + std::to_string(line_no) + ": bad id list");
    out.push_back(v);
    cur = ptr;
  }
  return out;
}

Id parse_id(std::string_view s, const fs::path& p, std::size_t line_no) {
  Id v;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError(p.string() + ":" + std::to_string(line_no) + ": bad id '" + std::string(s) + "'");
  }
  return v;
}

// Calls fn(fields, line_no) for every non-empty line.
template <typename Fn>
void for_each_row(const fs::path& p, std::size_t expected_fields, Fn&& fn) {
  auto in = open_in(p);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != expected_fields) {
      throw DataError(p.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_fields) + " fields");
    }
    fn(f, line_no);
  }
}

void write_pairs(const fs::path& p, const SparseBinaryRatings& r) {
  auto out = open_out(p);
  for (const auto& e : r.pairs()) out << e.user << '\t' << e.item << '\n';
}

std::vector<Interaction> read_pairs(const fs::path& p) {
  std::vector<Interaction> out;
  for_each_row(p, 2, [&](const auto& f, std::size_t ln) {
    out.push_back({parse_id(f[0], p, ln), parse_id(f[1], p, ln)});
  });
  return out;
}

void write_names(const fs::path& p, const std::vector<std::string>& names) {
  auto out = open_out(p);
  for (std::size_t i = 0; i < names.size(); ++i) out << i << '\t' << names[i] << '\n';
}

std::vector<std::string> read_names(const fs::path& p) {
  std::vector<std::string> names;
  for_each_row(p, 2, [&](const auto& f, std::size_t ln) {
    if (parse_id(f[0], p, ln) != names.size()) throw DataError(p.string() + ": ids must be dense and ordered");
    names.emplace_back(f[1]);
  });
  return names;
}

std::size_t manifest_count(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("bundle manifest lacks '" + key + "'");
  return std::stoull(it->second);
}

}  // namespace

void write_bundle(const fs::path& dir, const Bundle& b) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "manifest.txt");
    for (const auto& [k, v] : b.manifest) out << k << '=' << v << '\n';
  }
  write_names(dir / "users.tsv", b.user_names);
  write_names(dir / "items.tsv", b.item_names);
  {
    auto out = open_out(dir / "vocab.tsv");
    for (Id id = kFirstWordToken; id < b.corpus.vocab_size(); ++id) out << b.corpus.token(id) << '\t' << id << '\n';
  }
  {
    auto out = open_out(dir / "docs.tsv");
    for (Id i = 0; i < b.corpus.num_items(); ++i) {
      out << i << '\t' << (b.corpus.has_text(i) ? 1 : 0) << '\t';
      if (b.corpus.has_text(i)) write_ids(out, b.corpus.doc(i));
      out << '\n';
    }
  }
  write_pairs(dir / "ratings.tsv", b.ratings);
  for (std::size_t k = 0; k < b.folds.size(); ++k) {
    const auto fd = dir / ("fold_" + std::to_string(k));
    fs::create_directories(fd);
    const auto& f = b.folds[k];
    write_pairs(fd / "train.tsv", f.split.train);
    {
      auto out = open_out(fd / "test.tsv");
      for (Id u = 0; u < f.split.test.size(); ++u)
        for (Id i : f.split.test[u]) out << u << '\t' << i << '\n';
    }
    {
      auto out = open_out(fd / "neighbors.tsv");
      for (Id i = 0; i < f.graph.num_items(); ++i) {
        out << i << '\t';
        write_ids(out, f.graph.of(i));
        out << '\n';
      }
    }
  }
}

Bundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("bundle directory not found: " + dir.string());
  Bundle b;
  {
    auto in = open_in(dir / "manifest.txt");
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      b.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  if (b.manifest["format"] != "gate-bundle") throw DataError("not a gate bundle: " + dir.string());
  if (manifest_count(b.manifest, "version") != kBundleVersion) {
    throw DataError("unsupported bundle version in " + dir.string());
  }
  b.user_names = read_names(dir / "users.tsv");
  b.item_names = read_names(dir / "items.tsv");
  const std::size_t m = b.user_names.size(), n = b.item_names.size();
  if (m != manifest_count(b.manifest, "num_users") || n != manifest_count(b.manifest, "num_items")) {
    throw DataError("bundle user/item tables disagree with manifest counts");
  }

  std::vector<std::string> words;
  for_each_row(dir / "vocab.tsv", 2, [&](const auto& f, std::size_t ln) {
    if (parse_id(f[1], dir / "vocab.tsv", ln) != words.size() + kFirstWordToken) {
      throw DataError("vocab.tsv: ids must be dense starting at " + std::to_string(kFirstWordToken));
    }
    words.emplace_back(f[0]);
  });
  std::vector<std::vector<Id>> docs(n);
  std::vector<bool> has_text(n, false);
  for_each_row(dir / "docs.tsv", 3, [&](const auto& f, std::size_t ln) {
    const Id i = parse_id(f[0], dir / "docs.tsv", ln);
    if (i >= n) throw DataError("docs.tsv: item id out of range");
    has_text[i] = f[1] == "1";
    docs[i] = parse_ids(f[2], dir / "docs.tsv", ln);
  });
  b.corpus = ItemCorpus(std::move(words), std::move(docs), std::move(has_text),
                        manifest_count(b.manifest, "max_len"));
  b.ratings = SparseBinaryRatings(m, n, read_pairs(dir / "ratings.tsv"));

  const std::size_t folds = manifest_count(b.manifest, "num_folds");
  const std::uint64_t seed = manifest_count(b.manifest, "seed");
  for (std::size_t k = 0; k < folds; ++k) {
    const auto fd = dir / ("fold_" + std::to_string(k));
    FoldData f;
    f.split.seed = seed;
    f.split.fold_index = k;
    f.split.train = SparseBinaryRatings(m, n, read_pairs(fd / "train.tsv"));
    f.split.test.resize(m);
    for (const auto& e : read_pairs(fd / "test.tsv")) {
      if (e.user >= m || e.item >= n) throw DataError((fd / "test.tsv").string() + ": id out of range");
      f.split.test[e.user].push_back(e.item);
    }
    for (auto& t : f.split.test) std::sort(t.begin(), t.end());
    f.graph.neighbors.resize(n);
    for_each_row(fd / "neighbors.tsv", 2, [&](const auto& r, std::size_t ln) {
      const Id i = parse_id(r[0], fd / "neighbors.tsv", ln);
      if (i >= n) throw DataError("neighbors.tsv: item id out of range");
      f.graph.neighbors[i] = parse_ids(r[1], fd / "neighbors.tsv", ln);
      for (Id j : f.graph.neighbors[i])
        if (j >= n || j == i) throw DataError("neighbors.tsv: invalid neighbor of item " + std::to_string(i));
    });
    b.folds.push_back(std::move(f));
  }
  return b;
}

}  // namespace gate
