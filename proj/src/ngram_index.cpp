#include "plexitrace/ngram_index.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "plexitrace/error.hpp"
#include "plexitrace/mapped_file.hpp"

namespace plexitrace {

struct SuffixIndex::Storage {
  std::vector<TokenId> tokens;
  std::vector<std::uint64_t> docs;
  std::vector<std::uint64_t> sa;
  MappedFile tokens_file;
  MappedFile docs_file;
  MappedFile sa_file;
};

namespace {

// Sentinel sorts below every token; 0 is left free for "past the end".
inline std::uint64_t symbol_rank(TokenId t) { return t == kSentinel ? 1 : std::uint64_t{t} + 2; }

void check_query(std::span<const TokenId> query, std::uint32_t vocab_size) {
  if (query.empty()) throw Error(ErrorCode::kEmptyQuery, "query has no tokens");
  if (query.size() > kMaxQueryLength) {
    throw Error(ErrorCode::kQueryTooLong,
                "query has " + std::to_string(query.size()) + " tokens, limit is " + std::to_string(kMaxQueryLength));
  }
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (query[i] >= vocab_size) {
      throw Error(ErrorCode::kTokenOutOfRange, "query offset " + std::to_string(i) + ": token " +
                                                   std::to_string(query[i]) + " >= vocab_size " +
                                                   std::to_string(vocab_size));
    }
  }
}

// Compares the suffix at `pos` against `query`, looking at most |query| tokens.
// A sentinel inside that prefix makes the suffix smaller.
int compare_prefix(std::span<const TokenId> stream, std::uint64_t pos, std::span<const TokenId> query) {
  for (std::size_t i = 0; i < query.size(); ++i) {
    const TokenId t = stream[pos + i];
    if (t == kSentinel) return -1;
    if (t != query[i]) return t < query[i] ? -1 : 1;
  }
  return 0;
}

}  // namespace

int compare_suffixes(std::span<const TokenId> stream, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t n = stream.size();
  while (true) {
    const std::uint64_t ra = a < n ? symbol_rank(stream[a]) : 0;
    const std::uint64_t rb = b < n ? symbol_rank(stream[b]) : 0;
    if (ra != rb) return ra < rb ? -1 : 1;
    if (ra == 0) return 0;
    ++a;
    ++b;
  }
}

std::vector<std::uint64_t> build_suffix_array(std::span<const TokenId> stream) {
  const std::size_t n = stream.size();
  if (n == 0) return {};
  std::vector<std::uint64_t> sa(n);
  std::vector<std::uint64_t> rank(n);
  std::vector<std::uint64_t> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = i;
    rank[i] = symbol_rank(stream[i]);
  }

  std::uint64_t k = 0;  // ranks currently order suffixes by their first max(k,1) symbols
  while (true) {
    auto second = [&](std::uint64_t i) -> std::uint64_t { return k == 0 ? 0 : (i + k < n ? rank[i + k] : 0); };
    std::sort(sa.begin(), sa.end(), [&](std::uint64_t a, std::uint64_t b) {
      if (rank[a] != rank[b]) return rank[a] < rank[b];
      return second(a) < second(b);
    });
    next[sa[0]] = 1;
    for (std::size_t i = 1; i < n; ++i) {
      const bool same = rank[sa[i]] == rank[sa[i - 1]] && second(sa[i]) == second(sa[i - 1]);
      next[sa[i]] = next[sa[i - 1]] + (same ? 0 : 1);
    }
    rank.swap(next);
    if (rank[sa[n - 1]] == n) break;
    k = k == 0 ? 1 : k * 2;
  }

  std::vector<std::uint64_t> out;
  out.reserve(n);
  for (std::uint64_t pos : sa) {
    if (stream[pos] != kSentinel) out.push_back(pos);
  }
  return out;
}

SuffixIndex SuffixIndex::from_corpus(const Corpus& corpus) {
  if (corpus.documents.empty() || corpus.total_tokens == 0) {
    throw Error(ErrorCode::kCorpusCorrupt, "cannot index an empty corpus");
  }
  auto storage = std::make_shared<Storage>();
  std::tie(storage->tokens, storage->docs) = flatten(corpus);
  storage->sa = build_suffix_array(storage->tokens);

  SuffixIndex index;
  index.tokens_ = storage->tokens;
  index.docs_ = storage->docs;
  index.sa_ = storage->sa;
  index.vocab_size_ = corpus.vocabulary.vocab_size;
  index.storage_ = std::move(storage);
  return index;
}

SuffixIndex SuffixIndex::open(const std::filesystem::path& dir) {
  const CorpusFiles files{dir};
  std::uint32_t vocab_size = 0;
  std::uint64_t total_tokens = 0;
  std::uint64_t doc_count = 0;
  try {
    const auto meta = nlohmann::json::parse(detail::read_file(files.meta()));
    vocab_size = meta.at("vocab_size").get<std::uint32_t>();
    total_tokens = meta.at("total_tokens").get<std::uint64_t>();
    doc_count = meta.at("doc_count").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorpusCorrupt, "meta.json: " + std::string(e.what()));
  }

  auto storage = std::make_shared<Storage>();
  storage->tokens_file = MappedFile(files.tokens());
  storage->docs_file = MappedFile(files.docs());
  storage->sa_file = MappedFile(files.suffix_array());

  SuffixIndex index;
  index.tokens_ = storage->tokens_file.as<TokenId>();
  index.docs_ = storage->docs_file.as<std::uint64_t>();
  index.sa_ = storage->sa_file.as<std::uint64_t>();
  index.vocab_size_ = vocab_size;
  if (doc_count == 0 || index.docs_.size() != doc_count || index.tokens_.size() != total_tokens + doc_count ||
      index.sa_.size() != total_tokens || index.tokens_.back() != kSentinel) {
    throw Error(ErrorCode::kCorpusCorrupt, dir.string() + ": index files disagree with meta.json");
  }
  index.storage_ = std::move(storage);
  return index;
}

SuffixIndex build_index(const std::filesystem::path& dir) {
  const Corpus corpus = load_corpus(dir);
  if (corpus.total_tokens == 0) throw Error(ErrorCode::kCorpusCorrupt, "cannot index an empty corpus");
  const auto [stream, starts] = flatten(corpus);
  const auto sa = build_suffix_array(stream);
  detail::write_file(CorpusFiles{dir}.suffix_array(), detail::bytes_of(std::span<const std::uint64_t>(sa)));
  return SuffixIndex::open(dir);
}

void SuffixIndex::validate_query(std::span<const TokenId> query) const { check_query(query, vocab_size_); }

std::pair<std::size_t, std::size_t> SuffixIndex::range(std::span<const TokenId> query) const {
  const auto lo = std::partition_point(sa_.begin(), sa_.end(),
                                       [&](std::uint64_t pos) { return compare_prefix(tokens_, pos, query) < 0; });
  const auto hi = std::partition_point(lo, sa_.end(),
                                       [&](std::uint64_t pos) { return compare_prefix(tokens_, pos, query) <= 0; });
  return {static_cast<std::size_t>(lo - sa_.begin()), static_cast<std::size_t>(hi - sa_.begin())};
}

std::uint64_t SuffixIndex::count(std::span<const TokenId> query) const {
  validate_query(query);
  const auto [lo, hi] = range(query);
  return hi - lo;
}

std::vector<Occurrence> SuffixIndex::locate(std::span<const TokenId> query, std::uint64_t limit) const {
  validate_query(query);
  const auto [lo, hi] = range(query);
  std::vector<std::uint64_t> positions(sa_.begin() + static_cast<std::ptrdiff_t>(lo),
                                       sa_.begin() + static_cast<std::ptrdiff_t>(hi));
  const std::size_t keep = static_cast<std::size_t>(std::min<std::uint64_t>(limit, positions.size()));
  std::partial_sort(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(keep), positions.end());
  positions.resize(keep);

  std::vector<Occurrence> out;
  out.reserve(keep);
  for (std::uint64_t pos : positions) {
    const auto it = std::upper_bound(docs_.begin(), docs_.end(), pos);
    const auto doc = static_cast<std::uint64_t>(it - docs_.begin()) - 1;
    out.push_back(Occurrence{doc, pos - docs_[doc], pos});
  }
  return out;
}

std::uint64_t SuffixIndex::doc_end(std::uint64_t doc_id) const {
  return (doc_id + 1 < docs_.size() ? docs_[doc_id + 1] : tokens_.size()) - 1;
}

OccurrenceContext SuffixIndex::context(const Occurrence& occ, std::size_t match_len, std::size_t radius) const {
  if (occ.doc_id >= docs_.size() || occ.global_pos != docs_[occ.doc_id] + occ.offset ||
      occ.global_pos + match_len > doc_end(occ.doc_id)) {
    throw Error(ErrorCode::kInvalidOccurrence, "occurrence (doc " + std::to_string(occ.doc_id) + ", offset " +
                                                   std::to_string(occ.offset) + ") is not inside the index");
  }
  const std::uint64_t start = docs_[occ.doc_id];
  const std::uint64_t end = doc_end(occ.doc_id);
  const std::uint64_t match_end = occ.global_pos + match_len;
  const std::uint64_t before_begin = occ.global_pos - std::min<std::uint64_t>(radius, occ.global_pos - start);
  const std::uint64_t after_end = match_end + std::min<std::uint64_t>(radius, end - match_end);

  auto slice = [&](std::uint64_t a, std::uint64_t b) {
    return std::vector<TokenId>(tokens_.begin() + static_cast<std::ptrdiff_t>(a),
                                tokens_.begin() + static_cast<std::ptrdiff_t>(b));
  };
  return {slice(before_begin, occ.global_pos), slice(occ.global_pos, match_end), slice(match_end, after_end)};
}

std::uint64_t brute_force_count(const Corpus& corpus, std::span<const TokenId> query) {
  check_query(query, corpus.vocabulary.vocab_size);
  std::uint64_t c = 0;
  for (const auto& doc : corpus.documents) {
    const auto& t = doc.tokens;
    if (t.size() < query.size()) continue;
    for (std::size_t i = 0; i + query.size() <= t.size(); ++i) {
      if (std::equal(query.begin(), query.end(), t.begin() + static_cast<std::ptrdiff_t>(i))) ++c;
    }
  }
  return c;
}

}  // namespace plexitrace
