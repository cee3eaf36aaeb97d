#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "plexitrace/corpus.hpp"
#include "plexitrace/types.hpp"

namespace plexitrace {

struct Occurrence {
  std::uint64_t doc_id = 0;
  std::uint64_t offset = 0;      // within the document
  std::uint64_t global_pos = 0;  // within the token stream

  bool operator==(const Occurrence&) const = default;
};

struct OccurrenceContext {
  std::vector<TokenId> before;
  std::vector<TokenId> match;
  std::vector<TokenId> after;
};

inline constexpr std::size_t kMaxQueryLength = 64;

// Suffix array over the sentinel-separated token stream. Suffixes are ordered
// token-wise with kSentinel below every real token, so a query (which never
// contains kSentinel) matches a contiguous range of the array and never spans
// two documents. Immutable after construction; all queries are const and safe
// to call from any number of threads.
class SuffixIndex {
 public:
  /// In-memory index over `corpus`.
  static SuffixIndex from_corpus(const Corpus& corpus);

  /// Opens tokens.bin, docs.bin and sa.bin in `dir` read-only via mmap.
  /// Errors: Io, CorpusCorrupt.
  static SuffixIndex open(const std::filesystem::path& dir);

  /// Number of start positions of `query` inside a single document.
  /// Errors: EmptyQuery, QueryTooLong, TokenOutOfRange.
  std::uint64_t count(std::span<const TokenId> query) const;

  /// Up to `limit` occurrences, ascending global_pos.
  std::vector<Occurrence> locate(std::span<const TokenId> query,
                                 std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()) const;

  /// Up to `radius` tokens on each side of a `match_len`-token occurrence,
  /// clipped to the document. Errors: InvalidOccurrence.
  OccurrenceContext context(const Occurrence& occ, std::size_t match_len, std::size_t radius) const;

  std::span<const std::uint64_t> suffix_array() const { return sa_; }
  std::span<const TokenId> token_stream() const { return tokens_; }
  std::span<const std::uint64_t> doc_offsets() const { return docs_; }
  std::uint32_t vocab_size() const { return vocab_size_; }
  std::uint64_t doc_count() const { return docs_.size(); }

  /// Exclusive end (sentinel position) of a document in the token stream.
  std::uint64_t doc_end(std::uint64_t doc_id) const;

 private:
  struct Storage;

  void validate_query(std::span<const TokenId> query) const;
  std::pair<std::size_t, std::size_t> range(std::span<const TokenId> query) const;

  std::shared_ptr<const Storage> storage_;
  std::span<const TokenId> tokens_;
  std::span<const std::uint64_t> docs_;
  std::span<const std::uint64_t> sa_;
  std::uint32_t vocab_size_ = 0;
};

/// Suffix array of a sentinel-terminated token stream restricted to
/// non-sentinel positions. Prefix doubling, O(n log^2 n) worst case.
std::vector<std::uint64_t> build_suffix_array(std::span<const TokenId> stream);

/// Loads and verifies the corpus in `dir`, writes sa.bin beside it, and
/// returns the opened index. Rebuilding yields byte-identical sa.bin.
/// Errors: Io, CorpusCorrupt (and corpus load errors).
SuffixIndex build_index(const std::filesystem::path& dir);

/// Reference count by direct scan of every document. Same errors as count.
std::uint64_t brute_force_count(const Corpus& corpus, std::span<const TokenId> query);

/// -1, 0 or 1 comparing the suffixes at positions a and b of `stream`, with
/// kSentinel below every token and end-of-stream below everything.
int compare_suffixes(std::span<const TokenId> stream, std::uint64_t a, std::uint64_t b);

}  // namespace plexitrace
