#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plexitrace/types.hpp"

namespace plexitrace {

struct Vocabulary {
  std::uint32_t vocab_size = 0;
  std::string tokenizer_id;
  // When present, exactly vocab_size entries: piece for each token id.
  std::optional<std::vector<std::string>> decode_table;

  /// Throws InvalidArgument when the size or table invariants do not hold.
  void validate() const;
  bool operator==(const Vocabulary&) const = default;
};

struct Document {
  std::uint64_t doc_id = 0;
  std::vector<TokenId> tokens;
  std::string source_label;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  std::uint64_t total_tokens = 0;

  bool operator==(const Corpus&) const = default;
};

struct DocumentRecord {
  std::string source_label;
  std::vector<TokenId> tokens;
};

/// Validates and numbers documents in input order.
/// Errors: TokenOutOfRange (with doc index and offset), EmptyDocument.
Corpus ingest_documents(std::span<const DocumentRecord> records, Vocabulary vocabulary);

/// Reads JSON-lines {"source_label": str, "tokens": [int, ...]} and ingests them.
Corpus ingest_jsonl(std::istream& in, Vocabulary vocabulary);

/// Concatenates the decode-table pieces of `tokens`. Errors: NoDecodeTable, TokenOutOfRange.
std::string decode(const Corpus& corpus, std::span<const TokenId> tokens);

struct Quote {
  std::uint64_t offset = 0;
  std::vector<TokenId> tokens;
};

/// Contiguous slice with length uniform in [min_len, min(max_len, |doc|)] and
/// offset uniform over the valid starts. Errors: DocTooShort, InvalidArgument.
Quote random_quote(const Document& doc, std::size_t min_len, std::size_t max_len, Rng& rng);

// On-disk corpus file set, all inside one directory.
struct CorpusFiles {
  std::filesystem::path dir;

  std::filesystem::path meta() const { return dir / "meta.json"; }
  std::filesystem::path tokens() const { return dir / "tokens.bin"; }
  std::filesystem::path docs() const { return dir / "docs.bin"; }
  std::filesystem::path labels() const { return dir / "labels.tsv"; }
  std::filesystem::path vocab() const { return dir / "vocab.tsv"; }
  std::filesystem::path suffix_array() const { return dir / "sa.bin"; }
};

inline constexpr int kCorpusFormatVersion = 1;

/// Writes meta.json, tokens.bin, docs.bin, labels.tsv and (with a decode
/// table) vocab.tsv. Output bytes depend only on the corpus contents.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Errors: Io, FormatVersionMismatch, ChecksumMismatch, CorpusCorrupt.
Corpus load_corpus(const std::filesystem::path& dir);

/// Documents joined by kSentinel, with a trailing kSentinel, plus the word
/// offset at which each document starts.
std::pair<std::vector<TokenId>, std::vector<std::uint64_t>> flatten(const Corpus& corpus);

/// Reads a vocab.tsv decode table ("<id>\t<piece>" per line, ids 0..n-1, pieces
/// backslash-escaped). Errors: Io, CorpusCorrupt.
std::vector<std::string> read_vocab_tsv(const std::filesystem::path& path);

/// CRC32C of the given byte blocks processed in order, as 8 lowercase hex digits.
std::string crc32c_hex(std::span<const std::span<const std::byte>> blocks);

}  // namespace plexitrace
