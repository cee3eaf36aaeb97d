#include "plexitrace/corpus.hpp"

#include <bit>
#include <boost/crc.hpp>
#include <charconv>
#include <cstdio>
#include <istream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "io_util.hpp"
#include "plexitrace/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with memcpy");

namespace plexitrace {

namespace {

using Crc32c = boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true>;

std::span<const std::byte> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

std::string labels_tsv(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus.documents) {
    out += std::to_string(doc.doc_id);
    out += '\t';
    out += detail::escape_field(doc.source_label);
    out += '\n';
  }
  return out;
}

std::string vocab_tsv(const std::vector<std::string>& table) {
  std::string out;
  for (std::size_t id = 0; id < table.size(); ++id) {
    out += std::to_string(id);
    out += '\t';
    out += detail::escape_field(table[id]);
    out += '\n';
  }
  return out;
}

// Parses "<id>\t<field>" lines whose ids must run 0..n-1 in order.
std::vector<std::string> parse_indexed_tsv(std::string_view text, const std::string& what) {
  std::vector<std::string> fields;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorCode::kCorpusCorrupt, what + ": missing tab on line " + std::to_string(fields.size()));
    }
    std::uint64_t id = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + tab, id);
    if (ec != std::errc{} || ptr != line.data() + tab || id != fields.size()) {
      throw Error(ErrorCode::kCorpusCorrupt, what + ": bad id on line " + std::to_string(fields.size()));
    }
    fields.push_back(detail::unescape_field(line.substr(tab + 1)));
  }
  return fields;
}

}  // namespace

std::vector<std::string> read_vocab_tsv(const std::filesystem::path& path) {
  return parse_indexed_tsv(detail::read_file(path), path.filename().string());
}

void Vocabulary::validate() const {
  if (vocab_size < 2 || vocab_size >= kSentinel) {
    throw Error(ErrorCode::kInvalidArgument, "vocab_size must be in [2, 0xFFFFFFFF), got " + std::to_string(vocab_size));
  }
  if (decode_table && decode_table->size() != vocab_size) {
    throw Error(ErrorCode::kInvalidArgument, "decode_table has " + std::to_string(decode_table->size()) +
                                                 " entries, vocab_size is " + std::to_string(vocab_size));
  }
}

Corpus ingest_documents(std::span<const DocumentRecord> records, Vocabulary vocabulary) {
  vocabulary.validate();
  Corpus corpus;
  corpus.vocabulary = std::move(vocabulary);
  corpus.documents.reserve(records.size());
  for (std::size_t d = 0; d < records.size(); ++d) {
    const auto& rec = records[d];
    if (rec.tokens.empty()) {
      throw Error(ErrorCode::kEmptyDocument, "document " + std::to_string(d) + " has no tokens");
    }
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
      const TokenId t = rec.tokens[i];
      if (t >= corpus.vocabulary.vocab_size) {
        throw Error(ErrorCode::kTokenOutOfRange, "document " + std::to_string(d) + " offset " + std::to_string(i) +
                                                     ": token " + std::to_string(t) + " >= vocab_size " +
                                                     std::to_string(corpus.vocabulary.vocab_size));
      }
    }
    corpus.documents.push_back(Document{d, rec.tokens, rec.source_label});
    corpus.total_tokens += rec.tokens.size();
  }
  return corpus;
}

Corpus ingest_jsonl(std::istream& in, Vocabulary vocabulary) {
  std::vector<DocumentRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DocumentRecord rec;
      rec.source_label = j.value("source_label", std::string{});
      for (const auto& t : j.at("tokens")) {
        const auto v = t.get<std::int64_t>();
        if (v < 0 || v > static_cast<std::int64_t>(kSentinel)) {
          throw Error(ErrorCode::kTokenOutOfRange, "line " + std::to_string(lineno) + ": token " + std::to_string(v));
        }
        rec.tokens.push_back(static_cast<TokenId>(v));
      }
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ingest_documents(records, std::move(vocabulary));
}

std::string decode(const Corpus& corpus, std::span<const TokenId> tokens) {
  const auto& table = corpus.vocabulary.decode_table;
  if (!table) throw Error(ErrorCode::kNoDecodeTable, "corpus vocabulary has no decode table");
  std::string out;
  for (TokenId t : tokens) {
    if (t >= table->size()) throw Error(ErrorCode::kTokenOutOfRange, "cannot decode token " + std::to_string(t));
    out += (*table)[t];
  }
  return out;
}

Quote random_quote(const Document& doc, std::size_t min_len, std::size_t max_len, Rng& rng) {
  if (min_len == 0 || min_len > max_len) {
    throw Error(ErrorCode::kInvalidArgument, "quote length bounds must satisfy 0 < min_len <= max_len");
  }
  const std::size_t n = doc.tokens.size();
  if (n < min_len) {
    throw Error(ErrorCode::kDocTooShort, "document " + std::to_string(doc.doc_id) + " has " + std::to_string(n) +
                                             " tokens, quote needs " + std::to_string(min_len));
  }
  const std::size_t hi = std::min(max_len, n);
  const std::size_t len = min_len + uniform_below(rng, hi - min_len + 1);
  const std::size_t offset = uniform_below(rng, n - len + 1);
  Quote q;
  q.offset = offset;
  q.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                  doc.tokens.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return q;
}

std::pair<std::vector<TokenId>, std::vector<std::uint64_t>> flatten(const Corpus& corpus) {
  std::vector<TokenId> stream;
  std::vector<std::uint64_t> starts;
  stream.reserve(corpus.total_tokens + corpus.documents.size());
  starts.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    starts.push_back(stream.size());
    stream.insert(stream.end(), doc.tokens.begin(), doc.tokens.end());
    stream.push_back(kSentinel);
  }
  return {std::move(stream), std::move(starts)};
}

std::string crc32c_hex(std::span<const std::span<const std::byte>> blocks) {
  Crc32c crc;
  for (const auto& b : blocks) crc.process_bytes(b.data(), b.size());
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
  return buf;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  corpus.vocabulary.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  const CorpusFiles files{dir};
  const auto [stream, starts] = flatten(corpus);
  const std::string tokens_bytes{detail::bytes_of(std::span<const TokenId>(stream))};
  const std::string docs_bytes{detail::bytes_of(std::span<const std::uint64_t>(starts))};
  const std::string labels = labels_tsv(corpus);
  std::vector<std::span<const std::byte>> blocks{as_bytes(tokens_bytes), as_bytes(docs_bytes), as_bytes(labels)};
  std::string vocab;
  if (corpus.vocabulary.decode_table) {
    vocab = vocab_tsv(*corpus.vocabulary.decode_table);
    blocks.push_back(as_bytes(vocab));
  }

  nlohmann::ordered_json meta;
  meta["format_version"] = kCorpusFormatVersion;
  meta["vocab_size"] = corpus.vocabulary.vocab_size;
  meta["tokenizer_id"] = corpus.vocabulary.tokenizer_id;
  meta["doc_count"] = corpus.documents.size();
  meta["total_tokens"] = corpus.total_tokens;
  meta["checksum"] = crc32c_hex(blocks);

  detail::write_file(files.tokens(), tokens_bytes);
  detail::write_file(files.docs(), docs_bytes);
  detail::write_file(files.labels(), labels);
  if (corpus.vocabulary.decode_table) {
    detail::write_file(files.vocab(), vocab);
  } else if (std::filesystem::exists(files.vocab())) {
    std::filesystem::remove(files.vocab());
  }
  detail::write_file(files.meta(), meta.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const CorpusFiles files{dir};
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(files.meta()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorpusCorrupt, "meta.json: " + std::string(e.what()));
  }

  std::uint64_t doc_count = 0;
  std::uint64_t total_tokens = 0;
  std::string checksum;
  Vocabulary vocab;
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kCorpusFormatVersion) {
      throw Error(ErrorCode::kFormatVersionMismatch,
                  "format_version " + std::to_string(version) + ", expected " + std::to_string(kCorpusFormatVersion));
    }
    vocab.vocab_size = meta.at("vocab_size").get<std::uint32_t>();
    vocab.tokenizer_id = meta.at("tokenizer_id").get<std::string>();
    doc_count = meta.at("doc_count").get<std::uint64_t>();
    total_tokens = meta.at("total_tokens").get<std::uint64_t>();
    checksum = meta.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorpusCorrupt, "meta.json: " + std::string(e.what()));
  }

  const std::string tokens_bytes = detail::read_file(files.tokens());
  const std::string docs_bytes = detail::read_file(files.docs());
  const bool has_labels = std::filesystem::exists(files.labels());
  const bool has_vocab = std::filesystem::exists(files.vocab());
  const std::string labels = has_labels ? detail::read_file(files.labels()) : std::string{};
  const std::string vocab_text = has_vocab ? detail::read_file(files.vocab()) : std::string{};

  std::vector<std::span<const std::byte>> blocks{as_bytes(tokens_bytes), as_bytes(docs_bytes)};
  if (has_labels) blocks.push_back(as_bytes(labels));
  if (has_vocab) blocks.push_back(as_bytes(vocab_text));
  const std::string actual = crc32c_hex(blocks);
  if (actual != checksum) {
    throw Error(ErrorCode::kChecksumMismatch, dir.string() + ": stored " + checksum + ", computed " + actual);
  }

  if (tokens_bytes.size() % sizeof(TokenId) != 0 || docs_bytes.size() % sizeof(std::uint64_t) != 0) {
    throw Error(ErrorCode::kCorpusCorrupt, "binary file size is not a whole number of words");
  }
  const auto stream = detail::words_from_bytes<TokenId>(tokens_bytes);
  const auto starts = detail::words_from_bytes<std::uint64_t>(docs_bytes);
  if (starts.size() != doc_count || stream.size() != total_tokens + doc_count) {
    throw Error(ErrorCode::kCorpusCorrupt, "file sizes disagree with meta.json counts");
  }
  if (doc_count == 0) throw Error(ErrorCode::kCorpusCorrupt, "corpus has no documents");

  if (has_vocab) vocab.decode_table = parse_indexed_tsv(vocab_text, "vocab.tsv");
  try {
    vocab.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorpusCorrupt, e.what());
  }
  std::vector<std::string> label_fields;
  if (has_labels) {
    label_fields = parse_indexed_tsv(labels, "labels.tsv");
    if (label_fields.size() != doc_count) throw Error(ErrorCode::kCorpusCorrupt, "labels.tsv row count mismatch");
  }

  Corpus corpus;
  corpus.vocabulary = std::move(vocab);
  corpus.total_tokens = total_tokens;
  corpus.documents.reserve(doc_count);
  for (std::uint64_t d = 0; d < doc_count; ++d) {
    const std::uint64_t begin = starts[d];
    const std::uint64_t end = (d + 1 < doc_count ? starts[d + 1] : stream.size()) - 1;
    if (begin >= end || end >= stream.size() || stream[end] != kSentinel) {
      throw Error(ErrorCode::kCorpusCorrupt, "bad document boundaries at doc " + std::to_string(d));
    }
    Document doc;
    doc.doc_id = d;
    doc.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(begin), stream.begin() + static_cast<std::ptrdiff_t>(end));
    for (TokenId t : doc.tokens) {
      if (t >= corpus.vocabulary.vocab_size) {
        throw Error(ErrorCode::kCorpusCorrupt, "token out of range in doc " + std::to_string(d));
      }
    }
    if (has_labels) doc.source_label = std::move(label_fields[d]);
    corpus.documents.push_back(std::move(doc));
  }
  if (starts.front() != 0) throw Error(ErrorCode::kCorpusCorrupt, "first document must start at word 0");
  return corpus;
}

}  // namespace plexitrace
