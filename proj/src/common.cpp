#include "plexitrace/error.hpp"
#include "plexitrace/types.hpp"

#include <limits>

namespace plexitrace {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::kEmptyDocument: return "EmptyDocument";
    case ErrorCode::kNoDecodeTable: return "NoDecodeTable";
    case ErrorCode::kDocTooShort: return "DocTooShort";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kCorpusCorrupt: return "CorpusCorrupt";
    case ErrorCode::kEmptyQuery: return "EmptyQuery";
    case ErrorCode::kQueryTooLong: return "QueryTooLong";
    case ErrorCode::kInvalidOccurrence: return "InvalidOccurrence";
    case ErrorCode::kNonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kContextTooLong: return "ContextTooLong";
    case ErrorCode::kProbOutOfRange: return "ProbOutOfRange";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kSpanTooShort: return "SpanTooShort";
    case ErrorCode::kInconsistentStreams: return "InconsistentStreams";
    case ErrorCode::kInsufficientDocuments: return "InsufficientDocuments";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  // Rejection sampling on the top of the range removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
  return mix64(mix64(base) ^ fnv1a64(key));
}

}  // namespace plexitrace
