#include "plexitrace/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "plexitrace/error.hpp"

namespace plexitrace {

namespace {

std::string history_key(std::span<const TokenId> h) {
  std::string key(h.size_bytes(), '\0');
  if (!h.empty()) std::memcpy(key.data(), h.data(), h.size_bytes());
  return key;
}

}  // namespace

std::unique_ptr<ToyNgramLm> train_toy_lm(const Corpus& corpus, const ToyLmOptions& options) {
  if (options.order < 1) throw Error(ErrorCode::kInvalidArgument, "n-gram order must be >= 1");
  if (!(options.smoothing >= 0.0) || !std::isfinite(options.smoothing)) {
    throw Error(ErrorCode::kInvalidArgument, "smoothing must be a finite value >= 0");
  }
  if (corpus.total_tokens == 0) throw Error(ErrorCode::kEmptyCorpus, "toy LM needs at least one token");
  if (options.eos_token && *options.eos_token >= corpus.vocabulary.vocab_size) {
    throw Error(ErrorCode::kInvalidArgument, "eos token outside the vocabulary");
  }

  auto lm = std::unique_ptr<ToyNgramLm>(new ToyNgramLm());
  lm->options_ = options;
  lm->vocab_size_ = corpus.vocabulary.vocab_size;
  lm->tokenizer_id_ = corpus.vocabulary.tokenizer_id;
  lm->tables_.resize(options.order);

  std::vector<TokenId> seq;
  for (const auto& doc : corpus.documents) {
    seq.assign(doc.tokens.begin(), doc.tokens.end());
    if (options.eos_token) seq.push_back(*options.eos_token);
    for (std::size_t j = 0; j < seq.size(); ++j) {
      const std::size_t max_h = std::min<std::size_t>(options.order - 1, j);
      for (std::size_t h = 0; h <= max_h; ++h) {
        auto& cont = lm->tables_[h][history_key(std::span<const TokenId>(seq).subspan(j - h, h))];
        ++cont.total;
        ++cont.counts[seq[j]];
      }
    }
  }
  return lm;
}

std::string ToyNgramLm::id() const {
  std::ostringstream ss;
  ss << "toy-ngram:order=" << options_.order << ",lambda=" << options_.smoothing;
  if (!tokenizer_id_.empty()) ss << ",tokenizer=" << tokenizer_id_;
  return ss.str();
}

const ToyNgramLm::Continuations* ToyNgramLm::lookup(std::span<const TokenId> context, std::size_t* used) const {
  const std::size_t max_h = std::min<std::size_t>(options_.order - 1, context.size());
  for (std::size_t h = max_h + 1; h-- > 0;) {
    const auto it = tables_[h].find(history_key(context.subspan(context.size() - h)));
    if (it != tables_[h].end() && it->second.total > 0) {
      if (used) *used = h;
      return &it->second;
    }
  }
  if (used) *used = 0;
  return nullptr;
}

std::size_t ToyNgramLm::history_length(std::span<const TokenId> context) const {
  std::size_t used = 0;
  lookup(context, &used);
  return used;
}

std::vector<double> ToyNgramLm::probabilities(std::span<const TokenId> context) const {
  for (TokenId t : context) {
    if (t >= vocab_size_) throw Error(ErrorCode::kTokenOutOfRange, "context token " + std::to_string(t));
  }
  const Continuations* cont = lookup(context, nullptr);
  const double lambda = options_.smoothing;
  const double total = static_cast<double>(cont ? cont->total : 0);
  const double denom = total + lambda * vocab_size_;
  std::vector<double> p(vocab_size_, denom > 0 ? lambda / denom : 1.0 / vocab_size_);
  if (cont && denom > 0) {
    for (const auto& [tok, c] : cont->counts) p[tok] = (static_cast<double>(c) + lambda) / denom;
  }
  return p;
}

NextTokenDistribution ToyNgramLm::next_distribution(std::span<const TokenId> context) const {
  const auto p = probabilities(context);
  NextTokenDistribution d;
  d.logits.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d.logits[i] = p[i] > 0 ? std::log(p[i]) : kLogZero;
  return d;
}

std::vector<double> ToyNgramLm::score(std::span<const TokenId> tokens, std::span<const TokenId> context) const {
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<double> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t >= vocab_size_) throw Error(ErrorCode::kTokenOutOfRange, "scored token " + std::to_string(t));
    out.push_back(std::max(probabilities(ctx)[t], kMinScoreProb));
    ctx.push_back(t);
  }
  return out;
}

}  // namespace plexitrace
