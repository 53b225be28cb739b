#pragma once

// Generative retriever backends. A backend maps a query to a ranked list of
// generated DocID strings, which are then resolved against the catalog.

#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "grs/bm25.hpp"
#include "grs/catalog.hpp"
#include "grs/detail/rng.hpp"
#include "grs/error.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/prompt.hpp"
#include "grs/text.hpp"

namespace grs {

/// Where a generated slot came from. Only the stub fills this in.
enum class SlotOrigin { kModel, kNearMiss, kOffTopic };

struct GenerationResult {
  std::string query;
  std::vector<std::string> raw_outputs;  // after duplicate removal
  std::vector<DocIndex> resolved;        // subsequence of raw_outputs
  std::vector<std::string> invalid;      // raw strings that resolve to nothing
  std::size_t duplicates_dropped = 0;
  std::vector<SlotOrigin> origins;       // stub only; parallel to raw_outputs

  std::size_t perturbed() const {
    std::size_t n = 0;
    for (auto o : origins) n += o != SlotOrigin::kModel;
    return n;
  }
};

/// Splits generated text into DocID strings (newline, ';' or '；'),
/// trimmed, deduplicated keep-first.
inline std::vector<std::string> parse_generation(std::string_view text) {
  return text::split_items(text, /*dedup=*/true);
}

/// Resolves `raw` in order, keeping at most `limit` entries. Strings whose
/// normalized form repeats an earlier one are dropped and counted.
inline GenerationResult collect_generation(std::string query, const std::vector<std::string>& raw,
                                           const Catalog& catalog, std::size_t limit,
                                           const std::vector<SlotOrigin>* origins = nullptr) {
  GenerationResult out;
  out.query = std::move(query);
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < raw.size() && out.raw_outputs.size() < limit; ++i) {
    const std::string id = text::normalize_docid(raw[i]);
    if (!seen.insert(id).second) {
      ++out.duplicates_dropped;
      continue;
    }
    out.raw_outputs.push_back(raw[i]);
    if (origins) out.origins.push_back((*origins)[i]);
    auto r = resolve(raw[i], catalog);
    if (auto* idx = std::get_if<DocIndex>(&r)) {
      out.resolved.push_back(*idx);
    } else {
      out.invalid.push_back(raw[i]);
    }
  }
  return out;
}

class GenerativeRetriever {
 public:
  virtual ~GenerativeRetriever() = default;
  /// Safe to call concurrently.
  virtual GenerationResult generate(const std::string& query, std::size_t k) const = 0;
};

struct StubConfig {
  double hallucination_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t k = 5;

  void validate() const {
    if (!(hallucination_rate >= 0.0 && hallucination_rate <= 1.0)) {
      throw Error(ErrorCode::kConfig, "hallucination_rate must be in [0, 1]");
    }
    if (k == 0) throw Error(ErrorCode::kConfig, "stub k must be positive");
  }
};

/// Test double for a fine-tuned generator: BM25 top-k, where each slot is
/// independently replaced with probability `hallucination_rate` by either
/// a near-miss string absent from the catalog or a catalog document from
/// outside the BM25 top-3k. Randomness is keyed on (seed, query, slot).
class StubRetriever final : public GenerativeRetriever {
 public:
  StubRetriever(const Catalog& catalog, const InvertedIndex& index, Bm25Params params, StubConfig cfg)
      : catalog_(&catalog), index_(&index), params_(params), cfg_(cfg) {
    cfg_.validate();
  }

  GenerationResult generate(const std::string& query, std::size_t k) const override {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "generate: k must be positive");
    const auto top = retrieve(*index_, params_, query, k);
    const auto wide = retrieve(*index_, params_, query, 3 * k);

    std::vector<bool> excluded(catalog_->size(), false);
    for (const auto& hit : wide) excluded[hit.doc] = true;

    std::vector<std::string> raw;
    std::vector<SlotOrigin> origins;
    std::set<std::string> emitted;
    for (std::size_t slot = 0; slot < top.size(); ++slot) {
      const Document& doc = (*catalog_)[top[slot].doc];
      detail::Rng rng(detail::derive_seed(cfg_.seed, query, slot));
      if (!(rng.uniform() < cfg_.hallucination_rate)) {
        raw.push_back(doc.title);
        origins.push_back(SlotOrigin::kModel);
        emitted.insert(doc.doc_id);
        continue;
      }
      const bool off_topic = rng.uniform() < 0.5;
      std::vector<DocIndex> pool;
      if (off_topic) {
        for (DocIndex d = 0; d < catalog_->size(); ++d) {
          if (!excluded[d]) pool.push_back(d);
        }
      }
      if (!pool.empty()) {
        const DocIndex pick = pool[rng.below(pool.size())];
        excluded[pick] = true;
        raw.push_back((*catalog_)[pick].title);
        origins.push_back(SlotOrigin::kOffTopic);
        emitted.insert((*catalog_)[pick].doc_id);
      } else {
        std::string miss = near_miss(doc.title, rng, emitted);
        emitted.insert(text::normalize_docid(miss));
        raw.push_back(std::move(miss));
        origins.push_back(SlotOrigin::kNearMiss);
      }
    }
    return collect_generation(query, raw, *catalog_, raw.size(), &origins);
  }

  const StubConfig& config() const noexcept { return cfg_; }

 private:
  // Drops, swaps or doubles one codepoint; falls back to a numbered suffix
  // until the string names no catalog document and was not emitted before.
  std::string near_miss(const std::string& title, detail::Rng& rng,
                        const std::set<std::string>& emitted) const {
    std::u32string cps = text::decode_utf8(title);
    const std::size_t n = cps.size();
    const std::size_t pos = static_cast<std::size_t>(rng.below(n));
    switch (rng.below(3)) {
      case 0:
        if (n > 1) cps.erase(pos, 1);
        break;
      case 1:
        if (n > 1) std::swap(cps[pos], cps[pos + 1 < n ? pos + 1 : pos - 1]);
        break;
      default:
        cps.insert(pos, 1, cps[pos]);
        break;
    }
    const auto usable = [&](const std::string& s) {
      const std::string id = text::normalize_docid(s);
      return !id.empty() && !catalog_->find(id) && !emitted.contains(id);
    };
    std::string candidate = text::encode_utf8(cps);
    for (int suffix = 1; !usable(candidate); ++suffix) {
      candidate = text::encode_utf8(cps) + "-" + std::to_string(suffix);
    }
    return candidate;
  }

  const Catalog* catalog_;
  const InvertedIndex* index_;
  Bm25Params params_;
  StubConfig cfg_;
};

/// Calls a fine-tuned generator behind a chat endpoint.
class RemoteRetriever final : public GenerativeRetriever {
 public:
  RemoteRetriever(llm::ChatClient& client, llm::ModelEndpoint endpoint, const Catalog& catalog,
                  llm::PromptTemplate prompt = llm::default_template(llm::PromptId::kGeneration))
      : client_(&client), endpoint_(std::move(endpoint)), catalog_(&catalog),
        prompt_(std::move(prompt)) {}

  GenerationResult generate(const std::string& query, std::size_t k) const override {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "generate: k must be positive");
    const std::string prompt = llm::render_prompt(prompt_, {{"q", query}, {"k", std::to_string(k)}});
    std::string reply;
    try {
      reply = client_->complete(endpoint_, prompt);
    } catch (const Error& e) {
      // A blank generation is an empty result, not a failure.
      if (e.code() != ErrorCode::kEmptyResponse) throw;
    }
    return collect_generation(query, text::split_items(reply, /*dedup=*/false), *catalog_, k);
  }

 private:
  llm::ChatClient* client_;
  llm::ModelEndpoint endpoint_;
  const Catalog* catalog_;
  llm::PromptTemplate prompt_;
};

}  // namespace grs
