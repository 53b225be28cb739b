#pragma once

// Okapi BM25 over an in-memory inverted index.
//
//   score(q, d) = sum_{t in q} idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
//   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//
// Query terms are summed with multiplicity. The +1 inside the log keeps idf
// non-negative on small corpora.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "grs/catalog.hpp"
#include "grs/error.hpp"
#include "grs/text.hpp"

namespace grs {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  void validate() const {
    if (!(k1 >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "bm25 k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "bm25 b must be in [0, 1]");
  }
};

enum class FieldSpec { kTitle, kTitleAndAttributes };

struct Posting {
  DocIndex doc = 0;
  std::uint32_t tf = 0;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct ScoredDoc {
  DocIndex doc = 0;
  double score = 0.0;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;

  /// Indexes pre-tokenized documents. `doc_ids` supply the tie-break key.
  InvertedIndex(const std::vector<std::vector<std::string>>& docs, std::vector<std::string> doc_ids)
      : doc_ids_(std::move(doc_ids)) {
    if (docs.size() != doc_ids_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "token lists and doc ids differ in length");
    }
    doc_len_.reserve(docs.size());
    std::uint64_t total = 0;
    for (DocIndex d = 0; d < docs.size(); ++d) {
      std::map<std::string_view, std::uint32_t> counts;
      for (const auto& t : docs[d]) ++counts[t];
      for (const auto& [term, tf] : counts) {
        postings_[std::string(term)].push_back({d, tf});
      }
      doc_len_.push_back(static_cast<std::uint32_t>(docs[d].size()));
      total += docs[d].size();
    }
    avgdl_ = docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs.size());
  }

  std::size_t num_docs() const noexcept { return doc_len_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  const std::vector<std::uint32_t>& doc_len() const noexcept { return doc_len_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::unordered_map<std::string, std::vector<Posting>>& postings() const noexcept {
    return postings_;
  }

  std::size_t df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  const std::vector<Posting>* find(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
  }

  /// Writes the versioned JSON Lines dump: a header line, then one line per
  /// term in byte order.
  void dump(std::ostream& out) const {
    nlohmann::json header = {{"format", "grs-bm25-index"}, {"version", 1},
                             {"num_docs", num_docs()},     {"avgdl", avgdl_},
                             {"doc_len", doc_len_},        {"doc_ids", doc_ids_}};
    out << header.dump() << '\n';
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, _] : postings_) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
    for (const std::string* term : terms) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& p : postings_.at(*term)) list.push_back({p.doc, p.tf});
      out << nlohmann::json{{"term", *term}, {"postings", list}}.dump() << '\n';
    }
  }

  static InvertedIndex load(std::istream& in) {
    InvertedIndex idx;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "index dump is empty");
    try {
      const auto header = nlohmann::json::parse(line);
      if (header.at("format") != "grs-bm25-index" || header.at("version") != 1) {
        throw Error(ErrorCode::kParse, "unsupported index format");
      }
      idx.doc_len_ = header.at("doc_len").get<std::vector<std::uint32_t>>();
      idx.doc_ids_ = header.at("doc_ids").get<std::vector<std::string>>();
      idx.avgdl_ = header.at("avgdl").get<double>();
      if (idx.doc_len_.size() != header.at("num_docs").get<std::size_t>() ||
          idx.doc_ids_.size() != idx.doc_len_.size()) {
        throw Error(ErrorCode::kParse, "index header sizes disagree");
      }
      while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        auto& list = idx.postings_[rec.at("term").get<std::string>()];
        for (const auto& p : rec.at("postings")) {
          const auto doc = p.at(0).get<DocIndex>();
          if (doc >= idx.doc_len_.size()) throw Error(ErrorCode::kParse, "posting doc out of range");
          list.push_back({doc, p.at(1).get<std::uint32_t>()});
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("bad index dump: ") + e.what());
    }
    return idx;
  }

 private:
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_len_;
  std::vector<std::string> doc_ids_;
  double avgdl_ = 0.0;
};

/// Text indexed for a document under the given field spec.
inline std::string indexed_text(const Document& doc, FieldSpec fields) {
  std::string out = doc.title;
  if (fields == FieldSpec::kTitleAndAttributes) {
    for (const auto& [_, value] : doc.attributes) {
      if (value == kUnknownValue) continue;
      out += ' ';
      out += value;
    }
  }
  return out;
}

inline InvertedIndex build_index(const Catalog& catalog, FieldSpec fields = FieldSpec::kTitle) {
  if (catalog.empty()) throw Error(ErrorCode::kEmptyCatalog, "cannot index an empty catalog");
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> ids;
  docs.reserve(catalog.size());
  ids.reserve(catalog.size());
  for (const auto& doc : catalog.documents()) {
    docs.push_back(text::tokenize(indexed_text(doc, fields)));
    ids.push_back(doc.doc_id);
  }
  return InvertedIndex(docs, std::move(ids));
}

inline double bm25_idf(std::size_t num_docs, std::size_t df) {
  const double n = static_cast<double>(num_docs);
  const double f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

/// Contribution of one query-term occurrence to one document.
inline double bm25_term_weight(double idf, double tf, double doc_len, double avgdl,
                               const Bm25Params& params) {
  const double norm = avgdl > 0.0 ? doc_len / avgdl : 0.0;
  return idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
}

inline double bm25_score(const InvertedIndex& index, const Bm25Params& params,
                         const std::vector<std::string>& query_terms, DocIndex doc) {
  if (doc >= index.num_docs()) {
    throw Error(ErrorCode::kIndexOutOfRange, "document index " + std::to_string(doc) + " out of range");
  }
  double score = 0.0;
  for (const auto& term : query_terms) {
    const auto* list = index.find(term);
    if (!list) continue;
    auto it = std::lower_bound(list->begin(), list->end(), doc,
                               [](const Posting& p, DocIndex d) { return p.doc < d; });
    if (it == list->end() || it->doc != doc) continue;
    score += bm25_term_weight(bm25_idf(index.num_docs(), list->size()), it->tf,
                              index.doc_len()[doc], index.avgdl(), params);
  }
  return score;
}

/// Top-k documents with positive score, by score descending then DocID
/// ascending.
inline std::vector<ScoredDoc> retrieve(const InvertedIndex& index, const Bm25Params& params,
                                       std::string_view query, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "retrieve: k must be positive");
  const auto terms = text::tokenize(query);

  // Term-at-a-time accumulation in query order; each document sees its
  // contributions in the same order as bm25_score would add them.
  std::vector<double> acc(index.num_docs(), 0.0);
  std::vector<bool> touched(index.num_docs(), false);
  for (const auto& term : terms) {
    const auto* list = index.find(term);
    if (!list) continue;
    const double idf = bm25_idf(index.num_docs(), list->size());
    for (const auto& p : *list) {
      acc[p.doc] += bm25_term_weight(idf, p.tf, index.doc_len()[p.doc], index.avgdl(), params);
      touched[p.doc] = true;
    }
  }

  std::vector<ScoredDoc> hits;
  for (DocIndex d = 0; d < acc.size(); ++d) {
    if (touched[d] && acc[d] > 0.0) hits.push_back({d, acc[d]});
  }
  const auto& ids = index.doc_ids();
  const auto better = [&ids](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return ids[a.doc] < ids[b.doc];
  };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), better);
  }
  return hits;
}

/// Retrieval model bound to one index and parameter set.
class Bm25Retriever {
 public:
  Bm25Retriever(const InvertedIndex& index, Bm25Params params) : index_(&index), params_(params) {}

  std::vector<ScoredDoc> retrieve(std::string_view query, std::size_t k) const {
    return grs::retrieve(*index_, params_, query, k);
  }

  const InvertedIndex& index() const noexcept { return *index_; }
  const Bm25Params& params() const noexcept { return params_; }

 private:
  const InvertedIndex* index_;
  Bm25Params params_;
};

template <class RM>
concept RetrievalModel = requires(const RM& rm, std::string_view q, std::size_t k) {
  { rm.retrieve(q, k) } -> std::same_as<std::vector<ScoredDoc>>;
};

}  // namespace grs
