#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "grs/error.hpp"
#include "grs/text.hpp"

namespace grs {

inline constexpr std::string_view kUnknownValue = "unknown";

enum class Scenario { kFund, kInsurance, kOther };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::kFund: return "fund";
    case Scenario::kInsurance: return "insurance";
    case Scenario::kOther: return "other";
  }
  return "other";
}

inline std::optional<Scenario> parse_scenario(std::string_view s) {
  if (s == "fund") return Scenario::kFund;
  if (s == "insurance") return Scenario::kInsurance;
  if (s == "other") return Scenario::kOther;
  return std::nullopt;
}

/// Perspectives used when a catalog file does not say otherwise.
inline std::vector<std::string> default_perspectives() {
  return {"company", "type", "duration", "risk"};
}

struct Document {
  std::string doc_id;
  std::string title;
  // Ordered by perspective name; every configured perspective is present.
  std::map<std::string, std::string> attributes;
  Scenario scenario = Scenario::kOther;

  const std::string& attribute(const std::string& perspective) const {
    static const std::string unknown(kUnknownValue);
    auto it = attributes.find(perspective);
    return it == attributes.end() ? unknown : it->second;
  }

  friend bool operator==(const Document&, const Document&) = default;
};

using DocIndex = std::size_t;

/// Immutable document set with DocID lookup. Document order is file order.
class Catalog {
 public:
  Catalog() = default;

  Catalog(std::vector<Document> documents, std::vector<std::string> perspectives)
      : documents_(std::move(documents)), perspectives_(std::move(perspectives)) {
    by_id_.reserve(documents_.size());
    for (DocIndex i = 0; i < documents_.size(); ++i) {
      auto [it, inserted] = by_id_.emplace(documents_[i].doc_id, i);
      if (!inserted) {
        throw Error(ErrorCode::kDuplicateDocId,
                    "duplicate DocID '" + documents_[i].doc_id + "'", documents_[i].doc_id);
      }
    }
  }

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const std::vector<std::string>& perspectives() const noexcept { return perspectives_; }
  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }
  const Document& operator[](DocIndex i) const { return documents_.at(i); }

  std::optional<DocIndex> find(std::string_view normalized_id) const {
    auto it = by_id_.find(std::string(normalized_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, DocIndex> by_id_;
  std::vector<std::string> perspectives_;
};

/// A generated string that names no catalog document.
struct Invalid {
  std::string raw;
  friend bool operator==(const Invalid&, const Invalid&) = default;
};

using Resolution = std::variant<DocIndex, Invalid>;

/// Exact match of the normalized string against the catalog's DocIDs.
inline Resolution resolve(std::string_view generated, const Catalog& catalog) {
  const std::string id = text::normalize_docid(generated);
  if (!id.empty()) {
    if (auto idx = catalog.find(id)) return *idx;
  }
  return Invalid{std::string(generated)};
}

/// Builds a document from one parsed catalog record. Missing perspective
/// attributes are filled with "unknown".
inline Document make_document(std::string_view title,
                              const std::map<std::string, std::string>& attributes,
                              Scenario scenario,
                              const std::vector<std::string>& perspectives) {
  Document doc;
  doc.title = std::string(title);
  doc.doc_id = text::normalize_docid(title);
  doc.scenario = scenario;
  for (const auto& p : perspectives) {
    auto it = attributes.find(p);
    std::string value = it == attributes.end() ? std::string() : text::trim_unicode(it->second);
    doc.attributes[p] = value.empty() ? std::string(kUnknownValue) : std::move(value);
  }
  return doc;
}

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "file not found: " + path, path);
  return in;
}

inline Error line_error(const std::string& path, std::size_t line_no, const std::string& what) {
  return Error(ErrorCode::kParse, path + ":" + std::to_string(line_no) + ": " + what,
               std::to_string(line_no));
}

}  // namespace detail

/// Parses catalog JSON Lines from a stream. Blank lines are skipped. Only
/// attributes named in `perspectives` are kept.
inline Catalog parse_catalog(std::istream& in, const std::vector<std::string>& perspectives,
                             const std::string& source = "<catalog>") {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw detail::line_error(source, line_no, e.what());
    }
    if (!rec.is_object()) throw detail::line_error(source, line_no, "record is not an object");
    auto title_it = rec.find("title");
    if (title_it == rec.end() || !title_it->is_string()) {
      throw detail::line_error(source, line_no, "missing string field 'title'");
    }
    const std::string title = title_it->get<std::string>();
    if (text::normalize_docid(title).empty()) {
      throw detail::line_error(source, line_no, "empty title");
    }
    std::map<std::string, std::string> attrs;
    if (auto a = rec.find("attributes"); a != rec.end() && !a->is_null()) {
      if (!a->is_object()) throw detail::line_error(source, line_no, "'attributes' is not an object");
      for (const auto& [key, value] : a->items()) {
        if (!value.is_string()) {
          throw detail::line_error(source, line_no, "attribute '" + key + "' is not a string");
        }
        attrs[key] = value.get<std::string>();
      }
    }
    Scenario scenario = Scenario::kOther;
    if (auto s = rec.find("scenario"); s != rec.end() && !s->is_null()) {
      std::optional<Scenario> parsed;
      if (s->is_string()) parsed = parse_scenario(s->get<std::string>());
      if (!parsed) throw detail::line_error(source, line_no, "unknown scenario");
      scenario = *parsed;
    }
    docs.push_back(make_document(title, attrs, scenario, perspectives));
  }
  if (docs.empty()) throw Error(ErrorCode::kEmptyCatalog, "catalog has no records: " + source, source);
  return Catalog(std::move(docs), perspectives);
}

inline Catalog load_catalog(const std::string& path,
                            const std::vector<std::string>& perspectives = default_perspectives()) {
  std::ifstream in = detail::open_input(path);
  return parse_catalog(in, perspectives, path);
}

struct QueryLogEntry {
  std::string query;
  std::uint64_t frequency = 1;
};

inline std::vector<QueryLogEntry> load_query_log(const std::string& path) {
  std::ifstream in = detail::open_input(path);
  std::vector<QueryLogEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      QueryLogEntry e;
      e.query = text::trim_unicode(rec.at("query").get<std::string>());
      if (e.query.empty()) throw detail::line_error(path, line_no, "empty query");
      if (auto f = rec.find("frequency"); f != rec.end()) {
        if (!f->is_number_integer() || f->get<std::int64_t>() < 0) {
          throw detail::line_error(path, line_no, "frequency must be a non-negative integer");
        }
        e.frequency = f->get<std::uint64_t>();
      }
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw detail::line_error(path, line_no, e.what());
    }
  }
  return entries;
}

}  // namespace grs
