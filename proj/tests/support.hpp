#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "grs/bm25.hpp"
#include "grs/catalog.hpp"

namespace grs::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("grs_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& contents) const {
    const auto p = path_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << contents;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct DocSpec {
  std::string title;
  std::map<std::string, std::string> attributes;
};

inline Catalog make_catalog_specs(const std::vector<DocSpec>& specs,
                            const std::vector<std::string>& perspectives = default_perspectives()) {
  std::vector<Document> docs;
  for (const auto& s : specs) docs.push_back(make_document(s.title, s.attributes, Scenario::kOther, perspectives));
  return Catalog(std::move(docs), perspectives);
}

inline Catalog make_catalog(const std::vector<std::string>& titles,
                            const std::vector<std::string>& perspectives = default_perspectives()) {
  std::vector<DocSpec> specs;
  for (const auto& t : titles) specs.push_back({t, {}});
  return make_catalog_specs(specs, perspectives);
}

// Brute-force BM25 used as an oracle: scores every document directly from
// its token list with no index, then sorts by (score desc, doc_id asc).
struct OracleHit {
  std::size_t doc;
  double score;
};

inline std::vector<OracleHit> oracle_bm25(const std::vector<std::vector<std::string>>& docs,
                                          const std::vector<std::string>& ids,
                                          const std::vector<std::string>& query, std::size_t k,
                                          double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double total = 0;
  for (const auto& d : docs) total += static_cast<double>(d.size());
  const double avgdl = total / n;
  std::vector<OracleHit> hits;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double score = 0;
    for (const auto& q : query) {
      double tf = 0;
      for (const auto& t : docs[i]) tf += t == q;
      if (tf == 0) continue;
      double df = 0;
      for (const auto& d : docs) {
        for (const auto& t : d) {
          if (t == q) {
            ++df;
            break;
          }
        }
      }
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double dl = static_cast<double>(docs[i].size());
      const double norm = avgdl > 0 ? dl / avgdl : 0.0;
      score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * norm));
    }
    if (score > 0) hits.push_back({i, score});
  }
  std::sort(hits.begin(), hits.end(), [&](const OracleHit& a, const OracleHit& c) {
    if (a.score != c.score) return a.score > c.score;
    return ids[a.doc] < ids[c.doc];
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

/// Candidates retained by every perspective, in candidate order.
inline std::vector<std::size_t> oracle_intersection(const std::vector<std::size_t>& candidates,
                                                    const std::vector<std::set<std::size_t>>& retained) {
  std::vector<std::size_t> out;
  for (auto c : candidates) {
    bool all = true;
    for (const auto& r : retained) all = all && r.contains(c);
    if (all) out.push_back(c);
  }
  return out;
}

}  // namespace grs::testing
