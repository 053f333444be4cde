#pragma once
// Okapi BM25 inverted index with top-k retrieval and recall measurement.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "templar/corpus.hpp"

namespace templar {

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

// Ranked list, scores non-increasing, ties broken by ascending doc_id.
using RetrievalResult = std::vector<ScoredDoc>;

// Lowercases and splits on non-alphanumeric runs. No stemming, no stopwords.
std::vector<std::string> analyze(std::string_view text);

// Immutable after construction; concurrent retrieves are safe.
class Bm25Index {
public:
    // Indexes title + body of each document. Throws on an empty corpus.
    explicit Bm25Index(const std::vector<Document>& documents, double k1 = 1.2, double b = 0.75);

    // Okapi BM25 for one document:
    //   sum over query terms of idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen))
    //   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    // Terms absent from the document contribute 0. Throws on unknown doc_id.
    double score(const std::vector<std::string>& query_terms, const std::string& doc_id) const;

    // Top-k documents for the raw query string (analyzed like documents).
    // k may exceed the corpus size, in which case every document is returned.
    RetrievalResult retrieve(const std::string& query, int k) const;

    int doc_count() const { return doc_count_; }
    double avg_doc_length() const { return avg_doc_length_; }
    double k1() const { return k1_; }
    double b() const { return b_; }
    const std::map<std::string, std::vector<std::pair<std::string, int>>>& postings() const {
        return postings_;
    }
    const std::map<std::string, long>& doc_lengths() const { return doc_lengths_; }

private:
    double idf(const std::string& term) const;
    double term_score(int tf, long doc_length, double idf_value) const;

    std::map<std::string, std::vector<std::pair<std::string, int>>> postings_;
    std::map<std::string, long> doc_lengths_;
    double avg_doc_length_ = 0.0;
    int doc_count_ = 0;
    double k1_;
    double b_;
};

// |retrieved ∩ gold| / |gold|. Throws on an empty gold set.
double recall_at_k(const RetrievalResult& result, const std::vector<std::string>& gold_doc_ids);

}  // namespace templar
