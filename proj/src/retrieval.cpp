#include "templar/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace templar {

std::vector<std::string> analyze(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

Bm25Index::Bm25Index(const std::vector<Document>& documents, double k1, double b)
    : k1_(k1), b_(b) {
    if (documents.empty()) throw std::invalid_argument("Bm25Index: empty corpus");
    if (k1 <= 0.0) throw std::invalid_argument("Bm25Index: k1 must be positive");
    if (b < 0.0 || b > 1.0) throw std::invalid_argument("Bm25Index: b must be in [0, 1]");

    long total_length = 0;
    for (const auto& doc : documents) {
        if (doc_lengths_.count(doc.doc_id)) {
            throw std::invalid_argument("Bm25Index: duplicate doc_id " + doc.doc_id);
        }
        const std::vector<std::string> terms = analyze(doc.title + " " + doc.body);
        std::map<std::string, int> freq;
        for (const auto& term : terms) ++freq[term];
        for (const auto& [term, tf] : freq) {
            postings_[term].emplace_back(doc.doc_id, tf);
        }
        doc_lengths_[doc.doc_id] = static_cast<long>(terms.size());
        total_length += static_cast<long>(terms.size());
    }
    doc_count_ = static_cast<int>(documents.size());
    avg_doc_length_ = static_cast<double>(total_length) / doc_count_;
}

double Bm25Index::idf(const std::string& term) const {
    const auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    return std::log(1.0 + (doc_count_ - df + 0.5) / (df + 0.5));
}

double Bm25Index::term_score(int tf, long doc_length, double idf_value) const {
    const double norm = k1_ * (1.0 - b_ + b_ * doc_length / avg_doc_length_);
    return idf_value * tf * (k1_ + 1.0) / (tf + norm);
}

double Bm25Index::score(const std::vector<std::string>& query_terms,
                        const std::string& doc_id) const {
    const auto len_it = doc_lengths_.find(doc_id);
    if (len_it == doc_lengths_.end()) {
        throw std::invalid_argument("Bm25Index: unknown doc_id " + doc_id);
    }
    double total = 0.0;
    for (const auto& term : query_terms) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        int tf = 0;
        for (const auto& [id, freq] : it->second) {
            if (id == doc_id) {
                tf = freq;
                break;
            }
        }
        if (tf == 0) continue;
        total += term_score(tf, len_it->second, idf(term));
    }
    return total;
}

RetrievalResult Bm25Index::retrieve(const std::string& query, int k) const {
    if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
    const std::vector<std::string> terms = analyze(query);

    std::unordered_map<std::string, double> scores;
    std::set<std::string> seen_terms;
    for (const auto& term : terms) {
        if (!seen_terms.insert(term).second) continue;  // repeated query terms score once per tf sum
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double idf_value = idf(term);
        // Repetition inside the query adds the term's contribution once per
        // occurrence, matching the per-term sum of the closed form.
        const long multiplicity = std::count(terms.begin(), terms.end(), term);
        for (const auto& [doc_id, tf] : it->second) {
            scores[doc_id] +=
                multiplicity * term_score(tf, doc_lengths_.at(doc_id), idf_value);
        }
    }

    RetrievalResult result;
    result.reserve(doc_lengths_.size());
    for (const auto& [doc_id, length] : doc_lengths_) {
        const auto it = scores.find(doc_id);
        result.push_back({doc_id, it == scores.end() ? 0.0 : it->second});
    }
    std::sort(result.begin(), result.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (static_cast<size_t>(k) < result.size()) result.resize(static_cast<size_t>(k));
    return result;
}

double recall_at_k(const RetrievalResult& result, const std::vector<std::string>& gold_doc_ids) {
    if (gold_doc_ids.empty()) throw std::invalid_argument("recall_at_k: empty gold set");
    const std::set<std::string> gold(gold_doc_ids.begin(), gold_doc_ids.end());
    int hits = 0;
    for (const auto& scored : result) {
        if (gold.count(scored.doc_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

}  // namespace templar
