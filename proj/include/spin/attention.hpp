#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spin/autodiff.hpp"

namespace spin {

// Message sets of one attention block in CSR form. Set s is queried by row
// query_row[s] and attends key rows key_row[key_begin[s] .. key_begin[s+1]).
struct AttentionPlan {
  std::vector<std::size_t> query_row;
  std::vector<std::size_t> key_begin{0};
  std::vector<std::size_t> key_row;

  std::size_t set_count() const { return query_row.size(); }
  std::size_t pair_count() const { return key_row.size(); }
  std::size_t set_size(std::size_t s) const { return key_begin[s + 1] - key_begin[s]; }

  void add_set(std::size_t query, const std::vector<std::size_t>& keys);
  // 1 for non-empty sets, 0 for empty ones.
  std::vector<double> nonempty_indicator() const;
};

// Instrumentation of attend(): query-key pairs evaluated and how far each
// set's normalized scores drift from summing to one.
struct AttentionStats {
  std::uint64_t pairs = 0;
  std::uint64_t sets = 0;
  std::uint64_t empty_sets = 0;
  double max_normalization_error = 0.0;

  void merge(const AttentionStats& other);
};

inline constexpr double kLogitClamp = 60.0;

// Additive attention over message sets, for messages produced by a
// one-hidden-layer perceptron r = W2 relu(W1 [key, query] + b1) + b2 scored
// by w. With keys = key_features * W1[key part], queries = query_features *
// W1[query part] + b1, score = W2 w and offset = b2 . w, each pair has hidden
// activation z = relu(keys[k] + queries[q]) and logit clamp(score . z + offset);
// the output row of set s is sum_k softmax(logits)_k z_k (zeros for an empty
// set). Since the scores sum to one, W2 out + b2 equals the weighted sum of
// full messages.
//
// keys [K, m], queries [Q, m], score [m], offset [1]; returns [sets, m].
Value attend(const Value& keys, const Value& queries, const Value& score, const Value& offset,
             const AttentionPlan& plan, AttentionStats* stats = nullptr);

}  // namespace spin
