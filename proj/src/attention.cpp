#include "spin/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spin/errors.hpp"

namespace spin {

void AttentionPlan::add_set(std::size_t query, const std::vector<std::size_t>& keys) {
  query_row.push_back(query);
  key_row.insert(key_row.end(), keys.begin(), keys.end());
  key_begin.push_back(key_row.size());
}

std::vector<double> AttentionPlan::nonempty_indicator() const {
  std::vector<double> out(set_count());
  for (std::size_t s = 0; s < set_count(); ++s) out[s] = set_size(s) > 0 ? 1.0 : 0.0;
  return out;
}

void AttentionStats::merge(const AttentionStats& other) {
  pairs += other.pairs;
  sets += other.sets;
  empty_sets += other.empty_sets;
  max_normalization_error = std::max(max_normalization_error, other.max_normalization_error);
}

namespace {

inline void hidden_activation(const double* key, const double* query, std::size_t m, double* z) {
  for (std::size_t c = 0; c < m; ++c) {
    const double a = key[c] + query[c];
    z[c] = a > 0.0 ? a : 0.0;
  }
}

inline double dot(const double* a, const double* b, std::size_t m) {
  double s = 0.0;
  for (std::size_t c = 0; c < m; ++c) s += a[c] * b[c];
  return s;
}

}  // namespace

Value attend(const Value& keys, const Value& queries, const Value& score, const Value& offset,
             const AttentionPlan& plan, AttentionStats* stats) {
  Tape& tape = keys.tape();
  const Tensor& K = keys.data();
  const Tensor& Q = queries.data();
  const std::size_t m = K.cols();
  if (Q.cols() != m || score.data().size() != m || offset.data().size() != 1) {
    throw DimensionError("attend: keys " + K.shape().str() + ", queries " + Q.shape().str() +
                         ", score " + score.shape().str() + ", offset " + offset.shape().str());
  }
  for (std::size_t s = 0; s < plan.set_count(); ++s) {
    if (plan.query_row[s] >= Q.rows()) throw DimensionError("attend: query row out of range");
  }
  for (std::size_t k : plan.key_row) {
    if (k >= K.rows()) throw DimensionError("attend: key row out of range");
  }

  const double* u = score.data().data();
  const double bias = offset.data()[0];
  Tensor out(Shape{plan.set_count(), m});
  std::vector<double> alpha(plan.pair_count());
  std::vector<std::uint8_t> clamped(plan.pair_count(), 0);
  std::vector<double> z;  // hidden activations of the current set, one row per key
  AttentionStats local;

  for (std::size_t s = 0; s < plan.set_count(); ++s) {
    const std::size_t b = plan.key_begin[s];
    const std::size_t e = plan.key_begin[s + 1];
    ++local.sets;
    if (b == e) {
      ++local.empty_sets;
      continue;
    }
    const double* q = Q.data() + plan.query_row[s] * m;
    z.resize((e - b) * m);
    double max_logit = -kLogitClamp;
    for (std::size_t p = b; p < e; ++p) {
      double* zp = z.data() + (p - b) * m;
      hidden_activation(K.data() + plan.key_row[p] * m, q, m, zp);
      double logit = dot(u, zp, m) + bias;
      if (logit > kLogitClamp || logit < -kLogitClamp) {
        logit = std::clamp(logit, -kLogitClamp, kLogitClamp);
        clamped[p] = 1;
      }
      alpha[p] = logit;
      max_logit = std::max(max_logit, logit);
    }
    double norm = 0.0;
    for (std::size_t p = b; p < e; ++p) {
      alpha[p] = std::exp(alpha[p] - max_logit);
      norm += alpha[p];
    }
    double total = 0.0;
    double* o = out.data() + s * m;
    for (std::size_t p = b; p < e; ++p) {
      alpha[p] /= norm;
      total += alpha[p];
      const double* zp = z.data() + (p - b) * m;
      for (std::size_t c = 0; c < m; ++c) o[c] += alpha[p] * zp[c];
    }
    local.pairs += e - b;
    local.max_normalization_error =
        std::max(local.max_normalization_error, std::fabs(total - 1.0));
  }
  if (stats != nullptr) stats->merge(local);

  const Value parents[] = {keys, queries, score, offset};
  return tape.record(
      std::move(out), parents,
      [keys, queries, score, offset, plan, alpha = std::move(alpha),
       clamped = std::move(clamped), m](Tape& t, const Tensor& g) {
        const Tensor& K = keys.data();
        const Tensor& Q = queries.data();
        const double* u = score.data().data();
        Tensor* gK = keys.requires_grad() ? &t.grad_of(keys) : nullptr;
        Tensor* gQ = queries.requires_grad() ? &t.grad_of(queries) : nullptr;
        Tensor* gu = score.requires_grad() ? &t.grad_of(score) : nullptr;
        Tensor* gc = offset.requires_grad() ? &t.grad_of(offset) : nullptr;
        std::vector<double> z;
        std::vector<double> gz;  // go . z per key
        std::vector<double> dz(m);
        for (std::size_t s = 0; s < plan.set_count(); ++s) {
          const std::size_t b = plan.key_begin[s];
          const std::size_t e = plan.key_begin[s + 1];
          if (b == e) continue;
          const std::size_t qrow = plan.query_row[s];
          const double* q = Q.data() + qrow * m;
          const double* go = g.data() + s * m;
          z.resize((e - b) * m);
          gz.resize(e - b);
          // Softmax backward needs sum_j alpha_j (go . z_j).
          double weighted = 0.0;
          for (std::size_t p = b; p < e; ++p) {
            double* zp = z.data() + (p - b) * m;
            hidden_activation(K.data() + plan.key_row[p] * m, q, m, zp);
            gz[p - b] = dot(go, zp, m);
            weighted += alpha[p] * gz[p - b];
          }
          double* dq = gQ != nullptr ? gQ->data() + qrow * m : nullptr;
          for (std::size_t p = b; p < e; ++p) {
            const double* zp = z.data() + (p - b) * m;
            const double dlogit = clamped[p] ? 0.0 : alpha[p] * (gz[p - b] - weighted);
            // The rectifier passes gradient exactly where z > 0.
            for (std::size_t c = 0; c < m; ++c) {
              dz[c] = zp[c] > 0.0 ? alpha[p] * go[c] + dlogit * u[c] : 0.0;
            }
            if (gu != nullptr && dlogit != 0.0) {
              for (std::size_t c = 0; c < m; ++c) (*gu)[c] += dlogit * zp[c];
            }
            if (gc != nullptr) (*gc)[0] += dlogit;
            if (gK != nullptr) {
              double* dk = gK->data() + plan.key_row[p] * m;
              for (std::size_t c = 0; c < m; ++c) dk[c] += dz[c];
            }
            if (dq != nullptr) {
              for (std::size_t c = 0; c < m; ++c) dq[c] += dz[c];
            }
          }
        }
      });
}

}  // namespace spin
