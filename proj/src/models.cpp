#include "fairfed/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fairfed/error.hpp"
#include "fairfed/parallel.hpp"

namespace fairfed {
namespace {

// Rows are reduced in fixed-size chunks whose partials are combined in
// ascending chunk order, so sums do not depend on the thread count.
constexpr int kChunk = 64;

struct RowList {
  const int* idx = nullptr;  // nullptr means the identity 0..n-1
  int n = 0;
  int at(int i) const { return idx == nullptr ? i : idx[i]; }
};

void check_inputs(const char* op, const ModelSpec& spec, std::span<const double> params,
                  const Matrix& features, std::span<const int> labels, const RowList& rows) {
  spec.validate();
  const int p = param_size(spec);
  if (static_cast<int>(params.size()) != p) {
    throw Error(std::string(op) + ": params size " + std::to_string(params.size()) +
                " does not match model (expected " + std::to_string(p) + ")");
  }
  for (int i = 0; i < p; ++i) {
    if (!std::isfinite(params[i])) {
      throw Error(std::string(op) + ": non-finite parameter at index " + std::to_string(i));
    }
  }
  if (features.cols != spec.feature_dim) {
    throw Error(std::string(op) + ": feature dim " + std::to_string(features.cols) +
                " does not match model (expected " + std::to_string(spec.feature_dim) + ")");
  }
  if (static_cast<int>(labels.size()) != features.rows) {
    throw Error(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                std::to_string(features.rows) + " rows");
  }
  if (rows.n == 0) throw Error(std::string(op) + ": empty sample set");
  for (int i = 0; i < rows.n; ++i) {
    const int r = rows.at(i);
    if (r < 0 || r >= features.rows) {
      throw Error(std::string(op) + ": row index " + std::to_string(r) + " out of range [0," +
                  std::to_string(features.rows) + ")");
    }
    const int y = labels[r];
    if (spec.task == Task::Softmax) {
      if (y < 0 || y >= spec.num_classes) {
        throw Error(std::string(op) + ": label " + std::to_string(y) + " at row " +
                    std::to_string(r) + " out of range [0," + std::to_string(spec.num_classes) +
                    ")");
      }
    } else if (y != -1 && y != 1) {
      throw Error(std::string(op) + ": label " + std::to_string(y) + " at row " +
                  std::to_string(r) + " must be -1 or +1");
    }
  }
}

double svm_score(std::span<const double> params, int d, const double* x) {
  double s = params[d];
  for (int j = 0; j < d; ++j) s += params[j] * x[j];
  return s;
}

// Per-sample cross-entropy; returns NaN on non-finite inputs so chunk
// reducers can report the offending row.
double softmax_sample_loss(std::span<const double> params, int c, int d, const double* x, int y,
                           double* scores) {
  softmax_scores(params, c, d, x, scores);
  double m = scores[0];
  for (int k = 1; k < c; ++k) {
    if (scores[k] > m) m = scores[k];
  }
  double sumexp = 0.0;
  for (int k = 0; k < c; ++k) sumexp += std::exp(scores[k] - m);
  return m + std::log(sumexp) - scores[y];
}

double hinge_sample_loss(double margin) { return margin >= 1.0 ? 0.0 : 1.0 - margin; }

double ridge_term(const ModelSpec& spec, std::span<const double> params) {
  if (spec.task != Task::Svm || spec.ridge == 0.0) return 0.0;
  double sq = 0.0;
  for (int j = 0; j < spec.feature_dim; ++j) sq += params[j] * params[j];
  return 0.5 * spec.ridge * sq;
}

// Runs fn(chunk_index, begin, end) over fixed chunks of the row list,
// parallel across chunks, and rethrows the first error in chunk order.
template <typename F>
void for_chunks(int n, int num_chunks, std::vector<std::string>& errors, F&& fn) {
  errors.assign(num_chunks, std::string());
  exec::parallel_for(num_chunks, [&](int ci) {
    const int begin = ci * kChunk;
    const int end = std::min(n, begin + kChunk);
    try {
      fn(ci, begin, end);
    } catch (const std::exception& e) {
      errors[ci] = e.what();
    }
  });
  for (int ci = 0; ci < num_chunks; ++ci) {
    if (!errors[ci].empty()) throw Error(errors[ci]);
  }
}

double loss_impl(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
                 std::span<const int> labels, const RowList& rows) {
  check_inputs("loss", spec, params, features, labels, rows);
  const int n = rows.n;
  const int num_chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(num_chunks, 0.0);
  std::vector<std::string> errors;
  for_chunks(n, num_chunks, errors, [&](int ci, int begin, int end) {
    std::vector<double> scores(spec.task == Task::Softmax ? spec.num_classes : 0);
    double sum = 0.0;
    for (int i = begin; i < end; ++i) {
      const int r = rows.at(i);
      const double* x = features.row(r);
      double li;
      if (spec.task == Task::Softmax) {
        li = softmax_sample_loss(params, spec.num_classes, spec.feature_dim, x, labels[r],
                                 scores.data());
      } else {
        const double margin = labels[r] * svm_score(params, spec.feature_dim, x);
        li = hinge_sample_loss(margin);
        if (!std::isfinite(margin)) li = margin;
      }
      if (!std::isfinite(li)) {
        throw Error("loss: non-finite value at row " + std::to_string(r) +
                    " (non-finite features?)");
      }
      sum += li;
    }
    partial[ci] = sum;
  });
  double total = 0.0;
  for (int ci = 0; ci < num_chunks; ++ci) total += partial[ci];
  return total / n + ridge_term(spec, params);
}

// Adds the data-term gradient of one sample into out (not yet divided by n).
void softmax_sample_grad(std::span<const double> params, int c, int d, const double* x, int y,
                         double* scores, double* out) {
  softmax_scores(params, c, d, x, scores);
  double m = scores[0];
  for (int k = 1; k < c; ++k) {
    if (scores[k] > m) m = scores[k];
  }
  double sumexp = 0.0;
  for (int k = 0; k < c; ++k) {
    scores[k] = std::exp(scores[k] - m);
    sumexp += scores[k];
  }
  for (int k = 0; k < c; ++k) {
    const double coef = scores[k] / sumexp - (k == y ? 1.0 : 0.0);
    double* wrow = out + k * d;
    for (int j = 0; j < d; ++j) wrow[j] += coef * x[j];
    out[c * d + k] += coef;
  }
}

std::vector<double> gradient_impl(const ModelSpec& spec, std::span<const double> params,
                                  const Matrix& features, std::span<const int> labels,
                                  const RowList& rows) {
  check_inputs("gradient", spec, params, features, labels, rows);
  const int n = rows.n;
  const int p = param_size(spec);
  const int d = spec.feature_dim;
  const int num_chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(num_chunks);
  std::vector<std::string> errors;
  for_chunks(n, num_chunks, errors, [&](int ci, int begin, int end) {
    std::vector<double>& acc = partial[ci];
    acc.assign(p, 0.0);
    std::vector<double> scores(spec.task == Task::Softmax ? spec.num_classes : 0);
    for (int i = begin; i < end; ++i) {
      const int r = rows.at(i);
      const double* x = features.row(r);
      if (spec.task == Task::Softmax) {
        softmax_sample_grad(params, spec.num_classes, d, x, labels[r], scores.data(), acc.data());
      } else {
        const double y = labels[r];
        const double margin = y * svm_score(params, d, x);
        if (!std::isfinite(margin)) {
          throw Error("gradient: non-finite value at row " + std::to_string(r) +
                      " (non-finite features?)");
        }
        // Subgradient of the hinge is 0 exactly at margin == 1.
        if (margin < 1.0) {
          for (int j = 0; j < d; ++j) acc[j] -= y * x[j];
          acc[d] -= y;
        }
      }
    }
  });
  std::vector<double> out(p, 0.0);
  for (int ci = 0; ci < num_chunks; ++ci) {
    for (int j = 0; j < p; ++j) out[j] += partial[ci][j];
  }
  for (int j = 0; j < p; ++j) out[j] /= n;
  if (spec.task == Task::Svm && spec.ridge != 0.0) {
    for (int j = 0; j < d; ++j) out[j] += spec.ridge * params[j];
  }
  return out;
}

double accuracy_impl(const ModelSpec& spec, std::span<const double> params,
                     const Matrix& features, std::span<const int> labels, const RowList& rows) {
  check_inputs("accuracy", spec, params, features, labels, rows);
  const int n = rows.n;
  const int num_chunks = (n + kChunk - 1) / kChunk;
  std::vector<long long> partial(num_chunks, 0);
  std::vector<std::string> errors;
  for_chunks(n, num_chunks, errors, [&](int ci, int begin, int end) {
    std::vector<double> scores(spec.task == Task::Softmax ? spec.num_classes : 1);
    long long correct = 0;
    for (int i = begin; i < end; ++i) {
      const int r = rows.at(i);
      const double* x = features.row(r);
      if (spec.task == Task::Softmax) {
        softmax_scores(params, spec.num_classes, spec.feature_dim, x, scores.data());
        for (int k = 0; k < spec.num_classes; ++k) {
          if (!std::isfinite(scores[k])) {
            throw Error("accuracy: non-finite score at row " + std::to_string(r));
          }
        }
        if (argmax_class(scores.data(), spec.num_classes) == labels[r]) ++correct;
      } else {
        const double s = svm_score(params, spec.feature_dim, x);
        if (!std::isfinite(s)) {
          throw Error("accuracy: non-finite score at row " + std::to_string(r));
        }
        const int pred = s >= 0.0 ? 1 : -1;
        if (pred == labels[r]) ++correct;
      }
    }
    partial[ci] = correct;
  });
  long long total = 0;
  for (int ci = 0; ci < num_chunks; ++ci) total += partial[ci];
  return static_cast<double>(total) / n;
}

}  // namespace

void ModelSpec::validate() const {
  if (feature_dim < 1) {
    throw Error("model: feature_dim must be >= 1, got " + std::to_string(feature_dim));
  }
  if (task == Task::Softmax && num_classes < 2) {
    throw Error("model: softmax needs num_classes >= 2, got " + std::to_string(num_classes));
  }
  if (task == Task::Svm && ridge < 0.0) {
    throw Error("model: ridge must be >= 0, got " + std::to_string(ridge));
  }
  if (task == Task::Svm && !std::isfinite(ridge)) throw Error("model: ridge must be finite");
}

int param_size(const ModelSpec& spec) {
  spec.validate();
  if (spec.task == Task::Softmax) return spec.num_classes * spec.feature_dim + spec.num_classes;
  return spec.feature_dim + 1;
}

void softmax_scores(std::span<const double> params, int num_classes, int feature_dim,
                    const double* x, double* scores_out) {
  for (int k = 0; k < num_classes; ++k) {
    const double* wrow = params.data() + k * feature_dim;
    double s = params[num_classes * feature_dim + k];
    for (int j = 0; j < feature_dim; ++j) s += wrow[j] * x[j];
    scores_out[k] = s;
  }
}

int argmax_class(const double* scores, int num_classes) {
  int best = 0;
  for (int k = 1; k < num_classes; ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels) {
  return loss_impl(spec, params, features, labels, RowList{nullptr, features.rows});
}

double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels, std::span<const int> rows) {
  return loss_impl(spec, params, features, labels,
                   RowList{rows.data(), static_cast<int>(rows.size())});
}

std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels) {
  return gradient_impl(spec, params, features, labels, RowList{nullptr, features.rows});
}

std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels,
                             std::span<const int> rows) {
  return gradient_impl(spec, params, features, labels,
                       RowList{rows.data(), static_cast<int>(rows.size())});
}

double accuracy(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
                std::span<const int> labels) {
  return accuracy_impl(spec, params, features, labels, RowList{nullptr, features.rows});
}

double accuracy(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
                std::span<const int> labels, std::span<const int> rows) {
  return accuracy_impl(spec, params, features, labels,
                       RowList{rows.data(), static_cast<int>(rows.size())});
}

std::vector<double> finite_diff_gradient(const ModelSpec& spec, std::span<const double> params,
                                         const Matrix& features, std::span<const int> labels,
                                         double h) {
  if (!(h > 0.0)) throw Error("finite_diff_gradient: h must be > 0");
  const int p = param_size(spec);
  std::vector<double> w(params.begin(), params.end());
  std::vector<double> out(p, 0.0);
  for (int i = 0; i < p; ++i) {
    const double wi = w[i];
    w[i] = wi + h;
    const double up = loss(spec, w, features, labels);
    w[i] = wi - h;
    const double down = loss(spec, w, features, labels);
    w[i] = wi;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

namespace reference {

double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels) {
  spec.validate();
  const int n = features.rows;
  if (n == 0) throw Error("loss: empty sample set");
  double sum = 0.0;
  std::vector<double> scores(spec.task == Task::Softmax ? spec.num_classes : 0);
  for (int r = 0; r < n; ++r) {
    const double* x = features.row(r);
    if (spec.task == Task::Softmax) {
      sum += softmax_sample_loss(params, spec.num_classes, spec.feature_dim, x, labels[r],
                                 scores.data());
    } else {
      sum += hinge_sample_loss(labels[r] * svm_score(params, spec.feature_dim, x));
    }
  }
  return sum / n + ridge_term(spec, params);
}

std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels) {
  spec.validate();
  const int n = features.rows;
  if (n == 0) throw Error("gradient: empty sample set");
  const int p = param_size(spec);
  const int d = spec.feature_dim;
  std::vector<double> out(p, 0.0);
  std::vector<double> scores(spec.task == Task::Softmax ? spec.num_classes : 0);
  for (int r = 0; r < n; ++r) {
    const double* x = features.row(r);
    if (spec.task == Task::Softmax) {
      softmax_sample_grad(params, spec.num_classes, d, x, labels[r], scores.data(), out.data());
    } else {
      const double y = labels[r];
      if (y * svm_score(params, d, x) < 1.0) {
        for (int j = 0; j < d; ++j) out[j] -= y * x[j];
        out[d] -= y;
      }
    }
  }
  for (int j = 0; j < p; ++j) out[j] /= n;
  if (spec.task == Task::Svm && spec.ridge != 0.0) {
    for (int j = 0; j < d; ++j) out[j] += spec.ridge * params[j];
  }
  return out;
}

}  // namespace reference

}  // namespace fairfed
