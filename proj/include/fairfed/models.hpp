#pragma once

#include <span>
#include <vector>

#include "fairfed/matrix.hpp"

namespace fairfed {

enum class Task { Softmax, Svm };

/// Linear model family. Softmax is a multinomial classifier over
/// num_classes; Svm is a binary hinge-loss classifier with labels in
/// {-1,+1} and an optional L2 penalty on the weight block (bias free).
struct ModelSpec {
  Task task = Task::Softmax;
  int num_classes = 2;
  int feature_dim = 1;
  double ridge = 0.0;

  void validate() const;
};

/// Flat parameter length. Softmax: num_classes*feature_dim weights
/// (row-major) followed by num_classes biases. Svm: feature_dim weights
/// followed by one bias.
int param_size(const ModelSpec& spec);

/// Class scores W*x + b for the softmax layout. Also used by the synthetic
/// generator so that generated labels and accuracy() agree bit-for-bit.
void softmax_scores(std::span<const double> params, int num_classes, int feature_dim,
                    const double* x, double* scores_out);

/// Argmax with ties broken toward the smallest index.
int argmax_class(const double* scores, int num_classes);

/// Mean loss over the selected rows (all rows when `rows` is empty-ish
/// overloads are used). Softmax: cross-entropy with max-subtraction
/// log-sum-exp. Svm: mean hinge plus ridge/2*||w||^2.
double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels);
double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels, std::span<const int> rows);

/// Exact (sub)gradient of loss; the hinge subgradient at margin == 1 is 0.
std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels);
std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels,
                             std::span<const int> rows);

/// Fraction of correctly classified rows. Softmax predicts by argmax_class;
/// Svm predicts sign(w.x + b) with sign(0) = +1.
double accuracy(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
                std::span<const int> labels);
double accuracy(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
                std::span<const int> labels, std::span<const int> rows);

/// Central-difference gradient oracle: (loss(w+h e_i) - loss(w-h e_i)) / 2h.
std::vector<double> finite_diff_gradient(const ModelSpec& spec, std::span<const double> params,
                                         const Matrix& features, std::span<const int> labels,
                                         double h);

namespace reference {

/// Plain single-loop implementations, kept as the serial oracle for the
/// chunked kernels above and for the benchmark.
double loss(const ModelSpec& spec, std::span<const double> params, const Matrix& features,
            std::span<const int> labels);
std::vector<double> gradient(const ModelSpec& spec, std::span<const double> params,
                             const Matrix& features, std::span<const int> labels);

}  // namespace reference

}  // namespace fairfed
