#ifndef MTOP_NN_TAPE_H_
#define MTOP_NN_TAPE_H_

// Reverse-mode automatic differentiation over dense row-major matrices.
// A Tape records one forward pass; backward() pushes gradients into the
// Parameters that took part in it.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mtop::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Group -1 is always trainable; groups >= 0 can be frozen.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  int64_t adam_steps = 0;
  int group = -1;
};

class ParameterSet {
 public:
  Parameter& add(const std::string& name, int rows, int cols, int group);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  size_t size() const { return params_.size(); }
  size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One Adam update of every parameter for which trainable(p) holds. Frozen
// parameters and their moments are left untouched.
void adam_step(ParameterSet& params, const AdamOptions& options,
               const std::function<bool(const Parameter&)>& trainable);

// Scales all gradients so that their global L2 norm is at most max_norm.
double clip_grad_norm(ParameterSet& params, double max_norm);

using Var = int;

class Tape {
 public:
  // With record == false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Var input(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(Var v) const;
  Matrix& grad(Var v);

  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // row (1 x c) broadcast over a's rows
  Var scale(Var a, double s);
  Var relu(Var a);
  // Per-row normalization with gain and bias rows.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  // Row softmax; with causal set, entry (i, j) is masked for j > i.
  Var softmax_rows(Var a, bool causal);
  Var slice_cols(Var a, int start, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, const std::vector<int>& rows);
  Var dropout(Var a, double p, std::mt19937_64& rng);
  // Sum over rows t of -log sum_{k in gold[t]} softmax(logits[t])_k.
  Var marginal_nll(Var logits, const std::vector<std::vector<int>>& gold);

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix value);
  void on_backward(Var v, std::function<void()> fn);

  bool record_;
  std::vector<Node> nodes_;
};

// Row-wise log-softmax of a single row vector.
std::vector<double> log_softmax(const Eigen::Ref<const Matrix>& row);

}  // namespace mtop::nn

#endif  // MTOP_NN_TAPE_H_
