#include "mtop/nn/tape.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mtop::nn {

Parameter& ParameterSet::add(const std::string& name, int rows, int cols, int group) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->adam_m = Matrix::Zero(rows, cols);
  p->adam_v = Matrix::Zero(rows, cols);
  p->group = group;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterSet::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("no parameter " + name);
  return *p;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("no parameter " + name);
  return *p;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

size_t ParameterSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void adam_step(ParameterSet& params, const AdamOptions& options,
               const std::function<bool(const Parameter&)>& trainable) {
  for (Parameter* p : params.all()) {
    if (!trainable(*p)) continue;
    ++p->adam_steps;
    const double t = static_cast<double>(p->adam_steps);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    p->adam_m = options.beta1 * p->adam_m + (1.0 - options.beta1) * p->grad;
    p->adam_v = options.beta2 * p->adam_v +
                (1.0 - options.beta2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= options.learning_rate * (p->adam_m.array() / c1) /
                        ((p->adam_v.array() / c2).sqrt() + options.epsilon);
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params.all()) sq += p->grad.squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double s = max_norm / norm;
    for (Parameter* p : params.all()) p->grad *= s;
  }
  return norm;
}

Var Tape::push(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr});
  return static_cast<Var>(nodes_.size() - 1);
}

void Tape::on_backward(Var v, std::function<void()> fn) {
  if (record_) nodes_[static_cast<size_t>(v)].backward = std::move(fn);
}

Var Tape::input(Matrix value) { return push(std::move(value)); }

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{Matrix(), Matrix(), &p, nullptr});
  return static_cast<Var>(nodes_.size() - 1);
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v)];
  return n.param != nullptr ? n.param->value : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<size_t>(v)];
  if (n.param != nullptr) return n.param->grad;
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  Var out = push(value(a) * value(b));
  on_backward(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(a).noalias() += g * value(b).transpose();
    grad(b).noalias() += value(a).transpose() * g;
  });
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  Var out = push(value(a) * value(b).transpose());
  on_backward(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(a).noalias() += g * value(b);
    grad(b).noalias() += g.transpose() * value(a);
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(value(a) + value(b));
  on_backward(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(a) += g;
    grad(b) += g;
  });
  return out;
}

Var Tape::add_row(Var a, Var row) {
  Matrix v = value(a);
  v.rowwise() += value(row).row(0);
  Var out = push(std::move(v));
  on_backward(out, [this, a, row, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(a) += g;
    grad(row) += g.colwise().sum();
  });
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(value(a) * s);
  on_backward(out, [this, a, s, out] {
    grad(a) += nodes_[static_cast<size_t>(out)].grad * s;
  });
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(value(a).cwiseMax(0.0));
  on_backward(out, [this, a, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(a).array() += g.array() * (value(a).array() > 0.0).cast<double>();
  });
  return out;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& in = value(x);
  const Eigen::Index rows = in.rows(), cols = in.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean = in.row(r).mean();
    double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  Var out = push(std::move(y));
  on_backward(out, [this, x, gain, bias, out, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    grad(gain) += (g.array() * xhat.array()).colwise().sum().matrix();
    grad(bias) += g.colwise().sum();
    Matrix dxhat = g;
    dxhat.array().rowwise() *= value(gain).row(0).array();
    Matrix& gx = grad(x);
    const double n = static_cast<double>(xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      double mean_d = dxhat.row(r).sum() / n;
      double mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
      gx.row(r).array() +=
          inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
    }
  });
  return out;
}

Var Tape::softmax_rows(Var a, bool causal) {
  const Matrix& in = value(a);
  Matrix y = Matrix::Zero(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    Eigen::Index width = causal ? std::min<Eigen::Index>(r + 1, in.cols()) : in.cols();
    auto row = in.row(r).head(width);
    double mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    y.row(r).head(width) = e / e.sum();
  }
  Var out = push(std::move(y));
  on_backward(out, [this, a, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    const Matrix& s = nodes_[static_cast<size_t>(out)].value;
    Eigen::VectorXd dot = (g.array() * s.array()).rowwise().sum();
    Matrix d = s.array() * (g.array().colwise() - dot.array());
    grad(a) += d;
  });
  return out;
}

Var Tape::slice_cols(Var a, int start, int count) {
  Var out = push(value(a).middleCols(start, count));
  on_backward(out, [this, a, start, count, out] {
    grad(a).middleCols(start, count) += nodes_[static_cast<size_t>(out)].grad;
  });
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  Eigen::Index rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) cols += value(p).cols();
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var out = push(std::move(y));
  on_backward(out, [this, parts, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    Eigen::Index at2 = 0;
    for (Var p : parts) {
      Eigen::Index c = value(p).cols();
      grad(p) += g.middleCols(at2, c);
      at2 += c;
    }
  });
  return out;
}

Var Tape::gather_rows(Var a, const std::vector<int>& rows) {
  const Matrix& src = value(a);
  Matrix y(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (size_t r = 0; r < rows.size(); ++r) y.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
  Var out = push(std::move(y));
  on_backward(out, [this, a, rows, out] {
    const Matrix& g = nodes_[static_cast<size_t>(out)].grad;
    Matrix& ga = grad(a);
    for (size_t r = 0; r < rows.size(); ++r) ga.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
  });
  return out;
}

Var Tape::dropout(Var a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  const Matrix& in = value(a);
  Matrix mask(in.rows(), in.cols());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = uniform(rng) < p ? 0.0 : keep;
  }
  Var out = push(in.cwiseProduct(mask));
  on_backward(out, [this, a, out, mask = std::move(mask)] {
    grad(a) += nodes_[static_cast<size_t>(out)].grad.cwiseProduct(mask);
  });
  return out;
}

Var Tape::marginal_nll(Var logits, const std::vector<std::vector<int>>& gold) {
  const Matrix& z = value(logits);
  Matrix probs(z.rows(), z.cols());
  Matrix target = Matrix::Zero(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp();
    double total = probs.row(r).sum();
    probs.row(r) /= total;
    double gold_mass = 0.0;
    for (int k : gold[static_cast<size_t>(r)]) gold_mass += probs(r, k);
    for (int k : gold[static_cast<size_t>(r)]) target(r, k) = probs(r, k) / gold_mass;
    // -log(gold_mass) computed in log space for stability.
    double gold_sum_exp = 0.0;
    for (int k : gold[static_cast<size_t>(r)]) gold_sum_exp += std::exp(z(r, k) - mx);
    loss += std::log(total) - std::log(gold_sum_exp);
  }
  Matrix y(1, 1);
  y(0, 0) = loss;
  Var out = push(std::move(y));
  on_backward(out, [this, logits, out, probs = std::move(probs), target = std::move(target)] {
    double g = nodes_[static_cast<size_t>(out)].grad(0, 0);
    grad(logits) += g * (probs - target);
  });
  return out;
}

void Tape::backward(Var loss) {
  grad(loss).setOnes();
  for (Var v = loss; v >= 0; --v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (n.backward && n.grad.size() != 0) n.backward();
  }
}

std::vector<double> log_softmax(const Eigen::Ref<const Matrix>& row) {
  double mx = row.maxCoeff();
  double lse = mx + std::log((row.array() - mx).exp().sum());
  std::vector<double> out(static_cast<size_t>(row.cols()));
  for (Eigen::Index k = 0; k < row.cols(); ++k) out[static_cast<size_t>(k)] = row(0, k) - lse;
  return out;
}

}  // namespace mtop::nn
