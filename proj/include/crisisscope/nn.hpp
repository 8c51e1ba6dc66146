#pragma once

// Minimal dense/LSTM building blocks with manual backprop and Adam.
// Activations are column-major batches: one column per example.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "crisisscope/error.hpp"

namespace crisisscope::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Trainable tensor with its gradient and Adam moments.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }

  void zero_grad() { grad.setZero(); }

  nlohmann::json to_json() const {
    std::vector<double> flat(static_cast<std::size_t>(value.size()));
    Eigen::Map<Matrix>(flat.data(), value.rows(), value.cols()) = value;
    return {{"rows", value.rows()}, {"cols", value.cols()}, {"data", flat}};
  }

  void load_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (rows != value.rows() || cols != value.cols()) {
      throw ValidationError("checkpoint tensor shape does not match model configuration");
    }
    const auto flat = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
      throw ValidationError("checkpoint tensor has wrong element count");
    }
    value = Eigen::Map<const Matrix>(flat.data(), rows, cols);
  }
};

inline void glorot_uniform(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

enum class Activation { Linear, Sigmoid, Relu, Tanh };

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw ValidationError("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix activate(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::Linear: return z;
    case Activation::Sigmoid: return z.unaryExpr([](double x) { return sigmoid(x); });
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Tanh: return z.array().tanh().matrix();
  }
  return z;
}

// Derivative expressed through the activation output.
inline Matrix activation_grad(const Matrix& out, const Matrix& d_out, Activation a) {
  switch (a) {
    case Activation::Linear: return d_out;
    case Activation::Sigmoid: return d_out.cwiseProduct((out.array() * (1.0 - out.array())).matrix());
    case Activation::Relu: return d_out.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
    case Activation::Tanh: return d_out.cwiseProduct((1.0 - out.array().square()).matrix());
  }
  return d_out;
}

/// Fully connected layer with optional inverted dropout on its output.
class Dense {
 public:
  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, Activation act, double dropout = 0.0)
      : act_(act), dropout_(dropout) {
    w_.resize(out, in);
    b_.resize(out, 1);
  }

  void init(Rng& rng) {
    glorot_uniform(w_.value, rng);
    b_.value.setZero();
  }

  Eigen::Index in_dim() const { return w_.value.cols(); }
  Eigen::Index out_dim() const { return w_.value.rows(); }
  Activation activation() const { return act_; }
  double dropout() const { return dropout_; }

  Matrix forward(const Matrix& x, bool training, Rng* rng) {
    x_ = x;
    out_ = activate((w_.value * x).colwise() + b_.value.col(0), act_);
    if (training && dropout_ > 0.0) {
      const double keep = 1.0 - dropout_;
      std::bernoulli_distribution coin(keep);
      mask_.resize(out_.rows(), out_.cols());
      for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = coin(*rng) ? 1.0 / keep : 0.0;
      return out_.cwiseProduct(mask_);
    }
    mask_.resize(0, 0);
    return out_;
  }

  /// Inference-only pass: no caching, no dropout.
  Matrix apply(const Matrix& x) const {
    return activate((w_.value * x).colwise() + b_.value.col(0), act_);
  }

  /// Accumulates parameter gradients; returns gradient w.r.t. the input.
  Matrix backward(const Matrix& d_y) {
    Matrix d_out = mask_.size() > 0 ? Matrix(d_y.cwiseProduct(mask_)) : d_y;
    const Matrix dz = activation_grad(out_, d_out, act_);
    w_.grad += dz * x_.transpose();
    b_.grad += dz.rowwise().sum();
    return w_.value.transpose() * dz;
  }

  Param& weights() { return w_; }
  Param& bias() { return b_; }
  const Param& weights() const { return w_; }
  const Param& bias() const { return b_; }

 private:
  Param w_;
  Param b_;
  Activation act_ = Activation::Linear;
  double dropout_ = 0.0;
  Matrix x_;
  Matrix out_;
  Matrix mask_;
};

/// Single-layer LSTM returning the last hidden state. Gate order: input,
/// forget, cell candidate, output. Sequences are processed one example at
/// a time since lengths differ.
class Lstm {
 public:
  Lstm() = default;
  Lstm(Eigen::Index input_dim, Eigen::Index units) : units_(units) {
    wx_.resize(4 * units, input_dim);
    wh_.resize(4 * units, units);
    b_.resize(4 * units, 1);
  }

  void init(Rng& rng) {
    glorot_uniform(wx_.value, rng);
    glorot_uniform(wh_.value, rng);
    b_.value.setZero();
    b_.value.block(units_, 0, units_, 1).setOnes();  // forget-gate bias
  }

  Eigen::Index input_dim() const { return wx_.value.cols(); }
  Eigen::Index units() const { return units_; }

  /// Runs a batch of sequences; column b of the result is the final hidden
  /// state of sequence b. Each sequence is an input_dim x T matrix.
  Matrix forward(const std::vector<Matrix>& sequences) {
    cache_.clear();
    cache_.reserve(sequences.size());
    Matrix out(units_, static_cast<Eigen::Index>(sequences.size()));
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      cache_.push_back(run(sequences[s]));
      out.col(static_cast<Eigen::Index>(s)) = cache_.back().h.rightCols(1);
    }
    return out;
  }

  /// Inference-only: final hidden state of one sequence.
  Vector last_hidden(const Matrix& sequence) const { return run(sequence).h.rightCols(1); }

  void backward(const Matrix& d_h_last) {
    const Eigen::Index h = units_;
    for (std::size_t s = 0; s < cache_.size(); ++s) {
      const auto& c = cache_[s];
      const Eigen::Index steps = c.x.cols();
      Vector dh = d_h_last.col(static_cast<Eigen::Index>(s));
      Vector dc = Vector::Zero(h);
      for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto i = c.gates.col(t).segment(0, h);
        const auto f = c.gates.col(t).segment(h, h);
        const auto g = c.gates.col(t).segment(2 * h, h);
        const auto o = c.gates.col(t).segment(3 * h, h);
        const auto tc = c.tanh_c.col(t);
        const Vector c_prev = t > 0 ? Vector(c.c.col(t - 1)) : Vector::Zero(h);
        const Vector h_prev = t > 0 ? Vector(c.h.col(t - 1)) : Vector::Zero(h);

        const Vector d_o = dh.cwiseProduct(tc);
        dc += dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
        const Vector d_i = dc.cwiseProduct(g);
        const Vector d_f = dc.cwiseProduct(c_prev);
        const Vector d_g = dc.cwiseProduct(i);

        Vector dz(4 * h);
        dz.segment(0, h) = d_i.cwiseProduct((i.array() * (1.0 - i.array())).matrix());
        dz.segment(h, h) = d_f.cwiseProduct((f.array() * (1.0 - f.array())).matrix());
        dz.segment(2 * h, h) = d_g.cwiseProduct((1.0 - g.array().square()).matrix());
        dz.segment(3 * h, h) = d_o.cwiseProduct((o.array() * (1.0 - o.array())).matrix());

        wx_.grad.noalias() += dz * c.x.col(t).transpose();
        wh_.grad.noalias() += dz * h_prev.transpose();
        b_.grad += dz;
        dh = wh_.value.transpose() * dz;
        dc = dc.cwiseProduct(f);
      }
    }
  }

  Param& input_weights() { return wx_; }
  Param& recurrent_weights() { return wh_; }
  Param& bias() { return b_; }
  const Param& input_weights() const { return wx_; }
  const Param& recurrent_weights() const { return wh_; }
  const Param& bias() const { return b_; }

 private:
  struct Trace {
    Matrix x;       // input_dim x T
    Matrix gates;   // 4H x T, post-activation
    Matrix c;       // H x T
    Matrix tanh_c;  // H x T
    Matrix h;       // H x T
  };

  Trace run(const Matrix& x) const {
    if (x.rows() != input_dim() || x.cols() == 0) {
      throw ValidationError("lstm: expected a non-empty sequence of " +
                            std::to_string(input_dim()) + "-vectors");
    }
    const Eigen::Index h = units_;
    const Eigen::Index steps = x.cols();
    Trace tr{x, Matrix(4 * h, steps), Matrix(h, steps), Matrix(h, steps), Matrix(h, steps)};
    const Matrix zx = (wx_.value * x).colwise() + b_.value.col(0);
    Vector h_prev = Vector::Zero(h);
    Vector c_prev = Vector::Zero(h);
    for (Eigen::Index t = 0; t < steps; ++t) {
      Vector z = zx.col(t) + wh_.value * h_prev;
      for (Eigen::Index k = 0; k < 4 * h; ++k) {
        z[k] = (k >= 2 * h && k < 3 * h) ? std::tanh(z[k]) : sigmoid(z[k]);
      }
      tr.gates.col(t) = z;
      const Vector c = z.segment(h, h).cwiseProduct(c_prev) + z.segment(0, h).cwiseProduct(z.segment(2 * h, h));
      const Vector tc = c.array().tanh().matrix();
      tr.c.col(t) = c;
      tr.tanh_c.col(t) = tc;
      tr.h.col(t) = z.segment(3 * h, h).cwiseProduct(tc);
      h_prev = tr.h.col(t);
      c_prev = c;
    }
    return tr;
  }

  Eigen::Index units_ = 0;
  Param wx_;
  Param wh_;
  Param b_;
  std::vector<Trace> cache_;
};

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (Param* p : params) {
      p->m = opts_.beta1 * p->m + (1.0 - opts_.beta1) * p->grad;
      p->v = opts_.beta2 * p->v + (1.0 - opts_.beta2) * p->grad.cwiseAbs2();
      const auto m_hat = p->m.array() / bc1;
      const auto v_hat = p->v.array() / bc2;
      p->value.array() -= opts_.learning_rate * m_hat / (v_hat.sqrt() + opts_.epsilon);
    }
  }

 private:
  AdamOptions opts_;
  long t_ = 0;
};

/// Column-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const Vector shifted = logits.col(c).array() - logits.col(c).maxCoeff();
    const Vector e = shifted.array().exp();
    out.col(c) = e / e.sum();
  }
  return out;
}

}  // namespace crisisscope::nn
