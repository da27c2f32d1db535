#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajattr/dataset.hpp"
#include "trajattr/error.hpp"

namespace trajattr {

class TokenizationError : public Error {
 public:
  using Error::Error;
};

/// Disjoint dense token ids: one per grid cell, then the four actions, then
/// the three reward values {+1, -1, -0.1}.
class TokenVocab {
 public:
  explicit TokenVocab(int n_cells);

  int n_cells() const noexcept { return n_cells_; }
  int size() const noexcept { return n_cells_ + kNumActions + 3; }

  int obs_token(int cell) const;
  int action_token(int action) const;
  int reward_token(double reward) const;

  friend bool operator==(const TokenVocab&, const TokenVocab&) = default;

 private:
  int n_cells_;
};

/// Interleaved (o_1, a_1, r_1, ..., o_T, a_T, r_T); length 3T.
std::vector<int> tokenize(const Trajectory& traj, const TokenVocab& vocab);

struct EncoderConfig {
  int d_model = 64;
  double learning_rate = 1e-2;
  int epochs = 50;
  double clip_norm = 5.0;
  std::uint64_t seed = 3;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// All trainable tensors of the single-layer GRU language model, stored in
/// one flat vector so the optimizer and gradient checks can treat them
/// uniformly. Gate blocks are stacked in (update, reset, candidate) order.
class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(int vocab_size, int d_model);

  int vocab_size() const noexcept { return vocab_; }
  int d_model() const noexcept { return d_; }

  Eigen::VectorXd& flat() noexcept { return values_; }
  const Eigen::VectorXd& flat() const noexcept { return values_; }

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  /// d x V, column t is the embedding of token t.
  MatMap embed() { return mat(0, d_, vocab_); }
  ConstMatMap embed() const { return mat(0, d_, vocab_); }
  /// 3d x d input weights.
  MatMap w_in() { return mat(off_w_in(), 3 * d_, d_); }
  ConstMatMap w_in() const { return mat(off_w_in(), 3 * d_, d_); }
  /// 3d x d recurrent weights.
  MatMap w_rec() { return mat(off_w_rec(), 3 * d_, d_); }
  ConstMatMap w_rec() const { return mat(off_w_rec(), 3 * d_, d_); }
  VecMap bias() { return vec(off_bias(), 3 * d_); }
  ConstVecMap bias() const { return vec(off_bias(), 3 * d_); }
  /// V x d output projection.
  MatMap w_out() { return mat(off_w_out(), vocab_, d_); }
  ConstMatMap w_out() const { return mat(off_w_out(), vocab_, d_); }
  VecMap b_out() { return vec(off_b_out(), vocab_); }
  ConstVecMap b_out() const { return vec(off_b_out(), vocab_); }

  friend bool operator==(const EncoderParams& a, const EncoderParams& b) {
    return a.vocab_ == b.vocab_ && a.d_ == b.d_ && a.values_.size() == b.values_.size() &&
           (a.values_.array() == b.values_.array()).all();
  }

 private:
  Eigen::Index off_w_in() const { return Eigen::Index(d_) * vocab_; }
  Eigen::Index off_w_rec() const { return off_w_in() + 3 * Eigen::Index(d_) * d_; }
  Eigen::Index off_bias() const { return off_w_rec() + 3 * Eigen::Index(d_) * d_; }
  Eigen::Index off_w_out() const { return off_bias() + 3 * Eigen::Index(d_); }
  Eigen::Index off_b_out() const { return off_w_out() + Eigen::Index(vocab_) * d_; }

  MatMap mat(Eigen::Index off, Eigen::Index r, Eigen::Index c) {
    return MatMap(values_.data() + off, r, c);
  }
  ConstMatMap mat(Eigen::Index off, Eigen::Index r, Eigen::Index c) const {
    return ConstMatMap(values_.data() + off, r, c);
  }
  VecMap vec(Eigen::Index off, Eigen::Index n) { return VecMap(values_.data() + off, n); }
  ConstVecMap vec(Eigen::Index off, Eigen::Index n) const {
    return ConstVecMap(values_.data() + off, n);
  }

  int vocab_ = 0;
  int d_ = 0;
  Eigen::VectorXd values_;
};

struct Encoder {
  TokenVocab vocab{1};
  EncoderConfig config;
  EncoderParams params;
  /// Mean cross-entropy before training, then after each epoch.
  std::vector<double> loss_history;

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

struct TrajectoryEmbedding {
  int traj_id = 0;
  Eigen::VectorXd vector;
};

/// Seeded initialization; this is exactly what train_encoder returns for 0 epochs.
Encoder initialize_encoder(const TokenVocab& vocab, const EncoderConfig& cfg);

/// Teacher-forced next-token training over every tokenized trajectory,
/// full-batch Adam with global gradient-norm clipping.
Encoder train_encoder(const Dataset& data, const EncoderConfig& cfg);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // same layout as EncoderParams::flat()
};

/// Mean next-token cross-entropy over all sequences and its exact gradient
/// (backpropagation through time).
LossGradient loss_and_gradient(const EncoderParams& params,
                               const std::vector<std::vector<int>>& sequences);
double mean_loss(const EncoderParams& params, const std::vector<std::vector<int>>& sequences);

/// Hidden-state outputs after each input token; columns are tokens (d x 3T).
Eigen::MatrixXd hidden_outputs(const Encoder& enc, const Trajectory& traj);

/// Average of the 3T per-token outputs.
TrajectoryEmbedding encode_trajectory(const Encoder& enc, const Trajectory& traj);
std::vector<TrajectoryEmbedding> encode_all(const Encoder& enc, const Dataset& data);

void save_encoder(const Encoder& enc, const std::string& path);
Encoder load_encoder(const std::string& path);

}  // namespace trajattr
