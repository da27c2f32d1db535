#include "trajattr/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "trajattr/random.hpp"

namespace trajattr {

namespace {

constexpr double kRewardValues[3] = {kGoalReward, kLavaReward, kStepReward};
constexpr char kCheckpointMagic[8] = {'T', 'R', 'A', 'J', 'E', 'N', 'C', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

// Cached forward pass over one token sequence.
struct Forward {
  Eigen::MatrixXd h;     // d x (n + 1); column 0 is the zero initial state
  Eigen::MatrixXd z;     // d x n
  Eigen::MatrixXd r;     // d x n
  Eigen::MatrixXd cand;  // d x n
  Eigen::MatrixXd rec;   // d x n, candidate-block recurrent term U_h h_{k-1}
};

Forward run_forward(const EncoderParams& p, const Eigen::MatrixXd& input_proj,
                    const std::vector<int>& tokens) {
  const int d = p.d_model();
  const auto n = static_cast<Eigen::Index>(tokens.size());
  Forward f;
  f.h = Eigen::MatrixXd::Zero(d, n + 1);
  f.z.resize(d, n);
  f.r.resize(d, n);
  f.cand.resize(d, n);
  f.rec.resize(d, n);
  const auto w_rec = p.w_rec();
  Eigen::VectorXd rec(3 * d);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto h_prev = f.h.col(k);
    rec.noalias() = w_rec * h_prev;
    const auto x = input_proj.col(tokens[k]);  // W_in * embed + bias, precomputed per token
    f.z.col(k) = sigmoid(x.segment(0, d) + rec.segment(0, d));
    f.r.col(k) = sigmoid(x.segment(d, d) + rec.segment(d, d));
    f.rec.col(k) = rec.segment(2 * d, d);
    f.cand.col(k) =
        (x.segment(2 * d, d).array() + f.r.col(k).array() * f.rec.col(k).array()).tanh().matrix();
    f.h.col(k + 1) = ((1.0 - f.z.col(k).array()) * f.cand.col(k).array() +
                      f.z.col(k).array() * h_prev.array())
                         .matrix();
  }
  return f;
}

Eigen::MatrixXd input_projection(const EncoderParams& p) {
  Eigen::MatrixXd proj = p.w_in() * p.embed();
  proj.colwise() += p.bias();
  return proj;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

std::size_t count_predictions(const std::vector<std::vector<int>>& sequences) {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.empty() ? 0 : s.size() - 1;
  return n;
}

std::vector<std::vector<int>> tokenize_all(const Dataset& data, const TokenVocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(data.size());
  for (const Trajectory& t : data.trajectories) out.push_back(tokenize(t, vocab));
  return out;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw SchemaError("truncated encoder checkpoint");
  return v;
}

}  // namespace

TokenVocab::TokenVocab(int n_cells) : n_cells_(n_cells) {
  if (n_cells <= 0) throw ContractViolation("vocabulary needs at least one cell");
}

int TokenVocab::obs_token(int cell) const {
  if (cell < 0 || cell >= n_cells_) {
    throw TokenizationError(fmt::format("observation {} outside the vocabulary", cell));
  }
  return cell;
}

int TokenVocab::action_token(int action) const {
  if (action < 0 || action >= kNumActions) {
    throw TokenizationError(fmt::format("action {} outside the vocabulary", action));
  }
  return n_cells_ + action;
}

int TokenVocab::reward_token(double reward) const {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(reward - kRewardValues[i]) <= 1e-9) return n_cells_ + kNumActions + i;
  }
  throw TokenizationError(fmt::format("reward {} is not one of the reward buckets", reward));
}

std::vector<int> tokenize(const Trajectory& traj, const TokenVocab& vocab) {
  std::vector<int> tokens;
  tokens.reserve(3 * traj.steps.size());
  for (const Step& s : traj.steps) {
    tokens.push_back(vocab.obs_token(s.obs));
    tokens.push_back(vocab.action_token(s.action));
    tokens.push_back(vocab.reward_token(s.reward));
  }
  return tokens;
}

EncoderParams::EncoderParams(int vocab_size, int d_model) : vocab_(vocab_size), d_(d_model) {
  if (d_model < 2) throw ContractViolation("d_model must be at least 2");
  values_ = Eigen::VectorXd::Zero(off_b_out() + vocab_size);
}

Encoder initialize_encoder(const TokenVocab& vocab, const EncoderConfig& cfg) {
  if (cfg.epochs < 0) throw ContractViolation("epochs must be non-negative");
  if (!(cfg.learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
  if (!(cfg.clip_norm > 0.0)) throw ContractViolation("clip norm must be positive");
  Encoder enc{vocab, cfg, EncoderParams(vocab.size(), cfg.d_model), {}};
  Rng rng(cfg.seed);
  auto& theta = enc.params.flat();
  const Eigen::Index n_embed = Eigen::Index(cfg.d_model) * vocab.size();
  for (Eigen::Index i = 0; i < n_embed; ++i) theta[i] = rng.normal();
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for (Eigen::Index i = n_embed; i < theta.size(); ++i) theta[i] = rng.uniform(-bound, bound);
  return enc;
}

LossGradient loss_and_gradient(const EncoderParams& p,
                               const std::vector<std::vector<int>>& sequences) {
  const int d = p.d_model();
  const int vocab = p.vocab_size();
  const std::size_t n_pred = count_predictions(sequences);
  LossGradient out;
  EncoderParams grad(vocab, d);
  if (n_pred == 0) {
    out.gradient = grad.flat();
    return out;
  }
  const double scale = 1.0 / static_cast<double>(n_pred);
  const Eigen::MatrixXd proj = input_projection(p);
  // Gradient w.r.t. the per-token input projection, accumulated by token id.
  Eigen::MatrixXd d_proj = Eigen::MatrixXd::Zero(3 * d, vocab);

  const auto w_rec = p.w_rec();
  const auto w_out = p.w_out();
  auto g_rec = grad.w_rec();
  auto g_out = grad.w_out();
  auto g_bout = grad.b_out();

  for (const auto& tokens : sequences) {
    const auto n = static_cast<Eigen::Index>(tokens.size());
    if (n == 0) continue;
    const Forward f = run_forward(p, proj, tokens);

    // Output layer on h_1..h_{n-1}; h_k predicts token k (0-based).
    Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(d, n + 1);
    if (n > 1) {
      const auto outputs = f.h.middleCols(1, n - 1);
      Eigen::MatrixXd logits = w_out * outputs;
      logits.colwise() += p.b_out();
      Eigen::MatrixXd d_logits(vocab, n - 1);
      for (Eigen::Index k = 0; k + 1 < n; ++k) {
        const Eigen::VectorXd lp = log_softmax(logits.col(k));
        out.loss -= lp[tokens[k + 1]] * scale;
        d_logits.col(k) = lp.array().exp().matrix() * scale;
        d_logits(tokens[k + 1], k) -= scale;
      }
      g_out.noalias() += d_logits * outputs.transpose();
      g_bout += d_logits.rowwise().sum();
      d_hidden.middleCols(1, n - 1).noalias() = w_out.transpose() * d_logits;
    }

    // Backpropagation through time.
    Eigen::MatrixXd d_pre(3 * d, n);  // pre-activation gradients for (z, r, candidate input)
    Eigen::MatrixXd d_rec_pre(3 * d, n);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(d);
    for (Eigen::Index k = n - 1; k >= 0; --k) {
      const Eigen::ArrayXd dh = (d_hidden.col(k + 1) + carry).array();
      const Eigen::ArrayXd z = f.z.col(k).array();
      const Eigen::ArrayXd r = f.r.col(k).array();
      const Eigen::ArrayXd c = f.cand.col(k).array();
      const Eigen::ArrayXd h_prev = f.h.col(k).array();

      const Eigen::ArrayXd dc = dh * (1.0 - z) * (1.0 - c * c);
      const Eigen::ArrayXd dz = dh * (h_prev - c) * z * (1.0 - z);
      const Eigen::ArrayXd dr = dc * f.rec.col(k).array() * r * (1.0 - r);

      d_pre.col(k).segment(0, d) = dz.matrix();
      d_pre.col(k).segment(d, d) = dr.matrix();
      d_pre.col(k).segment(2 * d, d) = dc.matrix();
      d_rec_pre.col(k).segment(0, d) = dz.matrix();
      d_rec_pre.col(k).segment(d, d) = dr.matrix();
      d_rec_pre.col(k).segment(2 * d, d) = (dc * r).matrix();

      carry = (dh * z).matrix() + w_rec.transpose() * d_rec_pre.col(k);
    }
    g_rec.noalias() += d_rec_pre * f.h.leftCols(n).transpose();
    for (Eigen::Index k = 0; k < n; ++k) d_proj.col(tokens[k]) += d_pre.col(k);
  }

  // proj = W_in * E + b  =>  dW_in = dP E^T, dE = W_in^T dP, db = row sums.
  grad.w_in().noalias() = d_proj * p.embed().transpose();
  grad.embed().noalias() = p.w_in().transpose() * d_proj;
  grad.bias() = d_proj.rowwise().sum();
  out.gradient = std::move(grad.flat());
  return out;
}

double mean_loss(const EncoderParams& p, const std::vector<std::vector<int>>& sequences) {
  const std::size_t n_pred = count_predictions(sequences);
  if (n_pred == 0) return 0.0;
  const Eigen::MatrixXd proj = input_projection(p);
  double total = 0.0;
  for (const auto& tokens : sequences) {
    const auto n = static_cast<Eigen::Index>(tokens.size());
    if (n < 2) continue;
    const Forward f = run_forward(p, proj, tokens);
    Eigen::MatrixXd logits = p.w_out() * f.h.middleCols(1, n - 1);
    logits.colwise() += p.b_out();
    for (Eigen::Index k = 0; k + 1 < n; ++k) total -= log_softmax(logits.col(k))[tokens[k + 1]];
  }
  return total / static_cast<double>(n_pred);
}

Encoder train_encoder(const Dataset& data, const EncoderConfig& cfg) {
  if (data.size() == 0) throw ContractViolation("cannot train an encoder on an empty dataset");
  const TokenVocab vocab(data.meta.width * data.meta.height);
  Encoder enc = initialize_encoder(vocab, cfg);
  const auto sequences = tokenize_all(data, vocab);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  auto& theta = enc.params.flat();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossGradient lg = loss_and_gradient(enc.params, sequences);
    const double gnorm = lg.gradient.norm();
    if (!std::isfinite(lg.loss) || !std::isfinite(gnorm)) {
      throw TrainingError(fmt::format(
          "non-finite loss at epoch {} (loss {}, gradient norm {}); learning rate {} is likely "
          "too large",
          epoch, lg.loss, gnorm, cfg.learning_rate));
    }
    enc.loss_history.push_back(lg.loss);
    if (gnorm > cfg.clip_norm) lg.gradient *= cfg.clip_norm / gnorm;
    m = kBeta1 * m + (1.0 - kBeta1) * lg.gradient;
    v = kBeta2 * v + (1.0 - kBeta2) * lg.gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, epoch + 1);
    const double c2 = 1.0 - std::pow(kBeta2, epoch + 1);
    theta.array() -=
        cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }
  const double final_loss = mean_loss(enc.params, sequences);
  if (!std::isfinite(final_loss)) {
    throw TrainingError(fmt::format("non-finite final loss; learning rate {} is likely too large",
                                    cfg.learning_rate));
  }
  enc.loss_history.push_back(final_loss);
  return enc;
}

Eigen::MatrixXd hidden_outputs(const Encoder& enc, const Trajectory& traj) {
  if (traj.steps.empty()) throw ContractViolation("cannot encode an empty trajectory");
  const std::vector<int> tokens = tokenize(traj, enc.vocab);
  const Forward f = run_forward(enc.params, input_projection(enc.params), tokens);
  return f.h.rightCols(static_cast<Eigen::Index>(tokens.size()));
}

TrajectoryEmbedding encode_trajectory(const Encoder& enc, const Trajectory& traj) {
  const Eigen::MatrixXd outputs = hidden_outputs(enc, traj);
  return {traj.id, outputs.rowwise().sum() / static_cast<double>(outputs.cols())};
}

std::vector<TrajectoryEmbedding> encode_all(const Encoder& enc, const Dataset& data) {
  std::vector<TrajectoryEmbedding> out;
  out.reserve(data.size());
  for (const Trajectory& t : data.trajectories) {
    try {
      out.push_back(encode_trajectory(enc, t));
    } catch (const Error& e) {
      throw TokenizationError(fmt::format("trajectory {}: {}", t.id, e.what()));
    }
  }
  return out;
}

void save_encoder(const Encoder& enc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write encoder checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_pod<std::int32_t>(out, enc.vocab.n_cells());
  write_pod<std::int32_t>(out, enc.config.d_model);
  write_pod(out, enc.config.learning_rate);
  write_pod<std::int32_t>(out, enc.config.epochs);
  write_pod(out, enc.config.clip_norm);
  write_pod<std::uint64_t>(out, enc.config.seed);
  const auto& theta = enc.params.flat();
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(theta.size()));
  out.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
  write_pod<std::uint64_t>(out, enc.loss_history.size());
  out.write(reinterpret_cast<const char*>(enc.loss_history.data()),
            static_cast<std::streamsize>(enc.loss_history.size() * sizeof(double)));
  if (!out) throw Error("failed writing encoder checkpoint " + path);
}

Encoder load_encoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open encoder checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw SchemaError(path + " is not an encoder checkpoint");
  }
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion) {
    throw SchemaError("unsupported encoder checkpoint version in " + path);
  }
  const int n_cells = read_pod<std::int32_t>(in);
  EncoderConfig cfg;
  cfg.d_model = read_pod<std::int32_t>(in);
  cfg.learning_rate = read_pod<double>(in);
  cfg.epochs = read_pod<std::int32_t>(in);
  cfg.clip_norm = read_pod<double>(in);
  cfg.seed = read_pod<std::uint64_t>(in);
  Encoder enc{TokenVocab(n_cells), cfg, EncoderParams(n_cells + kNumActions + 3, cfg.d_model), {}};
  const auto n_params = read_pod<std::uint64_t>(in);
  if (n_params != static_cast<std::uint64_t>(enc.params.flat().size())) {
    throw SchemaError("encoder checkpoint parameter count mismatch");
  }
  in.read(reinterpret_cast<char*>(enc.params.flat().data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  const auto n_hist = read_pod<std::uint64_t>(in);
  if (n_hist > 1'000'000) throw SchemaError("encoder checkpoint loss history is implausible");
  enc.loss_history.resize(n_hist);
  in.read(reinterpret_cast<char*>(enc.loss_history.data()),
          static_cast<std::streamsize>(n_hist * sizeof(double)));
  if (!in) throw SchemaError("truncated encoder checkpoint " + path);
  if (!enc.params.flat().allFinite()) throw SchemaError("encoder checkpoint has non-finite values");
  return enc;
}

}  // namespace trajattr
