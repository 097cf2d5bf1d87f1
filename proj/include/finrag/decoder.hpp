#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finrag/common.hpp"
#include "finrag/dsl.hpp"

namespace finrag::decoder {

class DecoderError : public Error {
 public:
  enum class Kind {
    DimensionMismatch,
    EmptyMask,
    InvalidGold,
    NonFiniteLoss,
    LengthExceeded,
    BadCheckpoint,
  };
  DecoderError(Kind kind, const std::string& msg) : Error(tag(kind), msg), kind_(kind) {}
  Kind decoder_kind() const { return kind_; }

 private:
  static std::string tag(Kind k) {
    switch (k) {
      case Kind::DimensionMismatch: return "dimension_mismatch";
      case Kind::EmptyMask: return "empty_mask";
      case Kind::InvalidGold: return "invalid_gold";
      case Kind::NonFiniteLoss: return "non_finite_loss";
      case Kind::LengthExceeded: return "length_exceeded";
      case Kind::BadCheckpoint: return "bad_checkpoint";
    }
    return "decoder";
  }
  Kind kind_;
};

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& at(size_t r, size_t c) { return a[r * cols + c]; }
  double at(size_t r, size_t c) const { return a[r * cols + c]; }
  std::vector<double> row_copy(size_t r) const {
    return std::vector<double>(a.begin() + r * cols, a.begin() + (r + 1) * cols);
  }
};

// Learned blocks of the symbolic generator. Special-token embeddings are
// trained; per-question context embeddings come from the pluggable encoder
// and are inputs, not parameters.
struct DecoderParams {
  size_t dim = 0;
  Matrix op_emb;       // 14 x d
  Matrix const_emb;    // 18 x d
  Matrix step_emb;     // 11 x d
  Matrix lstm_w;       // 4d x d, input weights
  Matrix lstm_u;       // 4d x d, recurrent weights
  std::vector<double> lstm_b;  // 4d
  Matrix ctx_proj;     // d x 3d, combines both attention contexts with the state
  Matrix cand_proj;    // d x 2d, candidate rows with their reasoning product
  Matrix att_input;    // d x d
  Matrix att_history;  // d x d
  Matrix att_reason;   // d x d

  static DecoderParams init(size_t dim, uint64_t seed);
  static DecoderParams zeros(size_t dim);
};

struct ParamView {
  std::string name;
  std::vector<double>* data;
};
std::vector<ParamView> param_blocks(DecoderParams& p);

// Candidate-token matrix for one question: the vocabulary plus one encoder
// row per context (number/row) entry, aligned with vocab.input_indices().
struct CandidateSet {
  dsl::ProgramVocabulary vocab;
  Matrix input_emb;
};

struct TrainingExample {
  std::string id;
  CandidateSet cands;
  std::vector<size_t> gold;  // token indices, EOF-terminated, GO excluded
};

struct TrainConfig {
  double learning_rate = 2e-5;
  size_t batch_size = 16;
  double dropout = 0.1;
  double grad_clip_norm = 1.0;
  double plateau_factor = 0.5;
  size_t plateau_patience = 2;
  double plateau_threshold = 1e-4;  // relative improvement
  size_t epochs = 20;
  uint64_t seed = 0;
  // Stop once teacher-free accuracy reaches 1.0 (checked per epoch).
  bool stop_at_full_accuracy = false;
};

struct AttentionResult {
  std::vector<double> context;
  std::vector<double> distribution;
};

// scores_j = query . (weights . key_j); distribution = softmax(scores);
// context = sum_j distribution_j key_j.
AttentionResult attend(const std::vector<double>& query,
                       const std::vector<std::vector<double>>& keys, const Matrix& weights);

struct DecoderState {
  std::vector<double> hidden;
  std::vector<double> cell;
  std::vector<std::vector<double>> history;  // hidden states after each emission
  std::vector<size_t> emitted;
};

// Feeds GO through the LSTM from a zero state.
DecoderState init_state(const DecoderParams& p, const CandidateSet& cands);

struct StepOutput {
  size_t chosen = 0;
  std::vector<double> probs;  // over the full vocabulary, masked entries exactly 0
};

// One decoding step: attention, masked distribution, token choice (argmax or
// `forced`), then the LSTM consumes the chosen token's embedding.
StepOutput decode_step(const DecoderParams& p, DecoderState& state, const CandidateSet& cands,
                       const std::vector<size_t>& valid_indices,
                       std::optional<size_t> forced = std::nullopt);

// Low-level description of one teacher-forced sequence; lets tests drive the
// graph with hand-built candidate rows and masks.
struct RowSource {
  enum class Block { OpEmb, ConstEmb, StepEmb, Input };
  Block block;
  size_t row;
};
struct DecodeTask {
  std::vector<RowSource> rows;
  Matrix input_emb;
  std::vector<size_t> input_keys;                 // candidate positions attended as inputs
  std::vector<std::vector<uint8_t>> step_masks;   // one validity vector per gold token
  std::vector<size_t> gold;
  size_t go_row = 0;
};

// Replays the vocabulary mask along `gold`; InvalidGold if the sequence ever
// leaves the valid set or does not end with EOF.
DecodeTask make_task(const CandidateSet& cands, const std::vector<size_t>& gold);

double task_loss(const DecoderParams& p, const DecodeTask& task);
// Accumulates dLoss/dBlock into `grads` (same shapes); returns the loss.
double task_loss_grads(const DecoderParams& p, const DecodeTask& task, DecoderParams& grads);

// Mean teacher-forced cross-entropy of the gold sequence.
double sequence_loss(const DecoderParams& p, const CandidateSet& cands,
                     const std::vector<size_t>& gold);

// Max relative error between analytic and central finite-difference
// gradients over every parameter block.
double gradient_check(const DecoderParams& p, const DecodeTask& task, double epsilon);

struct EpochStats {
  size_t epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};
struct TrainResult {
  DecoderParams params;
  std::vector<EpochStats> curve;
};

// Adam + global-norm clipping + plateau learning-rate reduction;
// deterministic for a fixed (seed, config, dataset).
TrainResult train(const DecoderParams& initial, const std::vector<TrainingExample>& dataset,
                  const TrainConfig& config);

inline constexpr size_t kDefaultMaxSteps = 64;  // 11 steps x 4 tokens + terminals

// Greedy masked decoding from GO to EOF; the result always parses.
dsl::Program generate(const DecoderParams& p, const CandidateSet& cands,
                      size_t max_steps = kDefaultMaxSteps);
std::vector<size_t> generate_tokens(const DecoderParams& p, const CandidateSet& cands,
                                    size_t max_steps = kDefaultMaxSteps);

// Fraction of examples whose teacher-free decode equals the gold sequence.
double sequence_accuracy(const DecoderParams& p, const std::vector<TrainingExample>& dataset,
                         size_t max_steps = kDefaultMaxSteps);

struct Checkpoint {
  DecoderParams params;
  std::map<std::string, std::string> meta;
};

// Single file: JSON config header, then named little-endian float32 blocks.
void save_checkpoint(const std::string& path, const DecoderParams& p,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::string& path);

void write_loss_curve(const std::string& path, const std::vector<EpochStats>& curve);

}  // namespace finrag::decoder
