#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pssl/nets.hpp"
#include "pssl/optim.hpp"
#include "pssl/prng.hpp"
#include "pssl/tape.hpp"

namespace pssl {

// ---------------------------------------------------------------- masking

// Zeroes one contiguous span of `mask_size` samples per row. The span
// start is drawn uniformly from [0, len - mask_size] inclusive,
// independently per row. mask_size may equal the row length (fully
// masked); larger raises MaskError.
struct MaskResult {
  Tensor masked;
  std::vector<std::size_t> positions;  // span start per row
};
MaskResult mask_rows(const Tensor& rows, std::size_t mask_size, Prng& rng);

// ------------------------------------------------------ contrastive losses

enum class LossKind { nt_xent, info_nce, swce, smooth_info_nce };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

// Batch-level anchor/positive averaging convention per loss kind: nt_xent
// and smooth_info_nce average over both view orderings; info_nce and swce
// anchor on the first view only.
bool default_symmetrize(LossKind k);

struct ContrastiveParams {
  LossKind kind = LossKind::smooth_info_nce;
  double tau = 0.1;       // temperature; must be positive
  double lambda = 0.5;    // negatives weight (smooth_info_nce only), >= 0
  bool symmetrize = true;

  void validate() const;  // throws ConfigError
};

// Similarities are cosines; all inputs must be L2-normalized within 1e-6
// (ContractError otherwise).
//
// Single-anchor form. For nt_xent/info_nce/smooth_info_nce the denominator
// is exp(sim(a,p)/tau) + w * sum_k exp(sim(a,n_k)/tau) with w = 1 (or
// lambda for the smooth variant); for swce every similarity in the
// denominator is taken against the positive instead of the anchor.
// smooth_info_nce with lambda = 1 equals info_nce; with lambda = 0 the
// loss is exactly 0 for any inputs.
double contrastive_loss(const ContrastiveParams& params, const std::vector<double>& anchor,
                        const std::vector<double>& positive,
                        const std::vector<std::vector<double>>& negatives);

// Batch form over two aligned view matrices (N, d); rows of z1 and z2 at
// the same index are positives, everything else in the batch serves as
// negatives (2(N-1) in-batch negatives per anchor for the NCE family).
// Requires N >= 2 (DataError).
Var batch_contrastive_loss(Tape& t, const ContrastiveParams& params, Var z1, Var z2);

// ------------------------------------------------------------ augmentation

struct AugmentConfig {
  double jitter_sigma = 0.1;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  std::size_t max_shift = 12;  // circular shift drawn from [-max_shift, max_shift]
  double mask_prob = 0.25;
  std::size_t mask_size = 32;

  void validate() const;
};

// One stochastic view of each row: additive Gaussian jitter, amplitude
// scale, circular time shift, optional zero-mask, then re-z-normalization.
Tensor augment_view(const Tensor& rows, const AugmentConfig& cfg, Prng& rng);

// ------------------------------------------------------------------- DINO

struct DinoConfig {
  double tau_s = 0.1;
  double tau_t = 0.04;
  double momentum = 0.996;         // teacher EMA coefficient
  double center_momentum = 0.9;
  std::size_t out_dim = 32;

  void validate() const;
};

// Teacher side of the self-distillation pair: a structural copy of the
// student encoder plus projection head, and the running output center.
struct DinoState {
  std::unique_ptr<Encoder> teacher;
  std::unique_ptr<LinearHead> teacher_head;
  Tensor center;  // (out_dim), starts at zero
  DinoConfig cfg;
};

// Builds the teacher as a copy of the student's current parameters. `rng`
// only feeds the throwaway structural initialization.
DinoState make_dino_state(const EncoderConfig& enc_cfg, Encoder& student,
                          const LinearHead& student_head, const DinoConfig& cfg, Prng& rng);

// One teacher-student step on a pair of views. Teacher targets are the
// centered softmax of the teacher outputs at tau_t (no gradient flows);
// the student minimizes the symmetric cross-entropy of its tau_s softmax
// against them. After the Adam step the teacher parameters advance by EMA
// (momentum m: unchanged at m = 1, equal to the student at m = 0) and the
// center absorbs the batch mean of the raw teacher outputs. Returns the
// loss. Throws ShapeError when head output widths disagree with the state.
double dino_step(DinoState& state, Encoder& student, LinearHead& student_head, Adam& adam,
                 const Tensor& view1, const Tensor& view2, Prng& rng);

// --------------------------------------------------------------- training

enum class Paradigm { masking, autoencoder, contrastive, dino, supervised };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

struct LossLogRow {
  std::string paradigm;
  std::string loss_kind;
  std::size_t epoch = 0;  // 0-based
  std::size_t batch = 0;  // 0-based within the epoch
  double loss = 0.0;
};

void write_loss_log_csv(const std::string& path, const std::vector<LossLogRow>& rows);
std::vector<LossLogRow> read_loss_log_csv(const std::string& path);

struct PretrainConfig {
  Paradigm paradigm = Paradigm::contrastive;
  std::size_t epochs = 30;
  std::size_t batch_size = 96;
  std::uint64_t seed = 0;
  std::size_t mask_size = 64;  // masking paradigm span
  ContrastiveParams contrastive;
  AugmentConfig augment;
  DinoConfig dino;

  void validate() const;
};

// Self-supervised pretraining over z-normalized pulses (N, input_len).
// Mutates the encoder parameters in place and returns per-batch loss logs.
// Heads used during pretraining (decoder / projection / dino) are
// discarded afterwards. Deterministic for fixed seed and inputs.
std::vector<LossLogRow> pretrain(Encoder& encoder, const EncoderConfig& enc_cfg,
                                 const Tensor& data, const PretrainConfig& cfg);

}  // namespace pssl
