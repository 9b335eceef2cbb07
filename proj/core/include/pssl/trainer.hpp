#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pssl/adasyn.hpp"
#include "pssl/dataset.hpp"
#include "pssl/metrics.hpp"
#include "pssl/nets.hpp"
#include "pssl/ssl.hpp"

namespace pssl {

struct FinetuneConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 96;
  std::size_t patience = 10;   // epochs without train-loss improvement
  double min_delta = 1e-4;     // improvement threshold for the plateau test
  std::uint64_t seed = 0;
  bool use_adasyn = true;
  // Train only the classifier head; the encoder runs in eval mode and none
  // of its parameters (running stats included) move.
  bool freeze_encoder = false;
  AdasynConfig adasyn;

  void validate() const;
};

struct FinetuneOutcome {
  std::unique_ptr<LinearHead> head;  // 2-way classifier over the embedding
  std::vector<double> epoch_losses;  // mean train loss per completed epoch
  std::size_t synthetic_samples = 0;
  AccessLog access;  // every dataset read made while training
};

// Supervised fine-tuning of the encoder plus a fresh linear classifier on
// the selected records, which must all be annotated train records
// (ContractError otherwise; this is the eval-leak guard). Class imbalance
// is countered by adaptive oversampling before the first epoch. Training
// stops early once the mean epoch loss has not improved by min_delta for
// `patience` consecutive epochs.
FinetuneOutcome finetune(Encoder& encoder, const EncoderConfig& enc_cfg,
                         const std::vector<PulseRecord>& records,
                         const std::vector<std::size_t>& train_idx, const FinetuneConfig& cfg);

// Argmax predictions in eval mode, batched to bound tape size.
std::vector<int> predict(Encoder& encoder, const LinearHead& head, const Tensor& values);

ClsMetrics evaluate(Encoder& encoder, const LinearHead& head,
                    const std::vector<PulseRecord>& records,
                    const std::vector<std::size_t>& idx);

// ------------------------------------------------------------------- grid

struct GridArm {
  Paradigm paradigm = Paradigm::contrastive;
  LossKind loss = LossKind::smooth_info_nce;  // contrastive paradigm only
};

struct GridConfig {
  std::vector<Backbone> backbones = {Backbone::transformer};
  std::vector<GridArm> arms = {{Paradigm::contrastive, LossKind::smooth_info_nce}};
  std::vector<double> fractions = {0.1};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double eval_fraction = 0.3;
  EncoderConfig encoder;      // backbone field overridden per cell
  PretrainConfig pretrain;    // paradigm/loss/seed overridden per cell
  FinetuneConfig finetune;    // seed overridden per cell

  void validate() const;
};

struct GridRow {
  std::string backbone;
  std::string paradigm;
  std::string loss_kind;  // "none" outside the contrastive paradigm
  double fraction = 0.0;
  std::uint64_t seed = 0;
  ClsMetrics metrics;
};

// Runs every (backbone, arm, fraction, seed) cell. Pretraining happens
// once per (backbone, arm, seed) on the unlabeled train split and is
// reused across fractions; the supervised arm skips pretraining. Splits
// and annotation masks are derived per seed from the shared records.
std::vector<GridRow> run_grid(const std::vector<PulseRecord>& base_records,
                              const GridConfig& cfg);

void write_results_csv(const std::string& path, const std::vector<GridRow>& rows);
std::vector<GridRow> read_results_csv(const std::string& path);

struct GridSummaryRow {
  std::string backbone;
  std::string paradigm;
  std::string loss_kind;
  double fraction = 0.0;
  std::size_t n_seeds = 0;
  ClsMetrics med;  // per-metric median over seeds
};

std::vector<GridSummaryRow> summarize_grid(const std::vector<GridRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<GridSummaryRow>& rows);

}  // namespace pssl
