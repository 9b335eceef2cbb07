// pssl: synthetic PPG pipeline driver.
//
// Subcommands: generate | preprocess | annotate | pretrain | finetune |
// evaluate | grid | report. All relative paths resolve against --workdir.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerics error.
// CSV outputs are bit-identical across reruns with the same config and
// seed; wall-clock timestamps go only to the run.log sidecar.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pssl/adasyn.hpp"
#include "pssl/annotate.hpp"
#include "pssl/checkpoint.hpp"
#include "pssl/csv.hpp"
#include "pssl/dataset.hpp"
#include "pssl/dsp.hpp"
#include "pssl/errors.hpp"
#include "pssl/metrics.hpp"
#include "pssl/nets.hpp"
#include "pssl/runconfig.hpp"
#include "pssl/ssl.hpp"
#include "pssl/synthgen.hpp"
#include "pssl/trainer.hpp"

namespace fs = std::filesystem;
using namespace pssl;

namespace {

// ------------------------------------------------------------- plumbing

struct Context {
  std::string workdir = ".";
  std::string config_path;
  std::vector<std::string> overrides;
  RunConfig cfg;

  std::string resolve(const std::string& path) const {
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(workdir) / p).string();
  }

  void load_config() {
    if (!config_path.empty()) cfg = RunConfig::from_file(resolve(config_path));
    for (const std::string& o : overrides) cfg.set_override(o);
    cfg.require_known(known_keys());
  }

  // Timestamps live here and only here.
  void log(const std::string& msg) const {
    std::ofstream os(fs::path(workdir) / "run.log", std::ios::app);
    if (!os) return;  // logging must never fail the run
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    os << "[" << buf << "] " << msg << "\n";
  }

  static std::vector<std::string> known_keys();
};

std::vector<std::string> Context::known_keys() {
  return {
      "generate.seed", "generate.n_signals", "generate.duration_s", "generate.fs",
      "generate.heart_rate_lo", "generate.heart_rate_hi", "generate.hr_jitter",
      "generate.artifact_fraction", "generate.baseline_amp",
      "filter.low_hz", "filter.high_hz", "filter.order",
      "segment.window_s", "segment.min_cycle_s", "segment.max_cycle_s", "segment.depth_sigma",
      "pretrain.method", "pretrain.loss", "pretrain.tau", "pretrain.lambda",
      "pretrain.symmetrize", "pretrain.epochs", "pretrain.batch_size", "pretrain.seed",
      "pretrain.mask_size", "pretrain.backbone",
      "augment.jitter_sigma", "augment.scale_lo", "augment.scale_hi", "augment.max_shift",
      "augment.mask_prob", "augment.mask_size",
      "dino.tau_s", "dino.tau_t", "dino.momentum", "dino.center_momentum", "dino.out_dim",
      "finetune.epochs", "finetune.batch_size", "finetune.patience", "finetune.min_delta",
      "finetune.seed", "finetune.use_adasyn", "finetune.freeze_encoder",
      "finetune.fraction_pct", "finetune.eval_fraction", "finetune.backbone",
      "adasyn.beta", "adasyn.k", "adasyn.d_th",
      "grid.backbones", "grid.arms", "grid.fractions_pct", "grid.seeds",
      "grid.eval_fraction",
      "mlp.dropout", "mlp.lr",
      "fcnn.blocks", "fcnn.channels", "fcnn.kernel", "fcnn.dropout", "fcnn.lr",
      "transformer.layers", "transformer.d_model", "transformer.heads", "transformer.d_ff",
      "transformer.patch", "transformer.dropout", "transformer.lr",
      "paths.signals", "paths.ground_truth", "paths.pulses", "paths.labels",
      "paths.checkpoint", "paths.loss_log", "paths.model", "paths.train_log",
      "paths.metrics", "paths.results", "paths.summary",
  };
}

// Precedence: explicit flag > config file > PSSL_SEED (seeds only) > default.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           const RunConfig& cfg, const std::string& key,
                           std::uint64_t fallback) {
  if (opt != nullptr && opt->count() > 0) return flag_value;
  if (cfg.has(key)) return cfg.get_u64(key, fallback);
  if (const auto env = env_seed()) return *env;
  return fallback;
}

template <typename T>
T pick(const CLI::Option* opt, T flag_value, T cfg_value) {
  return (opt != nullptr && opt->count() > 0) ? flag_value : cfg_value;
}

std::string pick_path(const CLI::Option* opt, const std::string& flag_value,
                      const RunConfig& cfg, const std::string& key,
                      const std::string& fallback) {
  if (opt != nullptr && opt->count() > 0) return flag_value;
  return cfg.get_str(key, fallback);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (begin <= s.size()) {
    const std::size_t comma = s.find(',', begin);
    const std::string item = s.substr(begin, comma == std::string::npos ? comma : comma - begin);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return out;
}

// The study design fixes the annotated fractions; anything else would
// silently change the experiment, so reject it up front.
void require_study_fraction(double pct, const std::string& what) {
  static constexpr double kAllowed[] = {2.5, 5.0, 7.5, 10.0};
  for (const double a : kAllowed)
    if (pct == a) return;
  throw ConfigError(what + " must be one of 2.5, 5, 7.5, 10 (percent)");
}

// Accepts both the hyphenated CLI spellings and the canonical names.
LossKind loss_from_cli(const std::string& s) {
  if (s == "nt-xent" || s == "ntxent") return LossKind::nt_xent;
  if (s == "infonce") return LossKind::info_nce;
  if (s == "smooth-infonce" || s == "smooth-info-nce") return LossKind::smooth_info_nce;
  return loss_kind_from_string(s);
}

// ------------------------------------------------------- config builders

SynthConfig make_synth_config(const RunConfig& cfg) {
  SynthConfig s;
  s.seed = cfg.get_u64("generate.seed", s.seed);
  s.n_signals = static_cast<std::size_t>(cfg.get_int("generate.n_signals",
                                                     static_cast<std::int64_t>(s.n_signals)));
  s.duration_s = cfg.get_double("generate.duration_s", s.duration_s);
  s.fs = cfg.get_double("generate.fs", s.fs);
  s.heart_rate_lo = cfg.get_double("generate.heart_rate_lo", s.heart_rate_lo);
  s.heart_rate_hi = cfg.get_double("generate.heart_rate_hi", s.heart_rate_hi);
  s.hr_jitter = cfg.get_double("generate.hr_jitter", s.hr_jitter);
  s.artifact_fraction = cfg.get_double("generate.artifact_fraction", s.artifact_fraction);
  s.baseline_amp = cfg.get_double("generate.baseline_amp", s.baseline_amp);
  return s;
}

FilterSpec make_filter_spec(const RunConfig& cfg) {
  FilterSpec f;
  f.low_cut_hz = cfg.get_double("filter.low_hz", f.low_cut_hz);
  f.high_cut_hz = cfg.get_double("filter.high_hz", f.high_cut_hz);
  f.order = static_cast<std::size_t>(cfg.get_int("filter.order",
                                                 static_cast<std::int64_t>(f.order)));
  return f;
}

SegmentConfig make_segment_config(const RunConfig& cfg) {
  SegmentConfig s;
  s.window_s = cfg.get_double("segment.window_s", s.window_s);
  s.min_cycle_s = cfg.get_double("segment.min_cycle_s", s.min_cycle_s);
  s.max_cycle_s = cfg.get_double("segment.max_cycle_s", s.max_cycle_s);
  s.depth_sigma = cfg.get_double("segment.depth_sigma", s.depth_sigma);
  return s;
}

EncoderConfig make_encoder_config(const RunConfig& cfg, const std::string& backbone) {
  EncoderConfig e;
  e.backbone = backbone_from_string(backbone);
  e.mlp.dropout = cfg.get_double("mlp.dropout", e.mlp.dropout);
  e.mlp.lr = cfg.get_double("mlp.lr", e.mlp.lr);
  e.fcnn.blocks = static_cast<std::size_t>(cfg.get_int("fcnn.blocks",
                                                       static_cast<std::int64_t>(e.fcnn.blocks)));
  e.fcnn.channels = static_cast<std::size_t>(
      cfg.get_int("fcnn.channels", static_cast<std::int64_t>(e.fcnn.channels)));
  e.fcnn.kernel = static_cast<std::size_t>(cfg.get_int("fcnn.kernel",
                                                       static_cast<std::int64_t>(e.fcnn.kernel)));
  e.fcnn.dropout = cfg.get_double("fcnn.dropout", e.fcnn.dropout);
  e.fcnn.lr = cfg.get_double("fcnn.lr", e.fcnn.lr);
  e.transformer.layers = static_cast<std::size_t>(
      cfg.get_int("transformer.layers", static_cast<std::int64_t>(e.transformer.layers)));
  e.transformer.d_model = static_cast<std::size_t>(
      cfg.get_int("transformer.d_model", static_cast<std::int64_t>(e.transformer.d_model)));
  e.transformer.heads = static_cast<std::size_t>(
      cfg.get_int("transformer.heads", static_cast<std::int64_t>(e.transformer.heads)));
  e.transformer.d_ff = static_cast<std::size_t>(
      cfg.get_int("transformer.d_ff", static_cast<std::int64_t>(e.transformer.d_ff)));
  e.transformer.patch = static_cast<std::size_t>(
      cfg.get_int("transformer.patch", static_cast<std::int64_t>(e.transformer.patch)));
  e.transformer.dropout = cfg.get_double("transformer.dropout", e.transformer.dropout);
  e.transformer.lr = cfg.get_double("transformer.lr", e.transformer.lr);
  return e;
}

AugmentConfig make_augment_config(const RunConfig& cfg) {
  AugmentConfig a;
  a.jitter_sigma = cfg.get_double("augment.jitter_sigma", a.jitter_sigma);
  a.scale_lo = cfg.get_double("augment.scale_lo", a.scale_lo);
  a.scale_hi = cfg.get_double("augment.scale_hi", a.scale_hi);
  a.max_shift = static_cast<std::size_t>(cfg.get_int("augment.max_shift",
                                                     static_cast<std::int64_t>(a.max_shift)));
  a.mask_prob = cfg.get_double("augment.mask_prob", a.mask_prob);
  a.mask_size = static_cast<std::size_t>(cfg.get_int("augment.mask_size",
                                                     static_cast<std::int64_t>(a.mask_size)));
  return a;
}

DinoConfig make_dino_config(const RunConfig& cfg) {
  DinoConfig d;
  d.tau_s = cfg.get_double("dino.tau_s", d.tau_s);
  d.tau_t = cfg.get_double("dino.tau_t", d.tau_t);
  d.momentum = cfg.get_double("dino.momentum", d.momentum);
  d.center_momentum = cfg.get_double("dino.center_momentum", d.center_momentum);
  d.out_dim = static_cast<std::size_t>(cfg.get_int("dino.out_dim",
                                                   static_cast<std::int64_t>(d.out_dim)));
  return d;
}

AdasynConfig make_adasyn_config(const RunConfig& cfg) {
  AdasynConfig a;
  a.beta = cfg.get_double("adasyn.beta", a.beta);
  a.k = static_cast<std::size_t>(cfg.get_int("adasyn.k", static_cast<std::int64_t>(a.k)));
  a.d_th = cfg.get_double("adasyn.d_th", a.d_th);
  return a;
}

FinetuneConfig make_finetune_config(const RunConfig& cfg) {
  FinetuneConfig f;
  f.epochs = static_cast<std::size_t>(cfg.get_int("finetune.epochs",
                                                  static_cast<std::int64_t>(f.epochs)));
  f.batch_size = static_cast<std::size_t>(
      cfg.get_int("finetune.batch_size", static_cast<std::int64_t>(f.batch_size)));
  f.patience = static_cast<std::size_t>(cfg.get_int("finetune.patience",
                                                    static_cast<std::int64_t>(f.patience)));
  f.min_delta = cfg.get_double("finetune.min_delta", f.min_delta);
  f.use_adasyn = cfg.get_bool("finetune.use_adasyn", f.use_adasyn);
  f.freeze_encoder = cfg.get_bool("finetune.freeze_encoder", f.freeze_encoder);
  f.adasyn = make_adasyn_config(cfg);
  return f;
}

std::vector<PulseRecord> load_records(const Context& ctx, const std::string& pulses_path,
                                      const std::string& labels_path) {
  const auto pulses = read_pulses_csv(ctx.resolve(pulses_path));
  const auto labels = read_labels_csv(ctx.resolve(labels_path));
  return assemble_records(pulses, labels);
}

// Encoder parameter initialization stream; shared with run_grid so a CLI
// pretrain + finetune chain reproduces a grid cell exactly.
Prng encoder_init_stream(std::uint64_t seed, Backbone backbone) {
  return Prng(seed).split(0xe0c + static_cast<std::uint64_t>(backbone));
}

// ----------------------------------------------------------- subcommands

int cmd_generate(const Context& ctx, const SynthConfig& scfg, const std::string& signals_path,
                 const std::string& gt_path) {
  scfg.validate();
  const SynthCorpus corpus = generate_corpus(scfg);
  write_signals_csv(ctx.resolve(signals_path), corpus.signals);
  write_ground_truth_csv(ctx.resolve(gt_path), corpus.ground_truth);
  std::size_t artifacts = 0;
  for (const auto& g : corpus.ground_truth) artifacts += g.artifact ? 1 : 0;
  ctx.log("generate: " + std::to_string(corpus.signals.size()) + " signals, " +
          std::to_string(corpus.ground_truth.size()) + " pulses (" +
          std::to_string(artifacts) + " artifacts) -> " + signals_path + ", " + gt_path);
  std::cout << "wrote " << corpus.signals.size() << " signals, " << corpus.ground_truth.size()
            << " ground-truth pulses\n";
  return 0;
}

int cmd_preprocess(const Context& ctx, const FilterSpec& fspec, const SegmentConfig& scfg,
                   const std::string& signals_path, const std::string& pulses_path) {
  const auto signals = read_signals_csv(ctx.resolve(signals_path));
  std::vector<SegmentedPulse> all;
  for (const auto& sig : signals) {
    auto pulses = extract_pulses(sig.samples, sig.fs, sig.id, fspec, scfg);
    all.insert(all.end(), std::make_move_iterator(pulses.begin()),
               std::make_move_iterator(pulses.end()));
  }
  if (all.empty()) throw DataError("preprocess: no pulses segmented from " + signals_path);
  write_pulses_csv(ctx.resolve(pulses_path), all);
  ctx.log("preprocess: " + std::to_string(signals.size()) + " signals -> " +
          std::to_string(all.size()) + " pulses -> " + pulses_path);
  std::cout << "wrote " << all.size() << " pulses from " << signals.size() << " signals\n";
  return 0;
}

int cmd_annotate(const Context& ctx, const std::string& pulses_path,
                 const std::string& labels_path) {
  const auto pulses = read_pulses_csv(ctx.resolve(pulses_path));
  std::map<std::uint32_t, std::vector<const SegmentedPulse*>> by_signal;
  for (const auto& p : pulses) by_signal[p.signal_id].push_back(&p);

  std::vector<LabelRow> rows;
  std::size_t skipped_signals = 0;
  for (const auto& [signal_id, group] : by_signal) {
    if (group.size() < 3) {
      // Bands need at least 3 pulses; an undersized signal is dropped
      // whole rather than failing the run.
      ++skipped_signals;
      ctx.log("annotate: signal " + std::to_string(signal_id) + " has only " +
              std::to_string(group.size()) + " pulses, skipped");
      continue;
    }
    std::vector<std::vector<double>> values;
    values.reserve(group.size());
    for (const auto* p : group) values.push_back(p->values);
    const GroupAnnotation ann = annotate_group(values);
    for (std::size_t i = 0; i < group.size(); ++i) {
      LabelRow r;
      r.signal_id = signal_id;
      r.pulse_index = group[i]->pulse_index;
      r.artifact = ann.artifact[i];
      r.stats = ann.stats[i];
      rows.push_back(r);
    }
  }
  if (rows.empty()) throw DataError("annotate: no signal had the 3 pulses needed for bands");
  write_labels_csv(ctx.resolve(labels_path), rows);
  std::size_t artifacts = 0;
  for (const auto& r : rows) artifacts += r.artifact ? 1 : 0;
  ctx.log("annotate: " + std::to_string(rows.size()) + " labels (" +
          std::to_string(artifacts) + " artifacts, " + std::to_string(skipped_signals) +
          " signals skipped) -> " + labels_path);
  std::cout << "wrote " << rows.size() << " labels (" << artifacts << " artifact)\n";
  return 0;
}

int cmd_pretrain(const Context& ctx, const PretrainConfig& pcfg, const EncoderConfig& enc_cfg,
                 double eval_fraction, const std::string& pulses_path,
                 const std::string& labels_path, const std::string& ckpt_path,
                 const std::string& log_path) {
  pcfg.validate();
  std::vector<PulseRecord> records = load_records(ctx, pulses_path, labels_path);
  apply_split(records, eval_fraction, pcfg.seed);
  const Tensor train_values = gather_values(records, indices_of(records, Split::train));

  Prng enc_rng = encoder_init_stream(pcfg.seed, enc_cfg.backbone);
  auto encoder = make_encoder(enc_cfg, enc_rng);
  const auto logs = pretrain(*encoder, enc_cfg, train_values, pcfg);

  save_checkpoint(ctx.resolve(ckpt_path), encoder->params());
  write_loss_log_csv(ctx.resolve(log_path), logs);
  ctx.log("pretrain: " + to_string(pcfg.paradigm) + " on " +
          std::to_string(train_values.dim(0)) + " train pulses, " +
          std::to_string(pcfg.epochs) + " epochs -> " + ckpt_path + ", " + log_path);
  std::cout << "pretrained " << to_string(enc_cfg.backbone) << " ("
            << to_string(pcfg.paradigm) << "), final batch loss "
            << fmt_double(logs.empty() ? 0.0 : logs.back().loss) << "\n";
  return 0;
}

int cmd_finetune(const Context& ctx, const FinetuneConfig& fcfg, const EncoderConfig& enc_cfg,
                 double eval_fraction, double fraction_pct, const std::string& pulses_path,
                 const std::string& labels_path, const std::string& ckpt_path,
                 const std::string& model_prefix, const std::string& log_path) {
  fcfg.validate();
  require_study_fraction(fraction_pct, "finetune: fraction_pct");
  std::vector<PulseRecord> records = load_records(ctx, pulses_path, labels_path);
  apply_split(records, eval_fraction, fcfg.seed);
  mark_annotated(records, fraction_pct / 100.0, fcfg.seed);

  Prng enc_rng = encoder_init_stream(fcfg.seed, enc_cfg.backbone);
  auto encoder = make_encoder(enc_cfg, enc_rng);
  if (!ckpt_path.empty()) load_checkpoint(ctx.resolve(ckpt_path), encoder->params());

  const auto annotated = annotated_train_indices(records);
  FinetuneOutcome outcome = finetune(*encoder, enc_cfg, records, annotated, fcfg);

  save_checkpoint(ctx.resolve(model_prefix + ".encoder.ckpt"), encoder->params());
  save_checkpoint(ctx.resolve(model_prefix + ".head.ckpt"), outcome.head->params());

  std::vector<std::vector<std::string>> log_rows;
  log_rows.push_back({"epoch", "loss"});
  for (std::size_t e = 0; e < outcome.epoch_losses.size(); ++e)
    log_rows.push_back({std::to_string(e), fmt_double(outcome.epoch_losses[e])});
  write_csv(ctx.resolve(log_path), log_rows);

  ctx.log("finetune: " + std::to_string(annotated.size()) + " annotated pulses (+" +
          std::to_string(outcome.synthetic_samples) + " synthetic), " +
          std::to_string(outcome.epoch_losses.size()) + " epochs -> " + model_prefix +
          ".{encoder,head}.ckpt");
  std::cout << "fine-tuned on " << annotated.size() << " annotated pulses (+"
            << outcome.synthetic_samples << " synthetic), " << outcome.epoch_losses.size()
            << " epochs\n";
  return 0;
}

int cmd_evaluate(const Context& ctx, const EncoderConfig& enc_cfg, std::uint64_t seed,
                 double eval_fraction, const std::string& pulses_path,
                 const std::string& labels_path, const std::string& model_prefix,
                 const std::string& metrics_path) {
  std::vector<PulseRecord> records = load_records(ctx, pulses_path, labels_path);
  apply_split(records, eval_fraction, seed);
  const auto eval_idx = indices_of(records, Split::eval);
  if (eval_idx.empty()) throw DataError("evaluate: eval split is empty");

  Prng enc_rng = encoder_init_stream(seed, enc_cfg.backbone);
  auto encoder = make_encoder(enc_cfg, enc_rng);
  load_checkpoint(ctx.resolve(model_prefix + ".encoder.ckpt"), encoder->params());
  Prng head_rng(0);
  LinearHead head("cls", encoder->embed_dim(), 2, head_rng);
  load_checkpoint(ctx.resolve(model_prefix + ".head.ckpt"), head.params());

  const ClsMetrics m = evaluate(*encoder, head, records, eval_idx);
  write_csv(ctx.resolve(metrics_path),
            {{"n_eval", "accuracy", "precision", "recall", "f1"},
             {std::to_string(eval_idx.size()), fmt_double(m.accuracy), fmt_double(m.precision),
              fmt_double(m.recall), fmt_double(m.f1)}});
  ctx.log("evaluate: " + std::to_string(eval_idx.size()) + " eval pulses, f1 " +
          fmt_double(m.f1) + " -> " + metrics_path);
  std::cout << "accuracy " << fmt_double(m.accuracy) << "  precision " << fmt_double(m.precision)
            << "  recall " << fmt_double(m.recall) << "  f1 " << fmt_double(m.f1) << "\n";
  return 0;
}

GridArm parse_arm(const std::string& s) {
  const std::size_t colon = s.find(':');
  GridArm arm;
  arm.paradigm = paradigm_from_string(colon == std::string::npos ? s : s.substr(0, colon));
  if (colon != std::string::npos) {
    if (arm.paradigm != Paradigm::contrastive)
      throw ConfigError("grid: arm '" + s + "': only contrastive takes a loss");
    arm.loss = loss_from_cli(s.substr(colon + 1));
  }
  return arm;
}

int cmd_grid(const Context& ctx, GridConfig gcfg, const std::string& backbones_csv,
             const std::string& arms_csv, const std::string& fractions_csv,
             std::uint64_t n_seeds, const std::string& pulses_path,
             const std::string& labels_path, const std::string& results_path,
             const std::string& summary_path) {
  gcfg.backbones.clear();
  for (const std::string& b : split_list(backbones_csv))
    gcfg.backbones.push_back(backbone_from_string(b));
  gcfg.arms.clear();
  for (const std::string& a : split_list(arms_csv)) gcfg.arms.push_back(parse_arm(a));
  gcfg.fractions.clear();
  for (const std::string& f : split_list(fractions_csv)) {
    const double pct = parse_double(f, "grid fractions");
    require_study_fraction(pct, "grid: fractions");
    gcfg.fractions.push_back(pct / 100.0);
  }
  if (n_seeds == 0) throw ConfigError("grid: seeds must be >= 1");
  gcfg.seeds.clear();
  for (std::uint64_t s = 1; s <= n_seeds; ++s) gcfg.seeds.push_back(s);
  gcfg.validate();

  const std::vector<PulseRecord> records = load_records(ctx, pulses_path, labels_path);
  const auto rows = run_grid(records, gcfg);
  write_results_csv(ctx.resolve(results_path), rows);
  write_summary_csv(ctx.resolve(summary_path), summarize_grid(rows));
  ctx.log("grid: " + std::to_string(rows.size()) + " cells -> " + results_path + ", " +
          summary_path);
  std::cout << "wrote " << rows.size() << " grid cells\n";
  return 0;
}

int cmd_report(const Context& ctx, const std::string& results_path,
               const std::string& summary_path, const std::vector<std::string>& loss_logs,
               const std::string& batch_curves_path, const std::string& epoch_curves_path) {
  const auto rows = read_results_csv(ctx.resolve(results_path));
  write_summary_csv(ctx.resolve(summary_path), summarize_grid(rows));

  if (!loss_logs.empty()) {
    std::vector<std::vector<std::string>> batchwise;
    batchwise.push_back({"source", "paradigm", "loss_kind", "epoch", "batch", "loss"});
    std::vector<std::vector<std::string>> epochwise;
    epochwise.push_back({"source", "paradigm", "loss_kind", "epoch", "mean_loss"});
    for (const std::string& log_path : loss_logs) {
      const std::string source = fs::path(log_path).stem().string();
      const auto log = read_loss_log_csv(ctx.resolve(log_path));
      std::map<std::size_t, std::pair<double, std::size_t>> per_epoch;
      for (const LossLogRow& r : log) {
        batchwise.push_back({source, r.paradigm, r.loss_kind, std::to_string(r.epoch),
                             std::to_string(r.batch), fmt_double(r.loss)});
        auto& [sum, count] = per_epoch[r.epoch];
        sum += r.loss;
        ++count;
      }
      for (const auto& [epoch, acc] : per_epoch)
        epochwise.push_back({source, log.front().paradigm, log.front().loss_kind,
                             std::to_string(epoch),
                             fmt_double(acc.first / static_cast<double>(acc.second))});
    }
    write_csv(ctx.resolve(batch_curves_path), batchwise);
    write_csv(ctx.resolve(epoch_curves_path), epochwise);
  }
  ctx.log("report: " + std::to_string(rows.size()) + " result rows -> " + summary_path +
          (loss_logs.empty() ? "" : ", " + batch_curves_path + ", " + epoch_curves_path));
  std::cout << "report written\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  pssl::tune_allocator();
  CLI::App app{"Self-supervised PPG pulse pipeline"};
  app.require_subcommand(1);

  Context ctx;
  app.add_option("--workdir", ctx.workdir, "Root for all relative paths")
      ->capture_default_str();
  app.add_option("--config", ctx.config_path, "Sectioned key=value config file");
  app.add_option("--set", ctx.overrides, "Override a config key (section.key=value)");

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize a pulse corpus with ground truth");
  std::uint64_t gen_seed = 42;
  std::size_t gen_n = 20;
  double gen_dur = 30.0, gen_artifacts = 0.25;
  std::string gen_signals = "signals.csv", gen_gt = "ground_truth.csv";
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Corpus seed");
  auto* gen_n_opt = gen->add_option("--n-signals", gen_n, "Number of signals");
  auto* gen_dur_opt = gen->add_option("--duration", gen_dur, "Signal length in seconds");
  auto* gen_art_opt =
      gen->add_option("--artifact-fraction", gen_artifacts, "Fraction of pulses perturbed");
  auto* gen_sig_opt = gen->add_option("--signals", gen_signals, "Signals CSV output");
  auto* gen_gt_opt = gen->add_option("--ground-truth", gen_gt, "Ground-truth CSV output");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Filter, segment, and resample signals");
  std::string pre_signals = "signals.csv", pre_pulses = "pulses.csv";
  auto* pre_sig_opt = pre->add_option("--signals", pre_signals, "Signals CSV input");
  auto* pre_pul_opt = pre->add_option("--pulses", pre_pulses, "Pulses CSV output");

  // annotate
  auto* ann = app.add_subcommand("annotate", "Statistically label segmented pulses");
  std::string ann_pulses = "pulses.csv", ann_labels = "labels.csv";
  auto* ann_pul_opt = ann->add_option("--pulses", ann_pulses, "Pulses CSV input");
  auto* ann_lab_opt = ann->add_option("--labels", ann_labels, "Labels CSV output");

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "Self-supervised encoder pretraining");
  std::string pt_method = "contrastive", pt_loss = "smooth-infonce", pt_backbone = "transformer";
  double pt_tau = 0.1, pt_lambda = 0.5, pt_eval_fraction = 0.3;
  bool pt_symmetrize = true;
  std::uint64_t pt_seed = 0;
  std::size_t pt_epochs = 30, pt_batch = 96, pt_mask = 64;
  std::string pt_pulses = "pulses.csv", pt_labels = "labels.csv";
  std::string pt_ckpt = "encoder.ckpt", pt_log = "loss_log.csv";
  auto* pt_method_opt = pt->add_option("--method", pt_method,
                                       "masking|autoencoder|contrastive|dino");
  auto* pt_loss_opt =
      pt->add_option("--loss", pt_loss, "nt-xent|infonce|swce|smooth-infonce");
  auto* pt_tau_opt = pt->add_option("--tau", pt_tau, "Contrastive temperature");
  auto* pt_lambda_opt = pt->add_option("--lambda", pt_lambda, "Smooth negatives weight");
  auto* pt_sym_opt = pt->add_option("--symmetrize", pt_symmetrize,
                                    "Average the loss over both view orderings");
  auto* pt_seed_opt = pt->add_option("--seed", pt_seed, "Run seed");
  auto* pt_epochs_opt = pt->add_option("--epochs", pt_epochs, "Pretraining epochs");
  auto* pt_batch_opt = pt->add_option("--batch-size", pt_batch, "Batch size");
  auto* pt_mask_opt = pt->add_option("--mask-size", pt_mask, "Masked span (masking method)");
  auto* pt_bb_opt = pt->add_option("--backbone", pt_backbone, "mlp|fcnn|transformer");
  auto* pt_ef_opt = pt->add_option("--eval-fraction", pt_eval_fraction,
                                   "Held-out fraction excluded from pretraining");
  auto* pt_pul_opt = pt->add_option("--pulses", pt_pulses, "Pulses CSV input");
  auto* pt_lab_opt = pt->add_option("--labels", pt_labels, "Labels CSV input");
  auto* pt_ckpt_opt = pt->add_option("--checkpoint", pt_ckpt, "Encoder checkpoint output");
  auto* pt_log_opt = pt->add_option("--loss-log", pt_log, "Batch-wise loss CSV output");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Supervised fine-tuning on annotated pulses");
  std::string ft_backbone = "transformer", ft_pulses = "pulses.csv", ft_labels = "labels.csv";
  std::string ft_ckpt, ft_model = "model", ft_log = "train_log.csv";
  double ft_fraction_pct = 10.0, ft_eval_fraction = 0.3;
  std::uint64_t ft_seed = 0;
  std::size_t ft_epochs = 50, ft_batch = 96, ft_patience = 10;
  bool ft_no_adasyn = false;
  auto* ft_bb_opt = ft->add_option("--backbone", ft_backbone, "mlp|fcnn|transformer");
  auto* ft_frac_opt = ft->add_option("--fraction", ft_fraction_pct,
                                     "Annotated fraction of the corpus, in percent");
  auto* ft_seed_opt = ft->add_option("--seed", ft_seed, "Run seed");
  auto* ft_epochs_opt = ft->add_option("--epochs", ft_epochs, "Max fine-tuning epochs");
  auto* ft_batch_opt = ft->add_option("--batch-size", ft_batch, "Batch size");
  auto* ft_pat_opt = ft->add_option("--patience", ft_patience, "Early-stop patience");
  auto* ft_ef_opt = ft->add_option("--eval-fraction", ft_eval_fraction, "Held-out fraction");
  ft->add_flag("--no-adasyn", ft_no_adasyn, "Disable minority oversampling");
  bool ft_freeze = false;
  ft->add_flag("--freeze-encoder", ft_freeze, "Train only the classifier head");
  auto* ft_pul_opt = ft->add_option("--pulses", ft_pulses, "Pulses CSV input");
  auto* ft_lab_opt = ft->add_option("--labels", ft_labels, "Labels CSV input");
  auto* ft_ckpt_opt = ft->add_option("--checkpoint", ft_ckpt,
                                     "Pretrained encoder checkpoint (omit to train from scratch)");
  auto* ft_model_opt = ft->add_option("--model", ft_model, "Output model prefix");
  auto* ft_log_opt = ft->add_option("--train-log", ft_log, "Epoch loss CSV output");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a fine-tuned model on the eval split");
  std::string ev_backbone = "transformer", ev_pulses = "pulses.csv", ev_labels = "labels.csv";
  std::string ev_model = "model", ev_metrics = "metrics.csv";
  double ev_eval_fraction = 0.3;
  std::uint64_t ev_seed = 0;
  auto* ev_bb_opt = ev->add_option("--backbone", ev_backbone, "mlp|fcnn|transformer");
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "Split seed used at fine-tuning time");
  auto* ev_ef_opt = ev->add_option("--eval-fraction", ev_eval_fraction, "Held-out fraction");
  auto* ev_pul_opt = ev->add_option("--pulses", ev_pulses, "Pulses CSV input");
  auto* ev_lab_opt = ev->add_option("--labels", ev_labels, "Labels CSV input");
  auto* ev_model_opt = ev->add_option("--model", ev_model, "Model prefix input");
  auto* ev_met_opt = ev->add_option("--metrics", ev_metrics, "Metrics CSV output");

  // grid
  auto* gr = app.add_subcommand("grid", "Run the backbone/paradigm/fraction/seed grid");
  std::string gr_backbones = "transformer";
  std::string gr_arms = "supervised,contrastive:smooth-infonce";
  std::string gr_fractions = "2.5,5,7.5,10";
  std::uint64_t gr_seeds = 3;
  std::string gr_pulses = "pulses.csv", gr_labels = "labels.csv";
  std::string gr_results = "results.csv", gr_summary = "summary.csv";
  double gr_eval_fraction = 0.3;
  auto* gr_bb_opt = gr->add_option("--backbones", gr_backbones, "Comma list of backbones");
  auto* gr_arms_opt =
      gr->add_option("--arms", gr_arms, "Comma list of paradigm[:loss] arms");
  auto* gr_frac_opt =
      gr->add_option("--fractions", gr_fractions, "Comma list of annotated percents");
  auto* gr_seeds_opt = gr->add_option("--seeds", gr_seeds, "Number of seeds (1..N)");
  auto* gr_ef_opt = gr->add_option("--eval-fraction", gr_eval_fraction, "Held-out fraction");
  auto* gr_pul_opt = gr->add_option("--pulses", gr_pulses, "Pulses CSV input");
  auto* gr_lab_opt = gr->add_option("--labels", gr_labels, "Labels CSV input");
  auto* gr_res_opt = gr->add_option("--results", gr_results, "Per-cell results CSV output");
  auto* gr_sum_opt = gr->add_option("--summary", gr_summary, "Median summary CSV output");

  // report
  auto* rp = app.add_subcommand("report", "Aggregate results and emit loss curves");
  std::string rp_results = "results.csv", rp_summary = "report_summary.csv";
  std::vector<std::string> rp_logs;
  std::string rp_batch = "curves_batchwise.csv", rp_epoch = "curves_epochwise.csv";
  auto* rp_res_opt = rp->add_option("--results", rp_results, "Results CSV input");
  auto* rp_sum_opt = rp->add_option("--summary", rp_summary, "Summary CSV output");
  rp->add_option("--loss-log", rp_logs, "Pretraining loss log CSV (repeatable)");
  rp->add_option("--batch-curves", rp_batch, "Batch-wise curve CSV output");
  rp->add_option("--epoch-curves", rp_epoch, "Epoch-wise curve CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorCategory::config);
  }

  try {
    ctx.load_config();
    const RunConfig& cfg = ctx.cfg;

    if (gen->parsed()) {
      SynthConfig scfg = make_synth_config(cfg);
      scfg.seed = resolve_seed(gen_seed_opt, gen_seed, cfg, "generate.seed", scfg.seed);
      scfg.n_signals = pick(gen_n_opt, gen_n, scfg.n_signals);
      scfg.duration_s = pick(gen_dur_opt, gen_dur, scfg.duration_s);
      scfg.artifact_fraction = pick(gen_art_opt, gen_artifacts, scfg.artifact_fraction);
      return cmd_generate(ctx, scfg,
                          pick_path(gen_sig_opt, gen_signals, cfg, "paths.signals",
                                    "signals.csv"),
                          pick_path(gen_gt_opt, gen_gt, cfg, "paths.ground_truth",
                                    "ground_truth.csv"));
    }
    if (pre->parsed()) {
      return cmd_preprocess(ctx, make_filter_spec(cfg), make_segment_config(cfg),
                            pick_path(pre_sig_opt, pre_signals, cfg, "paths.signals",
                                      "signals.csv"),
                            pick_path(pre_pul_opt, pre_pulses, cfg, "paths.pulses",
                                      "pulses.csv"));
    }
    if (ann->parsed()) {
      return cmd_annotate(ctx,
                          pick_path(ann_pul_opt, ann_pulses, cfg, "paths.pulses", "pulses.csv"),
                          pick_path(ann_lab_opt, ann_labels, cfg, "paths.labels",
                                    "labels.csv"));
    }
    if (pt->parsed()) {
      PretrainConfig pcfg;
      pcfg.paradigm =
          paradigm_from_string(pick(pt_method_opt, pt_method,
                                    cfg.get_str("pretrain.method", "contrastive")));
      pcfg.contrastive.kind =
          loss_from_cli(pick(pt_loss_opt, pt_loss,
                             cfg.get_str("pretrain.loss", "smooth-infonce")));
      pcfg.contrastive.tau = pick(pt_tau_opt, pt_tau, cfg.get_double("pretrain.tau", 0.1));
      pcfg.contrastive.lambda =
          pick(pt_lambda_opt, pt_lambda, cfg.get_double("pretrain.lambda", 0.5));
      pcfg.contrastive.symmetrize =
          pick(pt_sym_opt, pt_symmetrize,
               cfg.has("pretrain.symmetrize")
                   ? cfg.get_bool("pretrain.symmetrize", true)
                   : default_symmetrize(pcfg.contrastive.kind));
      pcfg.seed = resolve_seed(pt_seed_opt, pt_seed, cfg, "pretrain.seed", 0);
      pcfg.epochs = pick(pt_epochs_opt, pt_epochs,
                         static_cast<std::size_t>(cfg.get_int("pretrain.epochs", 30)));
      pcfg.batch_size = pick(pt_batch_opt, pt_batch,
                             static_cast<std::size_t>(cfg.get_int("pretrain.batch_size", 96)));
      pcfg.mask_size = pick(pt_mask_opt, pt_mask,
                            static_cast<std::size_t>(cfg.get_int("pretrain.mask_size", 64)));
      pcfg.augment = make_augment_config(cfg);
      pcfg.dino = make_dino_config(cfg);
      const std::string backbone =
          pick(pt_bb_opt, pt_backbone, cfg.get_str("pretrain.backbone", "transformer"));
      const double eval_fraction =
          pick(pt_ef_opt, pt_eval_fraction, cfg.get_double("finetune.eval_fraction", 0.3));
      return cmd_pretrain(ctx, pcfg, make_encoder_config(cfg, backbone), eval_fraction,
                          pick_path(pt_pul_opt, pt_pulses, cfg, "paths.pulses", "pulses.csv"),
                          pick_path(pt_lab_opt, pt_labels, cfg, "paths.labels", "labels.csv"),
                          pick_path(pt_ckpt_opt, pt_ckpt, cfg, "paths.checkpoint",
                                    "encoder.ckpt"),
                          pick_path(pt_log_opt, pt_log, cfg, "paths.loss_log",
                                    "loss_log.csv"));
    }
    if (ft->parsed()) {
      FinetuneConfig fcfg = make_finetune_config(cfg);
      fcfg.seed = resolve_seed(ft_seed_opt, ft_seed, cfg, "finetune.seed", 0);
      fcfg.epochs = pick(ft_epochs_opt, ft_epochs, fcfg.epochs);
      fcfg.batch_size = pick(ft_batch_opt, ft_batch, fcfg.batch_size);
      fcfg.patience = pick(ft_pat_opt, ft_patience, fcfg.patience);
      if (ft_no_adasyn) fcfg.use_adasyn = false;
      if (ft_freeze) fcfg.freeze_encoder = true;
      const std::string backbone =
          pick(ft_bb_opt, ft_backbone, cfg.get_str("finetune.backbone", "transformer"));
      const double eval_fraction =
          pick(ft_ef_opt, ft_eval_fraction, cfg.get_double("finetune.eval_fraction", 0.3));
      const double fraction_pct =
          pick(ft_frac_opt, ft_fraction_pct, cfg.get_double("finetune.fraction_pct", 10.0));
      return cmd_finetune(ctx, fcfg, make_encoder_config(cfg, backbone), eval_fraction,
                          fraction_pct,
                          pick_path(ft_pul_opt, ft_pulses, cfg, "paths.pulses", "pulses.csv"),
                          pick_path(ft_lab_opt, ft_labels, cfg, "paths.labels", "labels.csv"),
                          ft_ckpt_opt->count() > 0 ? ft_ckpt
                                                   : cfg.get_str("paths.checkpoint", ""),
                          pick_path(ft_model_opt, ft_model, cfg, "paths.model", "model"),
                          pick_path(ft_log_opt, ft_log, cfg, "paths.train_log",
                                    "train_log.csv"));
    }
    if (ev->parsed()) {
      const std::string backbone =
          pick(ev_bb_opt, ev_backbone, cfg.get_str("finetune.backbone", "transformer"));
      const double eval_fraction =
          pick(ev_ef_opt, ev_eval_fraction, cfg.get_double("finetune.eval_fraction", 0.3));
      const std::uint64_t seed = resolve_seed(ev_seed_opt, ev_seed, cfg, "finetune.seed", 0);
      return cmd_evaluate(ctx, make_encoder_config(cfg, backbone), seed, eval_fraction,
                          pick_path(ev_pul_opt, ev_pulses, cfg, "paths.pulses", "pulses.csv"),
                          pick_path(ev_lab_opt, ev_labels, cfg, "paths.labels", "labels.csv"),
                          pick_path(ev_model_opt, ev_model, cfg, "paths.model", "model"),
                          pick_path(ev_met_opt, ev_metrics, cfg, "paths.metrics",
                                    "metrics.csv"));
    }
    if (gr->parsed()) {
      GridConfig gcfg;
      gcfg.encoder = make_encoder_config(cfg, "transformer");
      PretrainConfig pcfg;
      pcfg.contrastive.tau = cfg.get_double("pretrain.tau", 0.1);
      pcfg.contrastive.lambda = cfg.get_double("pretrain.lambda", 0.5);
      pcfg.epochs = static_cast<std::size_t>(cfg.get_int("pretrain.epochs", 30));
      pcfg.batch_size = static_cast<std::size_t>(cfg.get_int("pretrain.batch_size", 96));
      pcfg.mask_size = static_cast<std::size_t>(cfg.get_int("pretrain.mask_size", 64));
      pcfg.augment = make_augment_config(cfg);
      pcfg.dino = make_dino_config(cfg);
      gcfg.pretrain = pcfg;
      gcfg.finetune = make_finetune_config(cfg);
      gcfg.eval_fraction =
          pick(gr_ef_opt, gr_eval_fraction, cfg.get_double("grid.eval_fraction", 0.3));
      return cmd_grid(ctx, gcfg,
                      pick(gr_bb_opt, gr_backbones, cfg.get_str("grid.backbones",
                                                                "transformer")),
                      pick(gr_arms_opt, gr_arms,
                           cfg.get_str("grid.arms", "supervised,contrastive:smooth-infonce")),
                      pick(gr_frac_opt, gr_fractions,
                           cfg.get_str("grid.fractions_pct", "2.5,5,7.5,10")),
                      pick(gr_seeds_opt, gr_seeds, cfg.get_u64("grid.seeds", 3)),
                      pick_path(gr_pul_opt, gr_pulses, cfg, "paths.pulses", "pulses.csv"),
                      pick_path(gr_lab_opt, gr_labels, cfg, "paths.labels", "labels.csv"),
                      pick_path(gr_res_opt, gr_results, cfg, "paths.results", "results.csv"),
                      pick_path(gr_sum_opt, gr_summary, cfg, "paths.summary", "summary.csv"));
    }
    if (rp->parsed()) {
      return cmd_report(ctx,
                        pick_path(rp_res_opt, rp_results, cfg, "paths.results", "results.csv"),
                        pick_path(rp_sum_opt, rp_summary, cfg, "paths.summary",
                                  "report_summary.csv"),
                        rp_logs, rp_batch, rp_epoch);
    }
    std::cerr << "error: no subcommand given\n";
    return exit_code_for(ErrorCategory::config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
