#include "pssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <utility>

#include "pssl/csv.hpp"
#include "pssl/errors.hpp"
#include "pssl/optim.hpp"

namespace pssl {

void FinetuneConfig::validate() const {
  if (epochs == 0) throw ConfigError("finetune: epochs must be positive");
  if (batch_size == 0) throw ConfigError("finetune: batch_size must be positive");
  if (min_delta < 0.0) throw ConfigError("finetune: min_delta must be non-negative");
  adasyn.validate();
}

FinetuneOutcome finetune(Encoder& encoder, const EncoderConfig& enc_cfg,
                         const std::vector<PulseRecord>& records,
                         const std::vector<std::size_t>& train_idx, const FinetuneConfig& cfg) {
  cfg.validate();
  if (train_idx.empty()) throw DataError("finetune: no training records selected");
  for (const std::size_t i : train_idx)
    if (records.at(i).split != Split::train)
      throw ContractError("finetune: record " + std::to_string(i) +
                          " is not in the train split");

  FinetuneOutcome out;
  Tensor x = gather_values(records, train_idx, &out.access);
  const std::vector<int> y_int = gather_labels(records, train_idx, true, &out.access);

  if (std::find(y_int.begin(), y_int.end(), 0) == y_int.end() ||
      std::find(y_int.begin(), y_int.end(), 1) == y_int.end())
    throw DataError("finetune: labeled subset contains a single class");

  Prng root(cfg.seed);
  std::vector<std::size_t> y;
  y.reserve(y_int.size());
  for (const int l : y_int) y.push_back(static_cast<std::size_t>(l));

  // Rebalance before the first epoch; synthetic rows join the pool.
  if (cfg.use_adasyn) {
    Prng arng = root.split(0xada);
    const AdasynResult ar = adasyn(x, y_int, cfg.adasyn, arng);
    const std::size_t g = ar.synthetic.dim(0);
    if (g > 0) {
      const std::size_t d = x.dim(1), n0 = x.dim(0);
      Tensor merged({n0 + g, d});
      std::copy(x.data(), x.data() + n0 * d, merged.data());
      std::copy(ar.synthetic.data(), ar.synthetic.data() + g * d, merged.data() + n0 * d);
      x = std::move(merged);
      y.insert(y.end(), g, static_cast<std::size_t>(ar.minority_label));
      out.synthetic_samples = g;
    }
  }

  const std::size_t n = x.dim(0);
  Prng init_rng = root.split(0x4ead);
  out.head = std::make_unique<LinearHead>("cls", encoder.embed_dim(), 2, init_rng);
  Adam adam(AdamConfig{backbone_lr(enc_cfg), 0.9, 0.999, 1e-8});

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Prng shuffle_rng = root.split(1 + epoch);
    shuffle_rng.shuffle(order);
    Prng rng = root.split(0x10000 + epoch);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      const std::size_t len = x.dim(1);
      Tensor batch({count, len});
      std::vector<std::size_t> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        for (std::size_t j = 0; j < len; ++j) batch[i * len + j] = x[src * len + j];
        labels[i] = y[src];
      }
      Tape tape;
      Binding be(tape, encoder.params());
      Binding bh(tape, out.head->params());
      const Mode mode = cfg.freeze_encoder ? Mode::eval : Mode::train;
      Var logits = out.head->forward(tape, bh, encoder.encode(tape, be, batch, mode, rng));
      Var loss = cross_entropy_loss(tape, logits, labels);
      tape.backward(loss);
      if (cfg.freeze_encoder) {
        adam.step(bh.params(), bh.grads(tape));
      } else {
        adam.step([&] {
          std::vector<Param*> p = be.params();
          const auto& hp = bh.params();
          p.insert(p.end(), hp.begin(), hp.end());
          return p;
        }(), [&] {
          std::vector<const Tensor*> g = be.grads(tape);
          const auto hg = bh.grads(tape);
          g.insert(g.end(), hg.begin(), hg.end());
          return g;
        }());
      }
      loss_sum += tape.value(loss)[0];
      ++batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    out.epoch_losses.push_back(epoch_loss);

    if (epoch_loss < best - cfg.min_delta) {
      best = epoch_loss;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }
  return out;
}

std::vector<int> predict(Encoder& encoder, const LinearHead& head, const Tensor& values) {
  if (values.rank() != 2) throw ShapeError("predict: values must be (n, len)");
  const std::size_t n = values.dim(0), len = values.dim(1);
  std::vector<int> out;
  out.reserve(n);
  Prng rng(0);  // eval mode draws nothing
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    Tensor batch({count, len});
    std::copy(values.data() + begin * len, values.data() + (begin + count) * len,
              batch.data());
    Tape tape;
    Binding be(tape, encoder.params());
    Binding bh(tape, const_cast<LinearHead&>(head).params());
    Var logits = head.forward(tape, bh, encoder.encode(tape, be, batch, Mode::eval, rng));
    const Tensor& lv = tape.value(logits);
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(lv[i * 2 + 1] > lv[i * 2 + 0] ? 1 : 0);
  }
  return out;
}

ClsMetrics evaluate(Encoder& encoder, const LinearHead& head,
                    const std::vector<PulseRecord>& records,
                    const std::vector<std::size_t>& idx) {
  const Tensor x = gather_values(records, idx);
  const std::vector<int> y = gather_labels(records, idx, false);
  return classification_metrics(y, predict(encoder, head, x));
}

// ------------------------------------------------------------------- grid

void GridConfig::validate() const {
  if (backbones.empty() || arms.empty() || fractions.empty() || seeds.empty())
    throw ConfigError("grid: backbones, arms, fractions, and seeds must be non-empty");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
    throw ConfigError("grid: eval_fraction must lie in (0, 1)");
  finetune.validate();
}

namespace {

std::vector<Tensor> snapshot_values(const ParamSet& set) {
  std::vector<Tensor> out;
  out.reserve(set.items().size());
  for (const Param& p : set.items()) out.push_back(p.value);
  return out;
}

void restore_values(ParamSet& set, const std::vector<Tensor>& snap) {
  auto& items = set.items();
  if (items.size() != snap.size()) throw ContractError("restore_values: parameter count drift");
  for (std::size_t i = 0; i < items.size(); ++i) items[i].value = snap[i];
}

}  // namespace

std::vector<GridRow> run_grid(const std::vector<PulseRecord>& base_records,
                              const GridConfig& cfg) {
  cfg.validate();
  std::vector<GridRow> rows;

  for (const Backbone backbone : cfg.backbones) {
    EncoderConfig enc_cfg = cfg.encoder;
    enc_cfg.backbone = backbone;

    for (const GridArm& arm : cfg.arms) {
      for (const std::uint64_t seed : cfg.seeds) {
        std::vector<PulseRecord> records = base_records;
        apply_split(records, cfg.eval_fraction, seed);
        const std::vector<std::size_t> train_all = indices_of(records, Split::train);
        const std::vector<std::size_t> eval_idx = indices_of(records, Split::eval);

        // One pretraining per (backbone, arm, seed), shared by fractions.
        Prng enc_rng = Prng(seed).split(0xe0c + static_cast<std::uint64_t>(backbone));
        auto encoder = make_encoder(enc_cfg, enc_rng);
        if (arm.paradigm != Paradigm::supervised) {
          PretrainConfig pre = cfg.pretrain;
          pre.paradigm = arm.paradigm;
          pre.contrastive.kind = arm.loss;
          pre.contrastive.symmetrize = default_symmetrize(arm.loss);
          pre.seed = seed;
          const Tensor train_values = gather_values(records, train_all);
          pretrain(*encoder, enc_cfg, train_values, pre);
        }
        const std::vector<Tensor> snap = snapshot_values(encoder->params());

        for (const double fraction : cfg.fractions) {
          mark_annotated(records, fraction, seed);
          restore_values(encoder->params(), snap);

          FinetuneConfig ft = cfg.finetune;
          ft.seed = seed;
          const auto annotated = annotated_train_indices(records);
          FinetuneOutcome outcome = finetune(*encoder, enc_cfg, records, annotated, ft);

          GridRow row;
          row.backbone = to_string(backbone);
          row.paradigm = to_string(arm.paradigm);
          row.loss_kind = arm.paradigm == Paradigm::contrastive ? to_string(arm.loss) : "none";
          row.fraction = fraction;
          row.seed = seed;
          row.metrics = evaluate(*encoder, *outcome.head, records, eval_idx);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

void write_results_csv(const std::string& path, const std::vector<GridRow>& rows) {
  std::vector<std::vector<std::string>> csv;
  csv.reserve(rows.size() + 1);
  csv.push_back({"backbone", "paradigm", "loss_kind", "fraction", "seed", "accuracy",
                 "precision", "recall", "f1"});
  for (const GridRow& r : rows)
    csv.push_back({r.backbone, r.paradigm, r.loss_kind, fmt_double(r.fraction),
                   std::to_string(r.seed), fmt_double(r.metrics.accuracy),
                   fmt_double(r.metrics.precision), fmt_double(r.metrics.recall),
                   fmt_double(r.metrics.f1)});
  write_csv(path, csv);
}

std::vector<GridRow> read_results_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty results file");
  std::vector<GridRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 9) throw DataError(path + ": row " + std::to_string(i) + " needs 9 fields");
    GridRow g;
    g.backbone = r[0];
    g.paradigm = r[1];
    g.loss_kind = r[2];
    g.fraction = parse_double(r[3], path + " fraction");
    g.seed = static_cast<std::uint64_t>(parse_int(r[4], path + " seed"));
    g.metrics.accuracy = parse_double(r[5], path + " accuracy");
    g.metrics.precision = parse_double(r[6], path + " precision");
    g.metrics.recall = parse_double(r[7], path + " recall");
    g.metrics.f1 = parse_double(r[8], path + " f1");
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<GridSummaryRow> summarize_grid(const std::vector<GridRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, std::vector<const GridRow*>> groups;
  for (const GridRow& r : rows)
    groups[{r.backbone, r.paradigm, r.loss_kind, r.fraction}].push_back(&r);

  std::vector<GridSummaryRow> out;
  out.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    GridSummaryRow s;
    std::tie(s.backbone, s.paradigm, s.loss_kind, s.fraction) = key;
    s.n_seeds = members.size();
    std::vector<double> acc, pre, rec, f1;
    for (const GridRow* r : members) {
      acc.push_back(r->metrics.accuracy);
      pre.push_back(r->metrics.precision);
      rec.push_back(r->metrics.recall);
      f1.push_back(r->metrics.f1);
    }
    s.med.accuracy = median(acc);
    s.med.precision = median(pre);
    s.med.recall = median(rec);
    s.med.f1 = median(f1);
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<GridSummaryRow>& rows) {
  std::vector<std::vector<std::string>> csv;
  csv.reserve(rows.size() + 1);
  csv.push_back({"backbone", "paradigm", "loss_kind", "fraction", "n_seeds", "accuracy_median",
                 "precision_median", "recall_median", "f1_median"});
  for (const GridSummaryRow& r : rows)
    csv.push_back({r.backbone, r.paradigm, r.loss_kind, fmt_double(r.fraction),
                   std::to_string(r.n_seeds), fmt_double(r.med.accuracy),
                   fmt_double(r.med.precision), fmt_double(r.med.recall),
                   fmt_double(r.med.f1)});
  write_csv(path, csv);
}

}  // namespace pssl
