#include "pssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pssl/csv.hpp"
#include "pssl/dsp.hpp"
#include "pssl/errors.hpp"

namespace pssl {

// ---------------------------------------------------------------- masking

MaskResult mask_rows(const Tensor& rows, std::size_t mask_size, Prng& rng) {
  if (rows.rank() != 2) throw ShapeError("mask_rows: expected (N, len), got " + rows.shape_str());
  const std::size_t n = rows.dim(0), len = rows.dim(1);
  if (mask_size > len)
    throw MaskError("mask_rows: mask_size " + std::to_string(mask_size) +
                    " exceeds row length " + std::to_string(len));
  MaskResult r{rows, std::vector<std::size_t>(n, 0)};
  if (mask_size == 0) return r;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(len - mask_size)));
    r.positions[i] = pos;
    for (std::size_t j = pos; j < pos + mask_size; ++j) r.masked[i * len + j] = 0.0;
  }
  return r;
}

// ------------------------------------------------------ contrastive losses

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::nt_xent: return "nt_xent";
    case LossKind::info_nce: return "info_nce";
    case LossKind::swce: return "swce";
    case LossKind::smooth_info_nce: return "smooth_info_nce";
  }
  return "smooth_info_nce";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "nt_xent") return LossKind::nt_xent;
  if (s == "info_nce") return LossKind::info_nce;
  if (s == "swce") return LossKind::swce;
  if (s == "smooth_info_nce") return LossKind::smooth_info_nce;
  throw ConfigError("unknown loss kind '" + s + "'");
}

bool default_symmetrize(LossKind k) {
  return k == LossKind::nt_xent || k == LossKind::smooth_info_nce;
}

void ContrastiveParams::validate() const {
  if (!(tau > 0.0)) throw ConfigError("contrastive: tau must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("contrastive: lambda must satisfy lambda >= 0");
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_unit(const std::vector<double>& v, const char* who) {
  const double norm = std::sqrt(dot(v, v));
  if (std::abs(norm - 1.0) > 1e-6)
    throw ContractError(std::string(who) + ": input must be L2-normalized (norm deviates by " +
                        fmt_double(std::abs(norm - 1.0)) + ")");
}

}  // namespace

double contrastive_loss(const ContrastiveParams& params, const std::vector<double>& anchor,
                        const std::vector<double>& positive,
                        const std::vector<std::vector<double>>& negatives) {
  params.validate();
  if (anchor.size() != positive.size() || anchor.empty())
    throw ShapeError("contrastive_loss: anchor/positive dimension mismatch");
  require_unit(anchor, "contrastive_loss anchor");
  require_unit(positive, "contrastive_loss positive");
  for (const auto& n : negatives) {
    if (n.size() != anchor.size())
      throw ShapeError("contrastive_loss: negative dimension mismatch");
    require_unit(n, "contrastive_loss negative");
  }

  // At lambda = 0 the denominator holds only the positive term, so the
  // loss is identically zero (and so is its gradient); short-circuit
  // instead of relying on log(exp(x)) - x to cancel in floating point.
  if (params.kind == LossKind::smooth_info_nce && params.lambda == 0.0) return 0.0;

  const double s_pos = dot(anchor, positive) / params.tau;
  const bool anchored_on_positive = params.kind == LossKind::swce;
  const double w = params.kind == LossKind::smooth_info_nce ? params.lambda : 1.0;

  double denom = std::exp(s_pos);
  for (const auto& n : negatives) {
    const double s = dot(anchored_on_positive ? positive : anchor, n) / params.tau;
    denom += w * std::exp(s);
  }
  const double loss = std::log(denom) - s_pos;
  if (!std::isfinite(loss)) throw NumericsError("contrastive_loss: non-finite loss");
  return loss;
}

namespace {

void require_unit_rows(Tape& t, Var z, const char* who) {
  const Tensor& v = t.value(z);
  const std::size_t m = v.dim(0), d = v.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += v[i * d + j] * v[i * d + j];
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
      throw ContractError(std::string(who) + ": row " + std::to_string(i) +
                          " is not L2-normalized");
  }
}

}  // namespace

Var batch_contrastive_loss(Tape& t, const ContrastiveParams& params, Var z1, Var z2) {
  params.validate();
  const Tensor& v1 = t.value(z1);
  const Tensor& v2 = t.value(z2);
  if (v1.rank() != 2 || v2.rank() != 2) throw ShapeError("batch_contrastive_loss: views must be rank-2");
  require_same_shape(v1, v2, "batch_contrastive_loss");
  const std::size_t n = v1.dim(0);
  if (n < 2) throw DataError("batch_contrastive_loss: batch must hold at least 2 pulses");
  require_unit_rows(t, z1, "batch_contrastive_loss z1");
  require_unit_rows(t, z2, "batch_contrastive_loss z2");

  // See contrastive_loss: lambda = 0 strips the denominator down to the
  // positive, making the loss identically zero with zero gradient. Return
  // an exact constant rather than log(exp(pos)) - pos, which leaves 1-ulp
  // residue for many inputs.
  if (params.kind == LossKind::smooth_info_nce && params.lambda == 0.0)
    return t.constant(Tensor::scalar(0.0));

  const std::size_t rows = 2 * n;
  Var zcat = concat_rows(t, z1, z2);
  Var logits = scale(t, matmul(t, zcat, transpose(t, zcat)), 1.0 / params.tau);
  Var expl = exp_op(t, logits);

  // Partner selector: row i pairs with row (i + n) mod 2n.
  Tensor pos_sel({rows, rows}, 0.0);
  for (std::size_t i = 0; i < rows; ++i) pos_sel[i * rows + ((i + n) % rows)] = 1.0;

  if (params.kind == LossKind::swce) {
    // Denominator anchored on the positive: for anchor i (a first-view
    // row), sum exp(sim(z2_i, z1_k)/tau) over all first-view k. Rows of
    // the weight matrix below n select a harmless self term; those rows
    // are zeroed out of the final average.
    Tensor dw({rows, rows}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      dw[i * rows + i] = 1.0;  // unused filler keeping log() finite
      for (std::size_t k = 0; k < n; ++k) dw[(n + i) * rows + k] = 1.0;
    }
    Var denom = sum_rows(t, mul(t, expl, t.constant(std::move(dw))));
    Var logd = log_op(t, denom);
    Tensor hi({rows}, 0.0), lo({rows}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      hi[n + i] = 1.0 / static_cast<double>(n);
      lo[i] = 1.0 / static_cast<double>(n);
    }
    Var pos = sum_rows(t, mul(t, logits, t.constant(pos_sel)));
    Var dir1 = sub(t, sum_all(t, mul(t, logd, t.constant(std::move(hi)))),
                   sum_all(t, mul(t, pos, t.constant(std::move(lo)))));
    if (!params.symmetrize) return dir1;
    // Mirrored direction: anchors on the second view, denominator over
    // second-view columns from first-view rows.
    Tensor dw2({rows, rows}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      dw2[(n + i) * rows + (n + i)] = 1.0;
      for (std::size_t k = 0; k < n; ++k) dw2[i * rows + (n + k)] = 1.0;
    }
    Var denom2 = sum_rows(t, mul(t, expl, t.constant(std::move(dw2))));
    Var logd2 = log_op(t, denom2);
    Tensor hi2({rows}, 0.0), lo2({rows}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      hi2[i] = 1.0 / static_cast<double>(n);
      lo2[n + i] = 1.0 / static_cast<double>(n);
    }
    Var pos2 = sum_rows(t, mul(t, logits, t.constant(pos_sel)));
    Var dir2 = sub(t, sum_all(t, mul(t, logd2, t.constant(std::move(hi2)))),
                   sum_all(t, mul(t, pos2, t.constant(std::move(lo2)))));
    return scale(t, add(t, dir1, dir2), 0.5);
  }

  // NCE family: weighted denominator over the similarity row.
  const double neg_w = params.kind == LossKind::smooth_info_nce ? params.lambda : 1.0;
  Tensor dw({rows, rows}, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t partner = (i + n) % rows;
    for (std::size_t j = 0; j < rows; ++j) {
      if (j == i) continue;  // self excluded
      if (j == partner) {
        dw[i * rows + j] = 1.0;
      } else if (params.kind == LossKind::nt_xent) {
        dw[i * rows + j] = 1.0;  // every other view stays in the denominator
      } else if (j != i % n && j != (i % n) + n) {
        dw[i * rows + j] = neg_w;  // other-source views are the negatives
      }
    }
  }
  Var denom = sum_rows(t, mul(t, expl, t.constant(std::move(dw))));
  Var pos = sum_rows(t, mul(t, logits, t.constant(std::move(pos_sel))));
  Var per_row = sub(t, log_op(t, denom), pos);
  if (params.symmetrize) return mean_all(t, per_row);
  Tensor first({rows}, 0.0);
  for (std::size_t i = 0; i < n; ++i) first[i] = 1.0 / static_cast<double>(n);
  return sum_all(t, mul(t, per_row, t.constant(std::move(first))));
}

// ------------------------------------------------------------ augmentation

void AugmentConfig::validate() const {
  if (jitter_sigma < 0.0) throw ConfigError("augment: jitter_sigma must be non-negative");
  if (!(scale_lo > 0.0) || !(scale_hi >= scale_lo))
    throw ConfigError("augment: scale range must satisfy 0 < lo <= hi");
  if (mask_prob < 0.0 || mask_prob > 1.0)
    throw ConfigError("augment: mask_prob must lie in [0, 1]");
}

Tensor augment_view(const Tensor& rows, const AugmentConfig& cfg, Prng& rng) {
  cfg.validate();
  if (rows.rank() != 2) throw ShapeError("augment_view: expected (N, len)");
  const std::size_t n = rows.dim(0), len = rows.dim(1);
  if (cfg.mask_size > len) throw MaskError("augment_view: mask_size exceeds row length");

  Tensor out({n, len});
  std::vector<double> work(len);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < len; ++j) work[j] = rows[i * len + j];
    if (cfg.jitter_sigma > 0.0)
      for (double& v : work) v += rng.normal(0.0, cfg.jitter_sigma);
    const double amp = rng.uniform_real(cfg.scale_lo, cfg.scale_hi);
    for (double& v : work) v *= amp;
    if (cfg.max_shift > 0) {
      const auto k = rng.uniform_int(-static_cast<std::int64_t>(cfg.max_shift),
                                     static_cast<std::int64_t>(cfg.max_shift));
      std::vector<double> shifted(len);
      for (std::size_t j = 0; j < len; ++j) {
        const auto src = static_cast<std::size_t>(
            ((static_cast<std::int64_t>(j) - k) % static_cast<std::int64_t>(len) +
             static_cast<std::int64_t>(len)) %
            static_cast<std::int64_t>(len));
        shifted[j] = work[src];
      }
      work = std::move(shifted);
    }
    if (cfg.mask_size > 0 && cfg.mask_prob > 0.0 && rng.bernoulli(cfg.mask_prob)) {
      const auto pos = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(len - cfg.mask_size)));
      for (std::size_t j = pos; j < pos + cfg.mask_size; ++j) work[j] = 0.0;
    }
    z_normalize(work);
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = work[j];
  }
  return out;
}

// ------------------------------------------------------------------- DINO

namespace {

void copy_param_values(ParamSet& dst, const ParamSet& src) {
  ParamSet::ema_update(dst, src, 0.0);  // target <- source exactly
}

std::vector<Param*> concat_params(std::vector<Param*> a, const std::vector<Param*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<const Tensor*> concat_grads(std::vector<const Tensor*> a,
                                        const std::vector<const Tensor*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

DinoState make_dino_state(const EncoderConfig& enc_cfg, Encoder& student,
                          const LinearHead& student_head, const DinoConfig& cfg, Prng& rng) {
  cfg.validate();
  if (student_head.out_dim() != cfg.out_dim)
    throw ShapeError("make_dino_state: student head width " +
                     std::to_string(student_head.out_dim()) + " != out_dim " +
                     std::to_string(cfg.out_dim));
  DinoState state;
  state.cfg = cfg;
  state.teacher = make_encoder(enc_cfg, rng);
  state.teacher_head =
      std::make_unique<LinearHead>("dino", student.embed_dim(), cfg.out_dim, rng);
  copy_param_values(state.teacher->params(), student.params());
  copy_param_values(state.teacher_head->params(), student_head.params());
  state.center = Tensor({cfg.out_dim}, 0.0);
  return state;
}

double dino_step(DinoState& state, Encoder& student, LinearHead& student_head, Adam& adam,
                 const Tensor& view1, const Tensor& view2, Prng& rng) {
  const std::size_t k = state.cfg.out_dim;
  if (student_head.out_dim() != k || state.teacher_head->out_dim() != k ||
      state.center.numel() != k)
    throw ShapeError("dino_step: head output width does not match the teacher state");

  // Teacher targets: centered, sharpened softmax; no gradient.
  Tape ttape;
  Binding tbe(ttape, state.teacher->params());
  Binding tbh(ttape, state.teacher_head->params());
  Var t1 = state.teacher_head->forward(
      ttape, tbh, state.teacher->encode(ttape, tbe, view1, Mode::eval, rng));
  Var t2 = state.teacher_head->forward(
      ttape, tbh, state.teacher->encode(ttape, tbe, view2, Mode::eval, rng));
  const Tensor traw1 = ttape.value(t1);
  const Tensor traw2 = ttape.value(t2);
  auto sharpen = [&](const Tensor& raw) {
    Tensor p = raw;
    const std::size_t b = raw.dim(0);
    for (std::size_t i = 0; i < b; ++i) {
      double mx = -1e300;
      for (std::size_t j = 0; j < k; ++j) {
        p[i * k + j] = (raw[i * k + j] - state.center[j]) / state.cfg.tau_t;
        mx = std::max(mx, p[i * k + j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        p[i * k + j] = std::exp(p[i * k + j] - mx);
        denom += p[i * k + j];
      }
      for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= denom;
    }
    return p;
  };
  Tensor p1 = sharpen(traw1);
  Tensor p2 = sharpen(traw2);

  Tape tape;
  Binding be(tape, student.params());
  Binding bh(tape, student_head.params());
  Var s1 = student_head.forward(tape, bh, student.encode(tape, be, view1, Mode::train, rng));
  Var s2 = student_head.forward(tape, bh, student.encode(tape, be, view2, Mode::train, rng));
  auto h_term = [&](const Tensor& p, Var s) {
    Var ls = log_softmax_rows(tape, scale(tape, s, 1.0 / state.cfg.tau_s));
    return scale(tape, mean_all(tape, sum_rows(tape, mul(tape, tape.constant(p), ls))), -1.0);
  };
  Var loss = scale(tape, add(tape, h_term(p1, s2), h_term(p2, s1)), 0.5);
  tape.backward(loss);
  adam.step(concat_params(be.params(), bh.params()),
            concat_grads(be.grads(tape), bh.grads(tape)));

  // Teacher EMA and center update from the raw teacher outputs.
  ParamSet::ema_update(state.teacher->params(), student.params(), state.cfg.momentum);
  ParamSet::ema_update(state.teacher_head->params(), student_head.params(),
                       state.cfg.momentum);
  Tensor cbatch({k}, 0.0);
  const std::size_t rows_total = traw1.dim(0) + traw2.dim(0);
  for (std::size_t i = 0; i < traw1.dim(0); ++i)
    for (std::size_t j = 0; j < k; ++j) cbatch[j] += traw1[i * k + j];
  for (std::size_t i = 0; i < traw2.dim(0); ++i)
    for (std::size_t j = 0; j < k; ++j) cbatch[j] += traw2[i * k + j];
  for (std::size_t j = 0; j < k; ++j) {
    cbatch[j] /= static_cast<double>(rows_total);
    state.center[j] = state.cfg.center_momentum * state.center[j] +
                      (1.0 - state.cfg.center_momentum) * cbatch[j];
  }
  return tape.value(loss)[0];
}

void DinoConfig::validate() const {
  if (!(tau_s > 0.0) || !(tau_t > 0.0)) throw ConfigError("dino: temperatures must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("dino: teacher momentum must lie in [0, 1)");
  if (center_momentum < 0.0 || center_momentum >= 1.0)
    throw ConfigError("dino: center momentum must lie in [0, 1)");
  if (out_dim == 0) throw ConfigError("dino: out_dim must be positive");
}

// --------------------------------------------------------------- training

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::masking: return "masking";
    case Paradigm::autoencoder: return "autoencoder";
    case Paradigm::contrastive: return "contrastive";
    case Paradigm::dino: return "dino";
    case Paradigm::supervised: return "supervised";
  }
  return "contrastive";
}

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "masking") return Paradigm::masking;
  if (s == "autoencoder") return Paradigm::autoencoder;
  if (s == "contrastive") return Paradigm::contrastive;
  if (s == "dino") return Paradigm::dino;
  if (s == "supervised") return Paradigm::supervised;
  throw ConfigError("unknown paradigm '" + s + "'");
}

void write_loss_log_csv(const std::string& path, const std::vector<LossLogRow>& rows) {
  std::vector<std::vector<std::string>> csv;
  csv.reserve(rows.size() + 1);
  csv.push_back({"paradigm", "loss_kind", "epoch", "batch", "loss"});
  for (const LossLogRow& r : rows)
    csv.push_back({r.paradigm, r.loss_kind, std::to_string(r.epoch), std::to_string(r.batch),
                   fmt_double(r.loss)});
  write_csv(path, csv);
}

std::vector<LossLogRow> read_loss_log_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty loss log");
  std::vector<LossLogRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw DataError(path + ": row " + std::to_string(i) + " must have 5 fields");
    LossLogRow row;
    row.paradigm = r[0];
    row.loss_kind = r[1];
    row.epoch = static_cast<std::size_t>(parse_int(r[2], path + " epoch"));
    row.batch = static_cast<std::size_t>(parse_int(r[3], path + " batch"));
    row.loss = parse_double(r[4], path + " loss");
    out.push_back(std::move(row));
  }
  return out;
}

void PretrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("pretrain: epochs must be positive");
  if (batch_size == 0) throw ConfigError("pretrain: batch_size must be positive");
  if ((paradigm == Paradigm::contrastive || paradigm == Paradigm::dino) && batch_size < 2)
    throw ConfigError("pretrain: contrastive and dino need batch_size >= 2");
  if (paradigm == Paradigm::supervised)
    throw ConfigError("pretrain: supervised is a fine-tuning paradigm");
  contrastive.validate();
  augment.validate();
  dino.validate();
}

namespace {

Tensor gather_rows(const Tensor& data, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t count) {
  const std::size_t len = data.dim(1);
  Tensor out({count, len});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[begin + i];
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = data[src * len + j];
  }
  return out;
}

}  // namespace

std::vector<LossLogRow> pretrain(Encoder& encoder, const EncoderConfig& enc_cfg,
                                 const Tensor& data, const PretrainConfig& cfg) {
  cfg.validate();
  if (data.rank() != 2 || data.dim(1) != enc_cfg.input_len)
    throw ShapeError("pretrain: data must be (N, input_len)");
  const std::size_t n = data.dim(0);
  if (n == 0) throw DataError("pretrain: empty dataset");

  Prng root(cfg.seed);
  Prng init_rng = root.split(0xabef01);
  const std::string paradigm_name = to_string(cfg.paradigm);

  Adam adam(AdamConfig{backbone_lr(enc_cfg), 0.9, 0.999, 1e-8});
  std::vector<LossLogRow> logs;

  // Paradigm-specific heads; unused ones stay empty.
  std::unique_ptr<LinearHead> decoder, projector, student_head;
  DinoState dino;
  std::string kind_name;

  switch (cfg.paradigm) {
    case Paradigm::masking:
    case Paradigm::autoencoder:
      decoder = std::make_unique<LinearHead>("dec", encoder.embed_dim(), enc_cfg.input_len,
                                             init_rng);
      kind_name = "mse";
      break;
    case Paradigm::contrastive:
      projector = std::make_unique<LinearHead>("proj", encoder.embed_dim(), 32, init_rng);
      kind_name = to_string(cfg.contrastive.kind);
      break;
    case Paradigm::dino: {
      student_head = std::make_unique<LinearHead>("dino", encoder.embed_dim(),
                                                  cfg.dino.out_dim, init_rng);
      Prng teacher_rng = root.split(0x7eac);
      dino = make_dino_state(enc_cfg, encoder, *student_head, cfg.dino, teacher_rng);
      kind_name = "dino_ce";
      break;
    }
    case Paradigm::supervised:
      throw ConfigError("pretrain: supervised is a fine-tuning paradigm");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Prng shuffle_rng = root.split(1 + epoch);
    shuffle_rng.shuffle(order);
    Prng rng = root.split(0x10000 + epoch);  // augmentation, masks, dropout

    std::size_t batch_idx = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      const bool needs_pairs =
          cfg.paradigm == Paradigm::contrastive || cfg.paradigm == Paradigm::dino;
      if (needs_pairs && count < 2) break;  // a length-1 tail has no negatives
      Tensor batch = gather_rows(data, order, begin, count);

      double loss_value = 0.0;
      switch (cfg.paradigm) {
        case Paradigm::masking:
        case Paradigm::autoencoder: {
          Tensor input = batch;
          if (cfg.paradigm == Paradigm::masking)
            input = mask_rows(batch, cfg.mask_size, rng).masked;
          Tape tape;
          Binding be(tape, encoder.params());
          Binding bd(tape, decoder->params());
          Var emb = encoder.encode(tape, be, input, Mode::train, rng);
          Var recon = decoder->forward(tape, bd, emb);
          Var loss = mse_loss(tape, recon, tape.constant(batch));
          tape.backward(loss);
          adam.step(concat_params(be.params(), bd.params()),
                    concat_grads(be.grads(tape), bd.grads(tape)));
          loss_value = tape.value(loss)[0];
          break;
        }
        case Paradigm::contrastive: {
          Tensor v1 = augment_view(batch, cfg.augment, rng);
          Tensor v2 = augment_view(batch, cfg.augment, rng);
          Tape tape;
          Binding be(tape, encoder.params());
          Binding bp(tape, projector->params());
          Var z1 = l2_normalize_rows(
              tape, projector->forward(tape, bp, encoder.encode(tape, be, v1, Mode::train, rng)));
          Var z2 = l2_normalize_rows(
              tape, projector->forward(tape, bp, encoder.encode(tape, be, v2, Mode::train, rng)));
          Var loss = batch_contrastive_loss(tape, cfg.contrastive, z1, z2);
          tape.backward(loss);
          adam.step(concat_params(be.params(), bp.params()),
                    concat_grads(be.grads(tape), bp.grads(tape)));
          loss_value = tape.value(loss)[0];
          break;
        }
        case Paradigm::dino: {
          Tensor v1 = augment_view(batch, cfg.augment, rng);
          Tensor v2 = augment_view(batch, cfg.augment, rng);
          loss_value = dino_step(dino, encoder, *student_head, adam, v1, v2, rng);
          break;
        }
        case Paradigm::supervised:
          break;  // unreachable; rejected by validate()
      }

      logs.push_back({paradigm_name, kind_name, epoch, batch_idx, loss_value});
      ++batch_idx;
    }
  }
  return logs;
}

}  // namespace pssl
