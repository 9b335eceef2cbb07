#include "pssl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include "binio.hpp"
#include "pssl/csv.hpp"
#include "pssl/errors.hpp"
#include "pssl/prng.hpp"

namespace pssl {

std::string to_string(Split s) { return s == Split::train ? "train" : "eval"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  throw DataError("unknown split '" + s + "'");
}

std::vector<PulseRecord> assemble_records(const std::vector<SegmentedPulse>& pulses,
                                          const std::vector<LabelRow>& labels) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, bool> by_key;
  for (const LabelRow& l : labels) by_key[{l.signal_id, l.pulse_index}] = l.artifact;

  std::vector<PulseRecord> out;
  out.reserve(pulses.size());
  for (const SegmentedPulse& p : pulses) {
    const auto it = by_key.find({p.signal_id, p.pulse_index});
    if (it == by_key.end())
      throw DataError("assemble_records: no label for signal " + std::to_string(p.signal_id) +
                      " pulse " + std::to_string(p.pulse_index));
    PulseRecord r;
    r.signal_id = p.signal_id;
    r.pulse_index = p.pulse_index;
    r.values = p.values;
    z_normalize(r.values);
    r.label = it->second ? 1 : 0;
    out.push_back(std::move(r));
  }
  return out;
}

void apply_split(std::vector<PulseRecord>& records, double eval_fraction, std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction > 1.0)
    throw ConfigError("apply_split: eval_fraction must lie in [0, 1]");
  const std::size_t n = records.size();
  const auto n_eval = static_cast<std::size_t>(
      std::llround(eval_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Prng rng(seed);
  rng.shuffle(order);
  for (std::size_t i = 0; i < n; ++i)
    records[order[i]].split = i < n_eval ? Split::eval : Split::train;
}

void mark_annotated(std::vector<PulseRecord>& records, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("mark_annotated: fraction must lie in (0, 1]");
  for (PulseRecord& r : records) r.annotated = false;
  std::vector<std::size_t> train = indices_of(records, Split::train);
  Prng rng = Prng(seed).split(0x616e6e6f74);  // decoupled from the split shuffle
  rng.shuffle(train);
  auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(records.size())));
  count = std::min(count, train.size());
  if (count == 0) throw DataError("mark_annotated: fraction yields zero annotated pulses");
  for (std::size_t i = 0; i < count; ++i) records[train[i]].annotated = true;
}

std::vector<std::size_t> indices_of(const std::vector<PulseRecord>& records, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::vector<std::size_t> annotated_train_indices(const std::vector<PulseRecord>& records) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == Split::train && records[i].annotated) out.push_back(i);
  return out;
}

Tensor gather_values(const std::vector<PulseRecord>& records,
                     const std::vector<std::size_t>& idx, AccessLog* log) {
  if (idx.empty()) throw DataError("gather_values: empty selection");
  const std::size_t len = records.at(idx[0]).values.size();
  Tensor out({idx.size(), len});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const PulseRecord& r = records.at(idx[i]);
    if (r.values.size() != len) throw ShapeError("gather_values: ragged pulse lengths");
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = r.values[j];
    if (log) log->value_reads.push_back(idx[i]);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<PulseRecord>& records,
                               const std::vector<std::size_t>& idx, bool require_annotated,
                               AccessLog* log) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) {
    const PulseRecord& r = records.at(i);
    if (require_annotated && !r.annotated)
      throw ContractError("gather_labels: label of un-annotated record " + std::to_string(i) +
                          " requested during training");
    out.push_back(r.label);
    if (log) log->label_reads.push_back(i);
  }
  return out;
}

// ------------------------------------------------------------------ CSV IO

void write_dataset_csv(const std::string& path, const std::vector<PulseRecord>& records) {
  if (records.empty()) throw DataError("write_dataset_csv: no records");
  const std::size_t len = records[0].values.size();
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size() + 1);
  std::vector<std::string> header = {"signal_id", "pulse_index", "label", "split", "annotated"};
  for (std::size_t j = 0; j < len; ++j) header.push_back("v" + std::to_string(j));
  rows.push_back(std::move(header));
  for (const PulseRecord& r : records) {
    if (r.values.size() != len) throw ShapeError("write_dataset_csv: ragged pulse lengths");
    std::vector<std::string> row = {std::to_string(r.signal_id), std::to_string(r.pulse_index),
                                    std::to_string(r.label), to_string(r.split),
                                    r.annotated ? "1" : "0"};
    for (const double v : r.values) row.push_back(fmt_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

std::vector<PulseRecord> read_dataset_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) throw DataError(path + ": dataset needs a header and records");
  const std::size_t cols = rows[0].size();
  if (cols < 6) throw DataError(path + ": too few columns for a dataset");
  const std::size_t len = cols - 5;
  std::vector<PulseRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != cols)
      throw DataError(path + ": row " + std::to_string(i) + " has " +
                      std::to_string(row.size()) + " fields, expected " + std::to_string(cols));
    PulseRecord r;
    r.signal_id = static_cast<std::uint32_t>(parse_int(row[0], path + " signal_id"));
    r.pulse_index = static_cast<std::uint32_t>(parse_int(row[1], path + " pulse_index"));
    r.label = static_cast<int>(parse_int(row[2], path + " label"));
    if (r.label != 0 && r.label != 1) throw DataError(path + ": label must be 0 or 1");
    r.split = split_from_string(row[3]);
    const auto ann = parse_int(row[4], path + " annotated");
    if (ann != 0 && ann != 1) throw DataError(path + ": annotated must be 0 or 1");
    r.annotated = ann == 1;
    r.values.resize(len);
    for (std::size_t j = 0; j < len; ++j) r.values[j] = parse_double(row[5 + j], path);
    out.push_back(std::move(r));
  }
  return out;
}

// --------------------------------------------------------------- binary IO

namespace {
constexpr char kMagic[4] = {'P', 'S', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_dataset_bin(const std::string& path, const std::vector<PulseRecord>& records) {
  if (records.empty()) throw DataError("write_dataset_bin: no records");
  const std::size_t len = records[0].values.size();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  binio::put_u32(os, kVersion);
  binio::put_u64(os, records.size());
  binio::put_u64(os, len);
  for (const PulseRecord& r : records) {
    if (r.values.size() != len) throw ShapeError("write_dataset_bin: ragged pulse lengths");
    binio::put_u32(os, r.signal_id);
    binio::put_u32(os, r.pulse_index);
    binio::put_u32(os, static_cast<std::uint32_t>(r.label));
    binio::put_u32(os, r.split == Split::eval ? 1u : 0u);
    binio::put_u32(os, r.annotated ? 1u : 0u);
    for (const double v : r.values) binio::put_f64(os, v);
  }
  if (!os.flush()) throw DataError("write failure on " + path);
}

std::vector<PulseRecord> read_dataset_bin(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not a dataset file");
  if (binio::get_u32(is, path + " version") != kVersion)
    throw DataError(path + ": unsupported version");
  const std::uint64_t count = binio::get_u64(is, path + " count");
  const std::uint64_t len = binio::get_u64(is, path + " pulse_len");
  if (count == 0 || count > (1u << 28) || len == 0 || len > (1u << 20))
    throw DataError(path + ": implausible record geometry");
  std::vector<PulseRecord> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    PulseRecord r;
    r.signal_id = binio::get_u32(is, path + " signal_id");
    r.pulse_index = binio::get_u32(is, path + " pulse_index");
    const std::uint32_t label = binio::get_u32(is, path + " label");
    if (label > 1) throw DataError(path + ": label must be 0 or 1");
    r.label = static_cast<int>(label);
    const std::uint32_t split = binio::get_u32(is, path + " split");
    if (split > 1) throw DataError(path + ": split must be 0 or 1");
    r.split = split == 1 ? Split::eval : Split::train;
    const std::uint32_t ann = binio::get_u32(is, path + " annotated");
    if (ann > 1) throw DataError(path + ": annotated must be 0 or 1");
    r.annotated = ann == 1;
    r.values.resize(len);
    for (std::uint64_t j = 0; j < len; ++j)
      r.values[j] = binio::get_f64(is, path + " values");
    out.push_back(std::move(r));
  }
  is.peek();
  if (!is.eof()) throw DataError(path + ": trailing bytes after records");
  return out;
}

}  // namespace pssl
