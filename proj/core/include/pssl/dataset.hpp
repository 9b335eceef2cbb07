#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pssl/annotate.hpp"
#include "pssl/dsp.hpp"
#include "pssl/tensor.hpp"

namespace pssl {

enum class Split { train, eval };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One segmented pulse ready for modeling: values are z-normalized.
struct PulseRecord {
  std::uint32_t signal_id = 0;
  std::uint32_t pulse_index = 0;
  std::vector<double> values;  // kPulseLen samples
  int label = 0;               // 1 = artifact, 0 = clean
  Split split = Split::train;
  bool annotated = false;  // label available to training
};

// Joins pulses with their labels (exact signal_id/pulse_index match
// required for every pulse; DataError otherwise) and z-normalizes the
// sample values.
std::vector<PulseRecord> assemble_records(const std::vector<SegmentedPulse>& pulses,
                                          const std::vector<LabelRow>& labels);

// Seeded-shuffle split; round(eval_fraction * n) records land in eval.
void apply_split(std::vector<PulseRecord>& records, double eval_fraction, std::uint64_t seed);

// Marks round(fraction * records.size()) training records as annotated,
// chosen as a prefix of a seeded shuffle of the train indices so smaller
// fractions nest inside larger ones at the same seed. Fraction 1 marks
// every train record. Throws DataError when the count comes out zero.
void mark_annotated(std::vector<PulseRecord>& records, double fraction, std::uint64_t seed);

std::vector<std::size_t> indices_of(const std::vector<PulseRecord>& records, Split split);
std::vector<std::size_t> annotated_train_indices(const std::vector<PulseRecord>& records);

// Records every dataset read so trainings can be audited for eval leaks.
struct AccessLog {
  std::vector<std::size_t> value_reads;  // record indices, in read order
  std::vector<std::size_t> label_reads;
};

// Stacks the selected records' values into (n, kPulseLen).
Tensor gather_values(const std::vector<PulseRecord>& records,
                     const std::vector<std::size_t>& idx, AccessLog* log = nullptr);

// Collects labels; with require_annotated, reading the label of a record
// not marked annotated throws ContractError.
std::vector<int> gather_labels(const std::vector<PulseRecord>& records,
                               const std::vector<std::size_t>& idx, bool require_annotated,
                               AccessLog* log = nullptr);

// CSV layout: signal_id, pulse_index, label, split, annotated, v0..v{L-1}.
void write_dataset_csv(const std::string& path, const std::vector<PulseRecord>& records);
std::vector<PulseRecord> read_dataset_csv(const std::string& path);

// Compact binary layout ("PSDS" magic), bit-exact roundtrip.
void write_dataset_bin(const std::string& path, const std::vector<PulseRecord>& records);
std::vector<PulseRecord> read_dataset_bin(const std::string& path);

}  // namespace pssl
