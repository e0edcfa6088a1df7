#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seecg/errors.hpp"

namespace seecg {

using Complex = std::complex<double>;

struct SignalVector {
  std::vector<double> samples;
  double sample_rate_hz = 1.0;
};

// Forward transform X_j = Σ_k x_k e^{-2πi jk/n}. Radix-2 for power-of-two n, direct summation otherwise.
std::vector<Complex> dft(std::span<const double> x);
std::vector<Complex> dft(std::span<const Complex> x);
// Inverse transform including the 1/n factor.
std::vector<Complex> idft(std::span<const Complex> spectrum);

// Band-limited resampling to `target_len` samples: the spectrum is truncated or
// zero-padded around DC (splitting or folding the Nyquist bin for even lengths),
// inverse transformed and scaled by target/n so sample amplitudes are preserved.
std::vector<double> fourier_resample(std::span<const double> x, std::size_t target_len);
SignalVector fourier_resample(const SignalVector& x, std::size_t target_len);

// Largest power of two not exceeding n (5000 → 4096).
std::size_t default_target_length(std::size_t n);

struct EcgRecord {
  std::string record_id;
  std::string subject_id;
  std::size_t label = 0;
  std::vector<SignalVector> leads;

  std::size_t n_leads() const { return leads.size(); }
  std::size_t n_samples() const { return leads.empty() ? 0 : leads.front().samples.size(); }
  double sample_rate() const { return leads.empty() ? 0.0 : leads.front().sample_rate_hz; }
  // subject_id, or the record itself when no subject is given.
  const std::string& group_key() const { return subject_id.empty() ? record_id : subject_id; }
};

// Record file, little-endian: "ECGR", u32 version, u32 n_leads, u32 n_samples,
// f64 sample rate, then n_leads × n_samples float32 values, lead-major.
inline constexpr std::uint32_t kRecordFormatVersion = 1;

void write_record_file(const std::filesystem::path& path, const EcgRecord& record);
// Fills leads only; identity and label come from the manifest.
EcgRecord read_record_file(const std::filesystem::path& path);

struct ManifestEntry {
  std::string record_id;
  std::string subject_id;
  std::string label;
  std::string path;  // relative to the manifest's directory
};

// Text file:
//   n_leads: 8
//   sample_rate: 500
//   n_samples: 2048          (optional; 0 = not fixed)
//   classes: N,V,A
//   records:
//   record_id,subject_id,label,path
//   ...
// Lines starting with '#' and blank lines are ignored.
struct DatasetManifest {
  std::size_t n_leads = 0;
  double sample_rate = 0.0;
  std::size_t n_samples = 0;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> records;

  std::size_t class_index(const std::string& name) const;  // throws DataError when unknown
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct RecordIssue {
  std::string record_id;
  std::string path;
  std::string message;
};

// Every problem found while loading, reported together.
class DatasetError : public DataError {
 public:
  explicit DatasetError(std::vector<RecordIssue> issues);
  const std::vector<RecordIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<RecordIssue> issues_;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<EcgRecord> records;
};

// Problems of one record against the dataset invariants (empty when valid).
std::vector<std::string> record_problems(const EcgRecord& record, std::size_t n_leads, std::size_t n_classes,
                                         double sample_rate);

// Throws DatasetError listing every broken record (missing file, bad format,
// lead count or length mismatch, unknown label) and DataError for manifest-level problems.
Dataset load_dataset(const std::filesystem::path& manifest_path);
// Writes one record file per record under `dir/records/` and `dir/manifest.txt`; returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const std::vector<EcgRecord>& records,
                                    const std::vector<std::string>& classes);

// Resamples every lead of every record to `target_len`; the sample rate scales with the length.
std::vector<EcgRecord> resample_records(const std::vector<EcgRecord>& records, std::size_t target_len);

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_records = 200;
  std::size_t n_classes = 5;
  std::size_t n_leads = 8;
  std::size_t n_samples = 2048;
  double noise_std = 0.0;
  double sample_rate = 500.0;
  std::size_t records_per_subject = 2;
  std::size_t components = 3;  // sinusoids per class
};

// Class c is a sum of `components` sinusoids with integer cycle counts unique to c
// and phases drawn from (seed, c), shared by all leads up to a per-lead gain; each
// record adds its own gain and Gaussian noise. Labels cycle through the classes.
std::vector<EcgRecord> synth_dataset(const SynthConfig& config);
std::vector<std::string> synth_class_names(std::size_t n_classes);

enum class SplitMode { BySubject, ByRecord };

struct TrainTestSplit {
  std::vector<std::size_t> train;  // record indices, ascending
  std::vector<std::size_t> test;
};

// Groups records by subject (or treats each record as its own group in ByRecord
// mode), shuffles groups with `seed` and sends round(train_fraction · groups) to train.
TrainTestSplit split(const std::vector<EcgRecord>& records, double train_fraction, std::uint64_t seed,
                     SplitMode mode = SplitMode::BySubject);

// k disjoint folds of record indices; fold sizes differ by at most one group.
std::vector<std::vector<std::size_t>> kfold(const std::vector<EcgRecord>& records, std::size_t k,
                                            std::uint64_t seed, SplitMode mode = SplitMode::BySubject);

}  // namespace seecg
