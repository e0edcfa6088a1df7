#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "seecg/signal.hpp"

namespace seecg {

namespace {

std::string describe(const std::vector<RecordIssue>& issues) {
  std::ostringstream out;
  out << issues.size() << " invalid record(s):";
  for (const auto& i : issues) {
    out << "\n  " << i.record_id;
    if (!i.path.empty()) out << " (" << i.path << ")";
    out << ": " << i.message;
  }
  return out.str();
}

}  // namespace

DatasetError::DatasetError(std::vector<RecordIssue> issues) : DataError(describe(issues)), issues_(std::move(issues)) {}

std::vector<std::string> record_problems(const EcgRecord& record, std::size_t n_leads, std::size_t n_classes,
                                         double sample_rate) {
  std::vector<std::string> out;
  if (record.n_leads() != n_leads) {
    out.push_back("has " + std::to_string(record.n_leads()) + " leads, expected " + std::to_string(n_leads));
  }
  for (std::size_t l = 0; l < record.leads.size(); ++l) {
    const auto& lead = record.leads[l];
    if (lead.samples.empty()) out.push_back("lead " + std::to_string(l) + " is empty");
    if (lead.samples.size() != record.n_samples()) {
      out.push_back("lead " + std::to_string(l) + " has " + std::to_string(lead.samples.size()) +
                    " samples, lead 0 has " + std::to_string(record.n_samples()));
    }
    if (lead.sample_rate_hz != record.sample_rate()) out.push_back("lead " + std::to_string(l) + " has a different sample rate");
    for (double v : lead.samples) {
      if (!std::isfinite(v)) {
        out.push_back("lead " + std::to_string(l) + " contains a non-finite sample");
        break;
      }
    }
  }
  if (sample_rate > 0.0 && !record.leads.empty() && record.sample_rate() != sample_rate) {
    std::ostringstream msg;
    msg << "sample rate " << record.sample_rate() << " differs from dataset rate " << sample_rate;
    out.push_back(msg.str());
  }
  if (record.label >= n_classes) {
    out.push_back("label " + std::to_string(record.label) + " outside [0, " + std::to_string(n_classes) + ")");
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<RecordIssue> issues;
  std::set<std::string> ids;

  for (const auto& entry : ds.manifest.records) {
    auto fail = [&](const std::string& message) { issues.push_back({entry.record_id, entry.path, message}); };
    if (entry.record_id.empty()) {
      fail("empty record_id");
      continue;
    }
    if (!ids.insert(entry.record_id).second) {
      fail("duplicate record_id");
      continue;
    }
    EcgRecord rec;
    try {
      rec.label = ds.manifest.class_index(entry.label);
    } catch (const DataError& e) {
      fail(e.what());
      continue;
    }
    const auto file = base / entry.path;
    if (!std::filesystem::exists(file)) {
      fail("file not found: " + file.string());
      continue;
    }
    try {
      EcgRecord data = read_record_file(file);
      rec.leads = std::move(data.leads);
    } catch (const Error& e) {
      fail(e.what());
      continue;
    }
    rec.record_id = entry.record_id;
    rec.subject_id = entry.subject_id;
    for (const auto& p : record_problems(rec, ds.manifest.n_leads, ds.manifest.classes.size(), ds.manifest.sample_rate))
      fail(p);
    if (ds.manifest.n_samples != 0 && rec.n_samples() != ds.manifest.n_samples) {
      fail("has " + std::to_string(rec.n_samples()) + " samples, manifest declares " +
           std::to_string(ds.manifest.n_samples));
    }
    ds.records.push_back(std::move(rec));
  }
  if (!issues.empty()) throw DatasetError(std::move(issues));
  if (ds.records.empty()) throw DataError(manifest_path.string() + ": manifest lists no records");
  return ds;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const std::vector<EcgRecord>& records,
                                    const std::vector<std::string>& classes) {
  if (records.empty()) throw DataError("write_dataset: no records");
  DatasetManifest m;
  m.n_leads = records.front().n_leads();
  m.sample_rate = records.front().sample_rate();
  m.n_samples = records.front().n_samples();
  m.classes = classes;
  std::vector<RecordIssue> issues;
  for (const auto& r : records) {
    for (const auto& p : record_problems(r, m.n_leads, classes.size(), m.sample_rate)) issues.push_back({r.record_id, "", p});
    if (r.n_samples() != m.n_samples) m.n_samples = 0;
  }
  if (!issues.empty()) throw DatasetError(std::move(issues));
  for (const auto& r : records) {
    const std::string rel = "records/" + r.record_id + ".ecgr";
    write_record_file(dir / rel, r);
    m.records.push_back({r.record_id, r.subject_id, classes[r.label], rel});
  }
  const auto path = dir / "manifest.txt";
  write_manifest(path, m);
  return path;
}

std::vector<EcgRecord> resample_records(const std::vector<EcgRecord>& records, std::size_t target_len) {
  std::vector<EcgRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    EcgRecord copy;
    copy.record_id = r.record_id;
    copy.subject_id = r.subject_id;
    copy.label = r.label;
    for (const auto& lead : r.leads) copy.leads.push_back(fourier_resample(lead, target_len));
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace seecg
