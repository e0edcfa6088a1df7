#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "seecg/signal.hpp"

namespace seecg {

namespace {

constexpr char kRecordMagic[4] = {'E', 'C', 'G', 'R'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& buf, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t parse_count(const std::string& v, const std::string& key, std::size_t line) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("manifest line " + std::to_string(line) + ": '" + key + "' must be a non-negative integer, got '" +
                    v + "'");
  }
  return out;
}

double parse_real(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw DataError("manifest line " + std::to_string(line) + ": '" + key + "' must be a number, got '" + v + "'");
}

}  // namespace

void write_record_file(const std::filesystem::path& path, const EcgRecord& record) {
  const std::size_t leads = record.n_leads(), samples = record.n_samples();
  if (leads == 0 || samples == 0) throw DataError("record '" + record.record_id + "' has no samples");
  for (const auto& lead : record.leads) {
    if (lead.samples.size() != samples) throw DataError("record '" + record.record_id + "': leads differ in length");
  }
  std::string out;
  out.reserve(kHeaderBytes + 4 * leads * samples);
  out.append(kRecordMagic, sizeof kRecordMagic);
  put_le<std::uint32_t>(out, kRecordFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(leads));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(samples));
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(record.sample_rate()));
  for (const auto& lead : record.leads)
    for (double v : lead.samples) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

EcgRecord read_record_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open record file " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < kHeaderBytes) throw FormatError(path.string() + ": truncated record header");
  if (std::memcmp(buf.data(), kRecordMagic, sizeof kRecordMagic) != 0) throw FormatError(path.string() + ": not a record file");
  const auto version = get_le<std::uint32_t>(buf, 4);
  if (version != kRecordFormatVersion) throw FormatError(path.string() + ": unsupported record version " + std::to_string(version));
  const std::size_t leads = get_le<std::uint32_t>(buf, 8);
  const std::size_t samples = get_le<std::uint32_t>(buf, 12);
  const double rate = std::bit_cast<double>(get_le<std::uint64_t>(buf, 16));
  if (leads == 0 || samples == 0) throw FormatError(path.string() + ": record declares no samples");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw FormatError(path.string() + ": sample rate must be positive");
  const std::size_t expected = kHeaderBytes + 4 * leads * samples;
  if (buf.size() != expected) {
    throw FormatError(path.string() + ": sample payload length mismatch (expected " + std::to_string(expected) +
                      " bytes for " + std::to_string(leads) + " leads x " + std::to_string(samples) +
                      " samples, file has " + std::to_string(buf.size()) + ")");
  }
  EcgRecord rec;
  rec.leads.resize(leads);
  std::size_t pos = kHeaderBytes;
  for (auto& lead : rec.leads) {
    lead.sample_rate_hz = rate;
    lead.samples.resize(samples);
    for (auto& v : lead.samples) {
      v = std::bit_cast<float>(get_le<std::uint32_t>(buf, pos));
      pos += 4;
    }
  }
  return rec;
}

std::size_t DatasetManifest::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == name) return i;
  throw DataError("unknown label '" + name + "'");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  bool in_records = false, saw_leads = false, saw_rate = false;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(f, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!in_records) {
      if (line == "records:") {
        in_records = true;
        continue;
      }
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw DataError("manifest line " + std::to_string(line_no) + ": expected 'key: value'");
      const std::string key = trim(line.substr(0, colon)), value = trim(line.substr(colon + 1));
      if (key == "n_leads") {
        m.n_leads = parse_count(value, key, line_no);
        saw_leads = true;
      } else if (key == "sample_rate") {
        m.sample_rate = parse_real(value, key, line_no);
        saw_rate = true;
      } else if (key == "n_samples") {
        m.n_samples = parse_count(value, key, line_no);
      } else if (key == "classes") {
        m.classes = split_on(value, ',');
      } else {
        throw DataError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
      continue;
    }
    const auto fields = split_on(line, ',');
    if (fields.size() != 4) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": expected record_id,subject_id,label,path, got " + std::to_string(fields.size()) + " fields");
    }
    m.records.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  if (!saw_leads || m.n_leads == 0) throw DataError(path.string() + ": header needs a positive n_leads");
  if (!saw_rate || !(m.sample_rate > 0.0)) throw DataError(path.string() + ": header needs a positive sample_rate");
  if (m.classes.size() < 2) throw DataError(path.string() + ": header needs at least two classes");
  for (const auto& c : m.classes) {
    if (c.empty()) throw DataError(path.string() + ": empty class name");
  }
  if (!in_records) throw DataError(path.string() + ": missing 'records:' section");
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ostringstream out;
  out.precision(17);
  out << "n_leads: " << m.n_leads << "\n";
  out << "sample_rate: " << m.sample_rate << "\n";
  out << "n_samples: " << m.n_samples << "\n";
  out << "classes: ";
  for (std::size_t i = 0; i < m.classes.size(); ++i) out << (i ? "," : "") << m.classes[i];
  out << "\nrecords:\n";
  for (const auto& r : m.records) out << r.record_id << "," << r.subject_id << "," << r.label << "," << r.path << "\n";

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << out.str();
}

}  // namespace seecg
