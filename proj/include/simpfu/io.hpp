#pragma once

// File formats:
//   spectrogram  "SFUS" | u32 rows | u32 cols | u32 reserved | f32 LE row-major
//   label matrix "SFUL" | u32 rows | u32 cols | u32 reserved | u8 row-major
//   annotations  CSV with header segment_id,class_id,start_s,end_s

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "simpfu/dsp.hpp"
#include "simpfu/errors.hpp"
#include "simpfu/labels.hpp"

namespace simpfu {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace detail {

struct ContainerHeader {
  char magic[4];
  std::uint32_t rows;
  std::uint32_t cols;
  std::uint32_t reserved;
};
static_assert(sizeof(ContainerHeader) == 16);

inline void write_container(const std::filesystem::path& path, const char* magic, std::uint32_t rows,
                            std::uint32_t cols, const void* payload, std::size_t bytes) {
  ContainerHeader h{};
  std::memcpy(h.magic, magic, 4);
  h.rows = rows;
  h.cols = cols;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(&h), sizeof h);
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline ContainerHeader read_container(const std::filesystem::path& path, const char* magic,
                                      std::size_t elem_size, std::vector<char>& payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  ContainerHeader h{};
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  if (!in || std::memcmp(h.magic, magic, 4) != 0)
    throw ValidationError(path.string() + ": bad magic, expected " + std::string(magic, 4));
  const std::size_t bytes = static_cast<std::size_t>(h.rows) * h.cols * elem_size;
  payload.resize(bytes);
  in.read(payload.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw ValidationError(path.string() + ": truncated payload");
  return h;
}

}  // namespace detail

inline void write_spectrogram(const std::filesystem::path& path, const MelSpectrogram& spec) {
  std::vector<float> payload(spec.data.data.begin(), spec.data.data.end());
  detail::write_container(path, "SFUS", static_cast<std::uint32_t>(spec.data.rows),
                          static_cast<std::uint32_t>(spec.data.cols), payload.data(),
                          payload.size() * sizeof(float));
}

inline MelSpectrogram read_spectrogram(const std::filesystem::path& path) {
  std::vector<char> payload;
  const auto h = detail::read_container(path, "SFUS", sizeof(float), payload);
  MelSpectrogram spec;
  spec.data = RealMatrix(h.rows, h.cols);
  const auto* f = reinterpret_cast<const float*>(payload.data());
  for (std::size_t i = 0; i < spec.data.data.size(); ++i) spec.data.data[i] = f[i];
  spec.normalized = true;
  return spec;
}

inline void write_labels(const std::filesystem::path& path, const LabelMatrix& labels) {
  detail::write_container(path, "SFUL", static_cast<std::uint32_t>(labels.rows),
                          static_cast<std::uint32_t>(labels.cols), labels.data.data(), labels.data.size());
}

inline LabelMatrix read_labels(const std::filesystem::path& path) {
  std::vector<char> payload;
  const auto h = detail::read_container(path, "SFUL", 1, payload);
  LabelMatrix m(h.rows, h.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(payload[i]);
    if (v > 1) throw ValidationError(path.string() + ": label entries must be 0 or 1");
    m.data[i] = v;
  }
  return m;
}

inline TimeIndexedLabels read_time_labels(const std::filesystem::path& path) {
  LabelMatrix m = read_labels(path);
  if (m.rows != kTimeBins || m.cols != kNumClasses)
    throw ValidationError(path.string() + ": expected a 512x20 label matrix");
  return TimeIndexedLabels{std::move(m)};
}

// Annotations grouped by segment id, in file order.
inline std::map<std::string, std::vector<Annotation>> read_annotations_csv(std::istream& in) {
  std::map<std::string, std::vector<Annotation>> out;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("annotation CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "segment_id,class_id,start_s,end_s")
    throw ValidationError("annotation CSV header must be segment_id,class_id,start_s,end_s");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, cls, start, end;
    if (!std::getline(ss, id, ',') || !std::getline(ss, cls, ',') || !std::getline(ss, start, ',') ||
        !std::getline(ss, end)) {
      throw ValidationError("annotation CSV line " + std::to_string(lineno) + ": expected 4 fields");
    }
    Annotation a;
    try {
      std::size_t used = 0;
      const long c = std::stol(cls, &used);
      if (used != cls.size() || c < 0) throw std::invalid_argument(cls);
      a.class_id = static_cast<std::size_t>(c);
      a.start = std::stod(start);
      a.end = std::stod(end);
    } catch (const std::exception&) {
      throw ValidationError("annotation CSV line " + std::to_string(lineno) + ": malformed number");
    }
    a.source_segment = id;
    validate(a);
    out[id].push_back(a);
  }
  return out;
}

inline std::map<std::string, std::vector<Annotation>> read_annotations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_annotations_csv(in);
}

}  // namespace simpfu
