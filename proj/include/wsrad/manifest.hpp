#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

inline const std::set<std::string>& default_modalities() {
  static const std::set<std::string> kModalities{"T1", "T1-CE", "T2", "FLAIR"};
  return kModalities;
}

struct ManifestEntry {
  std::string patient_id;
  Grade grade = Grade::HGG;
  std::map<std::string, std::filesystem::path> images;  // modality -> image path
  std::filesystem::path mask_path;
  std::map<std::string, std::string> extra;  // unrecognized columns, e.g. clinical metadata
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Grade g) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [g](const auto& e) { return e.grade == g; }));
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = cell.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b));
  }
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses a header-first, tab- or comma-separated manifest with one row per
/// (patient, modality). Relative paths resolve against the manifest directory.
inline DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {},
                                      const std::set<std::string>& modalities = default_modalities()) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') break;
  }
  if (line.empty()) throw FormatError("manifest: missing header row");
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = detail::split_line(line, delim);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"patient_id", "grade", "modality", "image_path", "mask_path"})
    if (!col.count(required)) throw FormatError(std::string("manifest: missing required column '") + required + "'");

  auto resolve = [&](const std::string& p) {
    if (p.empty()) throw FormatError("manifest line " + std::to_string(line_no) + ": empty path");
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  DatasetManifest m;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = detail::split_line(line, delim);
    if (cells.size() < header.size())
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " columns, got " + std::to_string(cells.size()));
    const std::string& id = cells[col["patient_id"]];
    if (id.empty()) throw FormatError("manifest line " + std::to_string(line_no) + ": empty patient_id");
    const Grade grade = parse_grade(cells[col["grade"]]);
    const std::string& modality = cells[col["modality"]];
    if (!modalities.count(modality))
      throw FormatError("manifest line " + std::to_string(line_no) + ": undeclared modality '" + modality + "'");
    const auto image = resolve(cells[col["image_path"]]);
    const auto mask = resolve(cells[col["mask_path"]]);

    auto [it, inserted] = index.try_emplace(id, m.entries.size());
    if (inserted) {
      ManifestEntry e;
      e.patient_id = id;
      e.grade = grade;
      e.mask_path = mask;
      for (std::size_t i = 0; i < header.size(); ++i)
        if (!(header[i] == "patient_id" || header[i] == "grade" || header[i] == "modality" ||
              header[i] == "image_path" || header[i] == "mask_path"))
          e.extra[header[i]] = cells[i];
      m.entries.push_back(std::move(e));
    }
    auto& e = m.entries[it->second];
    if (e.images.count(modality))
      throw FormatError("manifest: duplicate patient_id '" + id + "' for modality " + modality);
    if (e.grade != grade) throw FormatError("manifest: conflicting grades for patient_id '" + id + "'");
    if (e.mask_path != mask) throw FormatError("manifest: conflicting mask paths for patient_id '" + id + "'");
    e.images[modality] = image;
  }
  if (m.entries.empty()) throw FormatError("manifest: at least one entry is required");
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     const std::set<std::string>& modalities = default_modalities()) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.parent_path(), modalities);
}

}  // namespace wsrad
