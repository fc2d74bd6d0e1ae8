#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lowreg/deform.hpp"
#include "lowreg/volume.hpp"

namespace lowreg {

/// VOL1 container: a text header (`magic VOL1`, `dims nx ny nz`,
/// `spacing sx sy sz`, `dtype f32|u8`, `order x-fastest`, and `channels 3`
/// for displacement fields), a blank line, then the raw little-endian
/// payload in x-fastest voxel order. All writers are atomic
/// (temp file + rename) and never modify their inputs.

void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);

void write_labels(const std::filesystem::path& path, const LabelMap& l);
LabelMap read_labels(const std::filesystem::path& path);

/// Displacement fields store the three components interleaved per voxel.
void write_ddf(const std::filesystem::path& path, const Ddf& d);
Ddf read_ddf(const std::filesystem::path& path);

/// Minimal CSV writing with RFC-4180-style quoting (fields containing
/// commas, quotes, or newlines are quoted; embedded quotes doubled).
std::string csv_escape(const std::string& field);
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Atomically replace `path` with `bytes` (same-directory temp + rename).
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& bytes);

std::string read_text_file(const std::filesystem::path& path);

} // namespace lowreg
