#pragma once

// Dataset ingestion, table serialization and persisted resampling draws.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ltqr/inference.hpp"
#include "ltqr/model_core.hpp"

namespace ltqr::io {

struct IngestReport {
  std::vector<std::string> warnings;
};

/// Reads the long-format file (subject_id,time,y) and the covariate file
/// (subject_id,<names...>[,delta]) and joins them on subject_id.
LongitudinalDataset read_dataset(std::istream& longitudinal, std::istream& covariates,
                                 IngestReport* report = nullptr);

LongitudinalDataset ingest_csv(const std::filesystem::path& longitudinal,
                               const std::filesystem::path& covariates,
                               IngestReport* report = nullptr);

/// Writes both files in canonical order (subjects by id, rows by time),
/// always including the delta column.
void write_dataset(const LongitudinalDataset& data, std::ostream& longitudinal,
                   std::ostream& covariates);

/// Shortest form that round-trips: 17 significant digits.
std::string format_double(double value);

/// Fixed-schema table rendered as CSV or JSON records.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

enum class Format { Csv, Json };

Format parse_format(const std::string& name);

void write_table(const Table& table, std::ostream& out, Format format);
void write_table(const Table& table, const std::filesystem::path& path, Format format);

/// "lo:hi:step" (inclusive of hi up to rounding) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text, const std::string& field);

/// Flat "key = value" lines; '#' starts a comment. Errors name the line.
std::map<std::string, std::string> parse_config(std::istream& in);

/// Binary sidecar: magic "LTQRDRAW", u32 version, u64 header length, JSON
/// header (dimensions, grid, names, seed, ...), then little-endian doubles:
/// beta_hat (p x |grid|, column-major) followed by each replicate.
inline constexpr std::uint32_t kDrawsFormatVersion = 1;

void write_draws(const ResampleDraws& draws, const std::vector<std::string>& coefficient_names,
                 const std::filesystem::path& path);

struct PersistedDraws {
  ResampleDraws draws;
  std::vector<std::string> coefficient_names;
};

PersistedDraws read_draws(const std::filesystem::path& path);

/// FNV-1a 64-bit digest of a file's bytes, hex encoded; recorded in run manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace ltqr::io
