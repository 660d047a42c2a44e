#pragma once

#include <filesystem>
#include <string>

#include "murrenet/data_model.hpp"

namespace murre {

// Cohort directory contract: `manifest.tsv` with columns
// patient_id, survival_time, event_observed(0/1), pathology_file, genomics_file;
// feature files are little-endian float32 binaries with an int32 (rows, cols) header.

void write_feature_file(const std::filesystem::path& path, const Mat& m);
Mat read_feature_file(const std::filesystem::path& path);

void write_cohort(const std::filesystem::path& dir, const Cohort& cohort);
Cohort read_cohort(const std::filesystem::path& dir);

// FNV-1a 64 content hash over the manifest and every referenced feature
// file, in manifest order; returned as 16 hex digits.
std::string fingerprint_cohort(const std::filesystem::path& dir);

}  // namespace murre
