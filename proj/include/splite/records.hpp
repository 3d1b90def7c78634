#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "splite/lifting.hpp"
#include "splite/tensor.hpp"

namespace splite {

/// One inference result. Coordinates are camera-space meters; uv is in
/// input-image pixels.
struct PredictionRecord {
  std::string image_id;
  RowMatrixXd joints;    // 21 × 3
  RowMatrixXd vertices;  // V × 3
  RowMatrixXd uv;        // 21 × 2
  Eigen::VectorXd confidence;

  void validate() const;
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Single-line JSON object with keys image_id, joints, vertices, uv, confidence.
std::string to_json_line(const PredictionRecord& record);
PredictionRecord parse_record(std::string_view line);

/// One record per line; blank lines are skipped.
std::vector<PredictionRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);

/// {"fx": .., "fy": .., "cx": .., "cy": ..}
CameraIntrinsics parse_intrinsics(std::string_view text);
CameraIntrinsics read_intrinsics_file(const std::filesystem::path& path);

}  // namespace splite
