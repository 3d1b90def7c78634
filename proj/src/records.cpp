#include "splite/records.hpp"

#include <json.hpp>

#include <fstream>
#include <iterator>

namespace splite {

namespace {

nlohmann::json rows_to_json(const RowMatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

RowMatrixXd rows_from_json(const nlohmann::json& j, Index cols, const char* key) {
  SPLITE_CHECK(j.is_array(), std::string("record field '") + key + "' must be an array");
  RowMatrixXd m(static_cast<Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    SPLITE_CHECK(j[r].is_array() && static_cast<Index>(j[r].size()) == cols,
                 std::string("record field '") + key + "' rows must have " + std::to_string(cols) + " entries");
    for (Index c = 0; c < cols; ++c) m(static_cast<Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void PredictionRecord::validate() const {
  SPLITE_CHECK(joints.cols() == 3 && vertices.cols() == 3 && uv.cols() == 2, "record arrays have wrong widths");
  SPLITE_CHECK(uv.rows() == joints.rows() && confidence.size() == joints.rows(),
               "record joint, uv and confidence counts differ");
  SPLITE_CHECK(joints.allFinite() && vertices.allFinite() && uv.allFinite() && confidence.allFinite(),
               "record " + image_id + " has non-finite values");
}

std::string to_json_line(const PredictionRecord& record) {
  record.validate();
  nlohmann::ordered_json j;
  j["image_id"] = record.image_id;
  j["joints"] = rows_to_json(record.joints);
  j["vertices"] = rows_to_json(record.vertices);
  j["uv"] = rows_to_json(record.uv);
  j["confidence"] = std::vector<double>(record.confidence.data(), record.confidence.data() + record.confidence.size());
  return j.dump();
}

PredictionRecord parse_record(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    PredictionRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.joints = rows_from_json(j.at("joints"), 3, "joints");
    r.vertices = rows_from_json(j.at("vertices"), 3, "vertices");
    r.uv = rows_from_json(j.at("uv"), 2, "uv");
    const auto conf = j.at("confidence").get<std::vector<double>>();
    r.confidence = Eigen::Map<const Eigen::VectorXd>(conf.data(), static_cast<Index>(conf.size()));
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed prediction record: ") + e.what());
  }
}

std::vector<PredictionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

CameraIntrinsics parse_intrinsics(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CameraIntrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                       j.at("cy").get<double>()};
    k.validate();
    return k;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed intrinsics: ") + e.what());
  }
}

CameraIntrinsics read_intrinsics_file(const std::filesystem::path& path) { return parse_intrinsics(read_text(path)); }

}  // namespace splite
