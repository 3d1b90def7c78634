#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "splite/backbone.hpp"
#include "splite/model_io.hpp"
#include "splite/pipeline.hpp"
#include "splite/records.hpp"

using namespace splite;
namespace fs = std::filesystem;

namespace {

FormatError::Kind load_error(std::span<const std::uint8_t> bytes) {
  try {
    (void)load_weights(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("corruption was not detected");
  return FormatError::Kind::Malformed;
}

const char* kTetra = R"({"levels": [{"vertices": 4, "faces": [[0,1,2],[0,3,1],[0,2,3],[1,3,2]]}]})";

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("weight container round trips") {
  WeightStore empty;
  CHECK(load_weights(save_weights(empty)) == empty);

  WeightStore one;
  DenseTensor t({2, 3});
  t.values() << 1.5f, -0.0f, 3e-40f, 1e30f, -7.25f, 0.1f;
  one.set("a.weight", t);
  const auto bytes = save_weights(one);
  CHECK(bytes.size() == 4 + 1 + 2 + 8 + 1 + 1 + 8 + 24 + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPLW");
  CHECK(bytes[4] == kWeightFormatVersion);
  const WeightStore back = load_weights(bytes);
  CHECK(back == one);
  CHECK(std::signbit(std::get<DenseTensor>(back.at("a.weight")).values()[1]));

  Rng rng(61);
  for (int i = 0; i < 30; ++i) {
    const WeightStore s = oracle::random_store(rng);
    const auto b = save_weights(s);
    CHECK(load_weights(b) == s);
    CHECK(save_weights(load_weights(b)) == b);
  }
}

TEST_CASE("weight container errors are distinct") {
  Rng rng(62);
  WeightStore s = oracle::random_store(rng);
  s.set("x", DenseTensor({4}));
  auto bytes = save_weights(s);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(load_error(magic) == FormatError::Kind::BadMagic);
  auto version = bytes;
  version[4] = 9;
  CHECK(load_error(version) == FormatError::Kind::BadVersion);
  auto payload = bytes;
  payload[payload.size() / 2] ^= 0x10;
  CHECK(load_error(payload) == FormatError::Kind::BadChecksum);
  CHECK(load_error(std::span(bytes).first(bytes.size() - 1)) == FormatError::Kind::BadChecksum);
  CHECK(load_error(std::span(bytes).first(3)) == FormatError::Kind::BadMagic);

  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto c = bytes;
    c[i] ^= 0xFF;
    CHECK_THROWS_AS(load_weights(c), FormatError);
  }
}

TEST_CASE("weight files") {
  const fs::path p = fs::temp_directory_path() / "splite_model_io.splw";
  Rng rng(63);
  const WeightStore s = oracle::random_store(rng);
  write_weights_file(p, s);
  CHECK(read_weights_file(p) == s);
  CHECK_THROWS_AS(read_weights_file(p.string() + ".missing"), IoError);
}

TEST_CASE("store access") {
  WeightStore s;
  s.set("w", DenseTensor({2, 2}));
  CHECK_THROWS_AS(s.at("v"), MissingParameter);
  CHECK_THROWS_AS(s.dense("w", {4}), InvalidArgument);
  CHECK(s.dense("w", {2, 2}).size() == 4);
  CHECK_FALSE(s.quantized());
  QuantizedTensor bad;
  bad.shape = {3};
  bad.data = {1, 2};
  bad.scale = {1.0f};
  CHECK_THROWS_AS(s.set("q", bad), InvalidArgument);
}

TEST_CASE("batch norm folding") {
  Rng rng(64);
  WeightStore s;
  const DenseTensor w = oracle::random_tensor(rng, {4, 2, 3, 3});
  s.set("p.conv1.weight", w);
  DenseTensor gamma = oracle::random_tensor(rng, {4}, 0.5, 1.5), beta = oracle::random_tensor(rng, {4});
  DenseTensor mean = oracle::random_tensor(rng, {4}), var = oracle::random_tensor(rng, {4}, 0.5, 2.0);
  s.set("p.bn1.weight", gamma);
  s.set("p.bn1.bias", beta);
  s.set("p.bn1.running_mean", mean);
  s.set("p.bn1.running_var", var);
  s.set("q.other", DenseTensor({3}));
  const WeightStore f = fold_batchnorm(s);
  CHECK_FALSE(f.contains("p.bn1.weight"));
  CHECK(f.contains("q.other"));
  const DenseTensor fw = f.dense("p.conv1.weight"), fb = f.dense("p.conv1.bias");
  for (Index o = 0; o < 4; ++o) {
    const double scale = gamma.values()[o] / std::sqrt(var.values()[o] + 1e-5);
    CHECK(fb.values()[o] == doctest::Approx(beta.values()[o] - mean.values()[o] * scale).epsilon(1e-5));
    for (Index i = 0; i < 18; ++i)
      CHECK(fw.values()[o * 18 + i] == doctest::Approx(w.values()[o * 18 + i] * scale).epsilon(1e-5));
  }
}

TEST_CASE("quantized stores") {
  WeightStore big;
  Rng rng(65);
  big.set("layer.weight", oracle::random_tensor(rng, {1000, 1000}));
  const WeightStore q = quantize_store(big);
  const double ratio = static_cast<double>(save_weights(q).size()) / static_cast<double>(save_weights(big).size());
  CHECK(ratio == doctest::Approx(0.25).epsilon(0.01));
  CHECK(quantize_store(q) == q);

  const auto& qt = std::get<QuantizedTensor>(q.at("layer.weight"));
  const DenseTensor orig = big.dense("layer.weight"), deq = q.dense("layer.weight");
  for (Index i = 0; i < orig.size(); i += 997)
    CHECK(std::abs(orig.values()[i] - deq.values()[i]) <= qt.scale_of(i) / 2 * (1 + 1e-6f));

  std::map<std::string, ActivationRange> calib{{"stem", {-1.0f, 3.0f}}};
  const WeightStore qc = quantize_store(big, calib);
  CHECK(qc.dense("calib.stem", {2}).values() == Eigen::Vector2f(-1.0f, 3.0f));
}

TEST_CASE("full model quantization ratio") {
  const MeshTopology topo = make_hand_template_topology();
  WeightStore store;
  init_model_weights(store, topo, ModelConfig{}, 3);
  const double ratio =
      static_cast<double>(save_weights(quantize_store(store)).size()) / static_cast<double>(save_weights(store).size());
  CHECK(ratio >= 0.24);
  CHECK(ratio <= 0.30);
}

TEST_CASE("topology text") {
  const MeshTopology tet = load_topology(kTetra);
  CHECK(tet.num_levels() == 1);
  CHECK(tet.level(0).faces.size() == 4);

  const MeshTopology hand = make_hand_template_topology();
  const MeshTopology back = load_topology(dump_topology(hand));
  REQUIRE(back.num_levels() == 5);
  for (Index l = 0; l < 5; ++l) {
    CHECK(back.level(l).num_vertices == hand.level(l).num_vertices);
    CHECK(back.level(l).faces == hand.level(l).faces);
    CHECK(Eigen::MatrixXd(back.level(l).upsample) == Eigen::MatrixXd(hand.level(l).upsample));
  }
  Eigen::VectorXd x = Eigen::VectorXd::Ones(49);
  for (Index l = 0; l < 4; ++l) x = back.level(l).upsample * x;
  CHECK(x.size() == 778);

  const char* bad_sum = R"({"levels": [
    {"vertices": 3, "faces": [[0,1,2]], "upsample": [[0,0,1.0],[1,1,0.99],[2,2,1.0]]},
    {"vertices": 3, "faces": [[0,1,2]]}]})";
  CHECK_THROWS_WITH_AS(load_topology(bad_sum), doctest::Contains("level 0: upsample row 1"), InvalidArgument);
  CHECK_THROWS_WITH_AS(load_topology(R"({"levels": [{"vertices": 3, "faces": [[0,1,5]]}]})"),
                       doctest::Contains("level 0"), InvalidArgument);
  CHECK_THROWS_AS(load_topology("{not json"), InvalidArgument);
}

TEST_CASE("prediction records") {
  Rng rng(66);
  PredictionRecord r{"img_007", oracle::random_matrix(rng, 21, 3), oracle::random_matrix(rng, 778, 3),
                     oracle::random_matrix(rng, 21, 2, 0, 128), Eigen::VectorXd::Constant(21, 0.25)};
  r.joints(0, 0) = 0.1;  // not exactly representable as a short decimal
  const std::string line = to_json_line(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.rfind(R"({"image_id":"img_007","joints":)", 0) == 0);
  CHECK(parse_record(line) == r);

  const fs::path p = fs::temp_directory_path() / "splite_records.jsonl";
  PredictionRecord r2 = r;
  r2.image_id = "second";
  write_records(p, {r, r2});
  const auto all = read_records(p);
  REQUIRE(all.size() == 2);
  CHECK(all[1] == r2);

  PredictionRecord bad = r;
  bad.joints(3, 1) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_record(R"({"image_id": "x"})"), InvalidArgument);

  const CameraIntrinsics k = parse_intrinsics(R"({"fx": 200, "fy": 210, "cx": 64, "cy": 60})");
  CHECK(k.fy == 210);
  CHECK_THROWS_AS(parse_intrinsics(R"({"fx": -1, "fy": 1, "cx": 0, "cy": 0})"), InvalidArgument);
}
