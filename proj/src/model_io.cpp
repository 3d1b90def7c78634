#include "splite/model_io.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace splite {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

DType dtype_of(const StoredTensor& t) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseTensor>) return DType::F32;
        else if constexpr (std::is_same_v<T, QuantizedTensor>) return DType::I8;
        else return DType::I32;
      },
      t);
}

const Shape& shape_of(const StoredTensor& t) {
  return std::visit(
      [](const auto& v) -> const Shape& {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, DenseTensor>) return v.shape();
        else return v.shape;
      },
      t);
}

void WeightStore::set(const std::string& name, StoredTensor tensor) {
  SPLITE_CHECK(!name.empty() && name.size() <= 0xFFFF, "parameter name must have 1..65535 bytes");
  if (auto* q = std::get_if<QuantizedTensor>(&tensor)) q->validate();
  if (auto* i = std::get_if<IntTensor>(&tensor)) {
    SPLITE_CHECK(static_cast<Index>(i->data.size()) == shape_volume(i->shape), "int tensor length does not match shape");
  }
  entries_.insert_or_assign(name, std::move(tensor));
}

const StoredTensor& WeightStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingParameter(name);
  return it->second;
}

DenseTensor WeightStore::dense(const std::string& name, const Shape& expected) const {
  const StoredTensor& t = at(name);
  DenseTensor out;
  if (const auto* f = std::get_if<DenseTensor>(&t)) {
    out = *f;
  } else if (const auto* q = std::get_if<QuantizedTensor>(&t)) {
    out = dequantize(*q);
  } else {
    const auto& i = std::get<IntTensor>(t);
    out = DenseTensor(i.shape);
    for (std::size_t k = 0; k < i.data.size(); ++k) out.values()[static_cast<Index>(k)] = static_cast<float>(i.data[k]);
  }
  if (!expected.empty()) {
    SPLITE_CHECK(out.shape() == expected, "parameter " + name + " has shape " + shape_string(out.shape()) +
                                              ", expected " + shape_string(expected));
  }
  return out;
}

bool WeightStore::quantized() const {
  for (const auto& [name, t] : entries_)
    if (dtype_of(t) == DType::I8) return true;
  return false;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, bytes.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }

  std::vector<std::uint8_t> bytes;

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > end_ - pos_) throw FormatError(FormatError::Kind::Truncated, "weight file truncated");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  template <typename T>
  T le() {
    const auto b = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>(v | static_cast<T>(static_cast<T>(b[i]) << (8 * i)));
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kMagic[4] = {'S', 'P', 'L', 'W'};

}  // namespace

std::vector<std::uint8_t> save_weights(const WeightStore& store) {
  Writer w;
  w.raw(kMagic, 4);
  w.u8(kWeightFormatVersion);
  for (const auto& [name, tensor] : store) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(dtype_of(tensor)));
    const Shape& shape = shape_of(tensor);
    SPLITE_CHECK(shape.size() <= 255, "tensor rank exceeds 255");
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (Index d : shape) {
      SPLITE_CHECK(d >= 0 && d <= 0xFFFFFFFFll, "tensor extent does not fit u32");
      w.u32(static_cast<std::uint32_t>(d));
    }
    if (const auto* f = std::get_if<DenseTensor>(&tensor)) {
      for (Index i = 0; i < f->size(); ++i) w.f32(f->values()[i]);
    } else if (const auto* q = std::get_if<QuantizedTensor>(&tensor)) {
      w.u8(static_cast<std::uint8_t>(q->granularity));
      for (float s : q->scale) w.f32(s);
      w.i32(q->zero_point);
      w.raw(q->data.data(), q->data.size());
    } else {
      for (std::int32_t v : std::get<IntTensor>(tensor).data) w.i32(v);
    }
  }
  const std::uint32_t crc = crc32(w.bytes);
  w.u32(crc);
  return std::move(w.bytes);
}

WeightStore load_weights(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(Kind::BadMagic, "not a weight file (bad magic)");
  }
  if (bytes.size() < 5) throw FormatError(Kind::Truncated, "weight file truncated");
  if (bytes[4] != kWeightFormatVersion) {
    throw FormatError(Kind::BadVersion, "unsupported weight file version " + std::to_string(bytes[4]));
  }
  if (bytes.size() < 9) throw FormatError(Kind::Truncated, "weight file truncated");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.subspan(body), 4);
  if (tail.u32() != crc32(bytes.first(body))) throw FormatError(Kind::BadChecksum, "weight file checksum mismatch");

  Reader r(bytes, body);
  r.take(5);
  WeightStore store;
  while (!r.done()) {
    const std::uint16_t len = r.u16();
    const auto name_bytes = r.take(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    if (name.empty() || store.contains(name)) throw FormatError(Kind::Malformed, "empty or duplicate parameter name");
    const std::uint8_t dtype = r.u8();
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const Index volume = shape_volume(shape);
    if (static_cast<std::size_t>(volume) > r.remaining()) throw FormatError(Kind::Truncated, "weight file truncated");
    switch (static_cast<DType>(dtype)) {
      case DType::F32: {
        DenseTensor t(shape);
        for (Index i = 0; i < volume; ++i) t.values()[i] = r.f32();
        store.set(name, std::move(t));
        break;
      }
      case DType::I8: {
        QuantizedTensor q;
        q.shape = shape;
        const std::uint8_t gran = r.u8();
        if (gran > 1) throw FormatError(Kind::Malformed, "bad quantization granularity for " + name);
        q.granularity = static_cast<Granularity>(gran);
        const Index groups = q.granularity == Granularity::PerTensor ? 1 : (shape.empty() ? 0 : shape[0]);
        q.scale.resize(static_cast<std::size_t>(groups));
        for (auto& s : q.scale) s = r.f32();
        q.zero_point = r.i32();
        const auto raw = r.take(static_cast<std::size_t>(volume));
        q.data.assign(reinterpret_cast<const std::int8_t*>(raw.data()),
                      reinterpret_cast<const std::int8_t*>(raw.data()) + raw.size());
        try {
          store.set(name, std::move(q));
        } catch (const InvalidArgument& e) {
          throw FormatError(Kind::Malformed, name + ": " + e.what());
        }
        break;
      }
      case DType::I32: {
        IntTensor t{shape, std::vector<std::int32_t>(static_cast<std::size_t>(volume))};
        for (auto& v : t.data) v = r.i32();
        store.set(name, std::move(t));
        break;
      }
      default:
        throw FormatError(Kind::Malformed, "unknown dtype " + std::to_string(dtype) + " for " + name);
    }
  }
  return store;
}

void write_weights_file(const std::filesystem::path& path, const WeightStore& store) {
  const auto bytes = save_weights(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

WeightStore read_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return load_weights(bytes);
}

WeightStore fold_batchnorm(const WeightStore& store, float epsilon) {
  WeightStore out;
  std::vector<std::string> consumed;
  for (const auto& [name, tensor] : store) {
    // P.convK.weight pairs with P.bnK.*
    const auto dot = name.rfind('.');
    const auto prev = name.rfind('.', dot == std::string::npos || dot == 0 ? 0 : dot - 1);
    const std::string leaf = dot == std::string::npos ? "" : name.substr(dot + 1);
    const std::string module = prev == std::string::npos ? "" : name.substr(prev + 1, dot - prev - 1);
    if (leaf != "weight" || module.rfind("conv", 0) != 0) continue;
    const std::string prefix = name.substr(0, prev + 1);
    const std::string bn = prefix + "bn" + module.substr(4) + ".";
    if (!store.contains(bn + "weight")) continue;

    DenseTensor w = store.dense(name);
    const Index out_channels = w.dim(0);
    const Eigen::VectorXf gamma = store.dense(bn + "weight", {out_channels}).values();
    const Eigen::VectorXf beta = store.dense(bn + "bias", {out_channels}).values();
    const Eigen::VectorXf mean = store.dense(bn + "running_mean", {out_channels}).values();
    const Eigen::VectorXf var = store.dense(bn + "running_var", {out_channels}).values();
    const std::string bias_name = prefix + module + ".bias";
    Eigen::VectorXf bias = store.contains(bias_name) ? store.dense(bias_name, {out_channels}).values()
                                                     : Eigen::VectorXf::Zero(out_channels);
    const Eigen::VectorXf factor = (gamma.array() / (var.array() + epsilon).sqrt()).matrix();
    auto rows = w.matrix();
    for (Index o = 0; o < out_channels; ++o) rows.row(o) *= factor[o];
    bias = ((bias - mean).array() * factor.array() + beta.array()).matrix();
    out.set(name, std::move(w));
    out.set(bias_name, DenseTensor({out_channels}, bias));
    consumed.push_back(bias_name);
    for (const char* leaf_name : {"weight", "bias", "running_mean", "running_var"}) consumed.push_back(bn + leaf_name);
  }
  for (const auto& [name, tensor] : store) {
    if (out.contains(name) || std::find(consumed.begin(), consumed.end(), name) != consumed.end()) continue;
    out.set(name, tensor);
  }
  return out;
}

WeightStore quantize_store(const WeightStore& store, const std::map<std::string, ActivationRange>& calibration) {
  const WeightStore folded = fold_batchnorm(store);
  WeightStore out;
  for (const auto& [name, tensor] : folded) {
    const auto* f = std::get_if<DenseTensor>(&tensor);
    if (f && f->rank() >= 2 && name.rfind("calib.", 0) != 0) {
      out.set(name, quantize_affine(*f, Granularity::PerChannel));
    } else {
      out.set(name, tensor);
    }
  }
  for (const auto& [name, range] : calibration) {
    Eigen::VectorXf v(2);
    v << range.min, range.max;
    out.set("calib." + name, DenseTensor({2}, v));
  }
  return out;
}

MeshTopology load_topology(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed topology text: ") + e.what());
  }
  MeshTopology topo;
  try {
    const auto& levels = doc.at("levels");
    SPLITE_CHECK(levels.is_array(), "topology 'levels' must be an array");
    std::vector<std::vector<Eigen::Triplet<double>>> triplets;
    for (const auto& lv : levels) {
      MeshLevel level;
      level.num_vertices = lv.at("vertices").get<Index>();
      for (const auto& f : lv.at("faces")) level.faces.push_back({f.at(0).get<std::int32_t>(), f.at(1).get<std::int32_t>(), f.at(2).get<std::int32_t>()});
      if (lv.contains("positions")) {
        const auto& pos = lv.at("positions");
        level.positions.resize(static_cast<Index>(pos.size()), 3);
        for (std::size_t i = 0; i < pos.size(); ++i)
          for (int k = 0; k < 3; ++k) level.positions(static_cast<Index>(i), k) = pos[i].at(static_cast<std::size_t>(k)).get<double>();
      }
      std::vector<Eigen::Triplet<double>> t;
      if (lv.contains("upsample")) {
        for (const auto& e : lv.at("upsample")) {
          t.emplace_back(e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>());
        }
      }
      triplets.push_back(std::move(t));
      topo.levels.push_back(std::move(level));
    }
    for (std::size_t l = 0; l < topo.levels.size(); ++l) {
      if (triplets[l].empty() && l + 1 == topo.levels.size()) continue;
      SPLITE_CHECK(l + 1 < topo.levels.size(), "level " + std::to_string(l) + ": finest level has an upsample matrix");
      const Index rows = topo.levels[l + 1].num_vertices, cols = topo.levels[l].num_vertices;
      for (const auto& t : triplets[l]) {
        SPLITE_CHECK(t.row() >= 0 && t.row() < rows && t.col() >= 0 && t.col() < cols,
                     "level " + std::to_string(l) + ": upsample entry (" + std::to_string(t.row()) + ", " +
                         std::to_string(t.col()) + ") out of range");
      }
      topo.levels[l].upsample.resize(rows, cols);
      topo.levels[l].upsample.setFromTriplets(triplets[l].begin(), triplets[l].end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed topology text: ") + e.what());
  }
  topo.validate();
  return topo;
}

MeshTopology read_topology_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return load_topology(text);
}

std::string dump_topology(const MeshTopology& topology) {
  nlohmann::json doc;
  doc["levels"] = nlohmann::json::array();
  for (const MeshLevel& lv : topology.levels) {
    nlohmann::json level;
    level["vertices"] = lv.num_vertices;
    level["faces"] = lv.faces;
    if (lv.upsample.rows() > 0) {
      nlohmann::json up = nlohmann::json::array();
      for (Index r = 0; r < lv.upsample.outerSize(); ++r)
        for (UpsampleMatrix::InnerIterator it(lv.upsample, r); it; ++it) up.push_back({it.row(), it.col(), it.value()});
      level["upsample"] = std::move(up);
    }
    if (lv.positions.size() != 0) {
      nlohmann::json pos = nlohmann::json::array();
      for (Index i = 0; i < lv.positions.rows(); ++i) pos.push_back({lv.positions(i, 0), lv.positions(i, 1), lv.positions(i, 2)});
      level["positions"] = std::move(pos);
    }
    doc["levels"].push_back(std::move(level));
  }
  return doc.dump() + "\n";
}

}  // namespace splite
