#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "splite/mesh.hpp"
#include "splite/quantize.hpp"
#include "splite/tensor.hpp"

namespace splite {

/// Dtype tags of the weight container.
enum class DType : std::uint8_t { F32 = 0, I8 = 1, I32 = 2 };

struct IntTensor {
  Shape shape;
  std::vector<std::int32_t> data;
  friend bool operator==(const IntTensor&, const IntTensor&) = default;
};

using StoredTensor = std::variant<DenseTensor, QuantizedTensor, IntTensor>;

DType dtype_of(const StoredTensor& t);
const Shape& shape_of(const StoredTensor& t);

/// Named parameters ordered by name (dot-separated paths).
class WeightStore {
 public:
  using Map = std::map<std::string, StoredTensor>;

  void set(const std::string& name, StoredTensor tensor);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  void erase(const std::string& name) { entries_.erase(name); }

  /// Throws MissingParameter.
  const StoredTensor& at(const std::string& name) const;

  /// The entry as f32: i8 entries are dequantized. Throws MissingParameter, or
  /// InvalidArgument when the shape differs from `expected` (if given).
  DenseTensor dense(const std::string& name, const Shape& expected = {}) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  /// True when some entry is int8.
  bool quantized() const;

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

 private:
  Map entries_;
};

/// Raised when container bytes are not a valid weight file.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, BadChecksum, Truncated, Malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint8_t kWeightFormatVersion = 1;

/// CRC-32 (IEEE 802.3, as in zlib).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Container layout, little-endian: "SPLW", u8 version, then per entry
/// u16 name length, UTF-8 name, u8 dtype, u8 rank, rank × u32 dims,
/// [i8 only: u8 granularity, f32 scales (1 or dims[0]), i32 zero point],
/// raw data; finally u32 CRC-32 of all preceding bytes.
std::vector<std::uint8_t> save_weights(const WeightStore& store);
WeightStore load_weights(std::span<const std::uint8_t> bytes);

void write_weights_file(const std::filesystem::path& path, const WeightStore& store);
WeightStore read_weights_file(const std::filesystem::path& path);

/// Convolution weights with matching batch-norm statistics folded in:
/// every `P.convK.weight` with `P.bnK.{weight,bias,running_mean,running_var}`
/// becomes a scaled weight plus `P.convK.bias`; the bn entries are dropped.
WeightStore fold_batchnorm(const WeightStore& store, float epsilon = 1e-5f);

/// BN-folded store with every f32 tensor of rank >= 2 quantized per output
/// channel (symmetric int8). Vectors stay f32. Each calibration range is stored
/// as `calib.<name>` = [min, max]. int8 entries are left untouched.
WeightStore quantize_store(const WeightStore& store, const std::map<std::string, ActivationRange>& calibration = {});

/// Structured-text (JSON) mesh hierarchy:
/// {"levels": [{"vertices": V, "faces": [[a,b,c],...],
///              "upsample": [[row, col, value], ...], "positions": [[x,y,z],...]}]}
/// "upsample" is absent on the finest level and "positions" is optional.
MeshTopology load_topology(std::string_view text);
MeshTopology read_topology_file(const std::filesystem::path& path);
std::string dump_topology(const MeshTopology& topology);

}  // namespace splite
