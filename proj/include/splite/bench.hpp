#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splite/backbone.hpp"
#include "splite/decoder.hpp"

namespace splite {

struct ConvBenchOptions {
  Arch arch = Arch::ResNet18;
  std::vector<double> sparsities{0.80, 0.85, 0.90};
  int repeats = 50;
  int warmup = 5;
  /// Repeats are split into this many rounds, interleaved across sparsities;
  /// each configuration reports its fastest round.
  int trials = 5;
  /// false: stem through the last sparse stage; true: the whole encoder.
  bool full_network = false;
  int input_size = 128;
  std::uint64_t seed = 0;
  ExecContext ctx;
};

struct ConvBenchRow {
  std::string arch;
  std::string mode;  // "sparse" or "dense"
  double sparsity = 0;
  double fps = 0;
};

/// Per sparsity, sparse and dense encoder throughput on one synthetic input:
/// repeats / total time after `warmup` untimed runs. Rows are ordered by
/// sparsity, sparse before dense.
std::vector<ConvBenchRow> bench_conv(const ConvBenchOptions& options);

/// "arch,mode,sparsity,fps" plus one line per row.
std::string conv_bench_csv(const std::vector<ConvBenchRow>& rows);

struct DecoderBatchTiming {
  double splite_ms = 0;        // full decoder, per pass
  double spiralpp_ms = 0;
  double splite_layers_ms = 0;  // spiral layers only, per pass
  double spiralpp_layers_ms = 0;
};

struct DecoderBench {
  std::vector<DecoderBatchTiming> batches;
  CostCount splite_unit, spiralpp_unit;    // one layer; FLOPs per vertex
  CostCount splite_total, spiralpp_total;  // over all mesh levels
  bool outputs_stable = true;              // identical outputs across repeats
};

/// Times partial-channel and full-channel decoders with identical topology,
/// random weights and inputs.
DecoderBench bench_decoder(int repeats, int batches, std::uint64_t seed, const ExecContext& ctx = {});

}  // namespace splite
