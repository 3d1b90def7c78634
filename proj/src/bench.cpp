#include "splite/bench.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cstdio>
#include <sstream>

#include "splite/mesh.hpp"
#include "splite/model_io.hpp"
#include "splite/preproc.hpp"
#include "splite/random.hpp"

namespace splite {

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
double time_ms(int warmup, int repeats, Fn&& fn) {
  for (int i = 0; i < warmup; ++i) fn();
  const auto t0 = Clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RowMatrixXf random_rows(Rng& rng, Index rows, Index cols, double stddev) {
  RowMatrixXf m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(stddev * rng.normal());
  return m;
}

}  // namespace

std::vector<ConvBenchRow> bench_conv(const ConvBenchOptions& options) {
  SPLITE_CHECK(options.repeats > 0 && options.warmup >= 0 && options.trials > 0, "benchmark repeats must be positive");
  BackboneConfig config;
  config.arch = options.arch;
  WeightStore store;
  init_backbone_weights(store, config, options.seed);
  const Backbone net = Backbone::from_store(store, config);
  const std::size_t n = options.sparsities.size();
  std::vector<FusedInput> inputs;
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(synth_fused_input(options.input_size, options.sparsities[i], options.seed + i));
  }
  auto run_sparse = [&](const FusedInput& in) {
    if (options.full_network) {
      net.forward(in.tensor, options.ctx);
    } else {
      net.run_sparse_stages(in.tensor, options.ctx);
    }
  };
  auto run_dense = [&](const FusedInput& in) {
    if (options.full_network) {
      net.forward_dense(in.tensor, false, options.ctx);
    } else {
      net.run_dense_stages(in.tensor, options.ctx);
    }
  };
  const int trials = std::min(options.trials, options.repeats);
  const int per_trial = options.repeats / trials;
  std::vector<double> best_sparse(n, std::numeric_limits<double>::infinity()), best_dense = best_sparse;
  for (std::size_t i = 0; i < n; ++i) {
    time_ms(options.warmup, 0, [&] { run_sparse(inputs[i]); });
    time_ms(options.warmup, 0, [&] { run_dense(inputs[i]); });
  }
  for (int t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      best_sparse[i] = std::min(best_sparse[i], time_ms(0, per_trial, [&] { run_sparse(inputs[i]); }));
      best_dense[i] = std::min(best_dense[i], time_ms(0, per_trial, [&] { run_dense(inputs[i]); }));
    }
  }
  std::vector<ConvBenchRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = options.sparsities[i];
    rows.push_back({arch_name(options.arch), "sparse", s, per_trial * 1000.0 / best_sparse[i]});
    rows.push_back({arch_name(options.arch), "dense", s, per_trial * 1000.0 / best_dense[i]});
  }
  return rows;
}

std::string conv_bench_csv(const std::vector<ConvBenchRow>& rows) {
  std::ostringstream out;
  out << "arch,mode,sparsity,fps\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%s,%.2f,%.3f\n", r.arch.c_str(), r.mode.c_str(), r.sparsity, r.fps);
    out << line;
  }
  return out.str();
}

DecoderBench bench_decoder(int repeats, int batches, std::uint64_t seed, const ExecContext& ctx) {
  SPLITE_CHECK(repeats > 0 && batches > 0, "benchmark repeats and batches must be positive");
  const MeshTopology topology = make_hand_template_topology();
  DecoderConfig lite, full;
  full.partial = false;
  Rng rng(seed);

  auto make = [&](const DecoderConfig& config) {
    SpliteDecoder dec(config, topology);
    dec.reduce_weight = random_rows(rng, config.width, config.feature_channels, 0.05);
    for (auto& layer : dec.layers()) layer.weights = random_rows(rng, layer.channels, layer.weights.cols(), 0.05);
    dec.head_weight = random_rows(rng, 3, config.width, 0.05);
    return dec;
  };
  const SpliteDecoder lite_dec = make(lite), full_dec = make(full);
  const RowMatrixXf features = random_rows(rng, topology.level(0).num_vertices, lite.feature_channels, 1.0);
  std::vector<RowMatrixXf> level_inputs;
  for (Index l = 0; l < topology.num_levels(); ++l) {
    level_inputs.push_back(random_rows(rng, topology.level(l).num_vertices, lite.width, 1.0));
  }

  DecoderBench bench;
  const std::vector<Index>& sizes = hand_level_sizes();
  bench.splite_unit = count_spiral_layer(lite.width, lite.gathered_channels(), lite.spiral_length, 1);
  bench.spiralpp_unit = count_spiral_layer(full.width, full.gathered_channels(), full.spiral_length, 1);
  bench.splite_total = count_params_flops(lite, sizes);
  bench.spiralpp_total = count_params_flops(full, sizes);

  const RowMatrixXf lite_ref = lite_dec.decode(features, ctx), full_ref = full_dec.decode(features, ctx);
  auto layers = [&](const SpliteDecoder& dec) {
    for (std::size_t l = 0; l < level_inputs.size(); ++l) {
      const RowMatrixXf y = splite_layer(level_inputs[l], dec.layers()[l], dec.tables()[l], ctx);
      (void)y;
    }
  };
  for (int b = 0; b < batches; ++b) {
    DecoderBatchTiming t;
    // Alternate which variant runs first so neither one gets a warmer cache.
    auto run_lite = [&] {
      t.splite_ms = time_ms(1, repeats, [&] {
        if (lite_dec.decode(features, ctx) != lite_ref) bench.outputs_stable = false;
      }) / repeats;
      t.splite_layers_ms = time_ms(1, repeats, [&] { layers(lite_dec); }) / repeats;
    };
    auto run_full = [&] {
      t.spiralpp_ms = time_ms(1, repeats, [&] {
        if (full_dec.decode(features, ctx) != full_ref) bench.outputs_stable = false;
      }) / repeats;
      t.spiralpp_layers_ms = time_ms(1, repeats, [&] { layers(full_dec); }) / repeats;
    };
    if (b % 2 == 0) {
      run_lite();
      run_full();
    } else {
      run_full();
      run_lite();
    }
    bench.batches.push_back(t);
  }
  return bench;
}

}  // namespace splite
