#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "splite/bench.hpp"
#include "splite/losses.hpp"
#include "splite/model_io.hpp"
#include "splite/pipeline.hpp"
#include "splite/quant_exec.hpp"

namespace fs = std::filesystem;
using namespace splite;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SPLITE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InvalidArgument(std::string("SPLITE_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

MeshTopology load_or_generate_topology(const std::string& path) {
  return path.empty() ? make_hand_template_topology() : read_topology_file(path);
}

std::string format_ms(double ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", ms);
  return buf;
}

std::size_t file_size(const fs::path& p) { return static_cast<std::size_t>(fs::file_size(p)); }

int cmd_edge(const std::string& input, const std::string& detector, const std::string& out) {
  const Image image = read_image(input);
  const Image gray = image.channels == 1 ? image : to_grayscale(image);
  DenseTensor edges;
  if (detector == "sobel") {
    edges = sobel_edges(gray);
  } else if (detector == "canny") {
    edges = canny_edges(gray);
  } else {
    throw InvalidArgument("unknown detector '" + detector + "' (expected sobel or canny)");
  }
  write_edge_pgm(out, edges);
  std::printf("sparsity %.6f\n", sparsity(edges));
  return 0;
}

struct InferOptions {
  std::string weights, topology, image, intrinsics, out, image_id, reference;
  bool quantized = false;
};

int cmd_infer(const InferOptions& o, const ExecContext& ctx) {
  const WeightStore store = read_weights_file(o.weights);
  const MeshTopology topology = load_or_generate_topology(o.topology);
  const Image image = read_image(o.image);
  const CameraIntrinsics camera =
      o.intrinsics.empty() ? default_intrinsics(image.width, image.height) : read_intrinsics_file(o.intrinsics);
  ModelConfig config;
  config.quantize_activations = o.quantized;
  const HandModel model(store, topology, config);
  const Prediction p = model.predict(image, camera, ctx);
  const std::string id = o.image_id.empty() ? fs::path(o.image).stem().string() : o.image_id;
  const std::string line = to_json_line(p.record(id));
  if (o.out.empty()) {
    std::cout << line << '\n';
  } else {
    std::ofstream f(o.out);
    if (!f) throw IoError("cannot write " + o.out);
    f << line << '\n';
    if (!f) throw IoError("cannot write " + o.out);
  }
  std::cerr << "timing_ms preproc=" << format_ms(p.timings.preproc_ms) << " encode=" << format_ms(p.timings.encode_ms)
            << " lift=" << format_ms(p.timings.lift_ms) << " decode=" << format_ms(p.timings.decode_ms) << '\n';

  if (!o.reference.empty()) {
    const WeightStore ref_store = read_weights_file(o.reference);
    check_store_match(ref_store, store);
    const HandModel ref(ref_store, topology, ModelConfig{});
    const Prediction r = ref.predict(image, camera, ctx);
    const Eigen::VectorXd joint = (p.joints - r.joints).rowwise().norm() * 1000.0;
    std::cerr << "delta_mm mean_joint=" << format_ms(joint.mean()) << " max_joint=" << format_ms(joint.maxCoeff())
              << " pa_mpjpe=" << format_ms(pa_mpjpe<double>(p.joints, r.joints))
              << " mean_vertex=" << format_ms((p.vertices - r.vertices).rowwise().norm().mean() * 1000.0) << '\n';
  }
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      SPLITE_CHECK(used == item.size(), "bad number '" + item + "'");
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad number '" + item + "' in list");
    }
  }
  SPLITE_CHECK(!out.empty(), "empty list");
  return out;
}

int cmd_bench_conv(ConvBenchOptions o, const std::string& sparsities, const std::string& arch, const std::string& scope,
                   const std::string& out) {
  o.sparsities = parse_list(sparsities);
  for (double s : o.sparsities) SPLITE_CHECK(s >= 0 && s < 1, "sparsities must lie in [0, 1)");
  o.arch = parse_arch(arch);
  SPLITE_CHECK(scope == "sparse-stages" || scope == "full", "scope must be sparse-stages or full");
  o.full_network = scope == "full";
  const std::string csv = conv_bench_csv(bench_conv(o));
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << csv;
  }
  return 0;
}

int cmd_bench_decoder(int repeats, int batches, std::uint64_t seed, const ExecContext& ctx) {
  const DecoderBench b = bench_decoder(repeats, batches, seed, ctx);
  std::printf("unit,params,flops_per_vertex\n");
  std::printf("spiralconv++,%lld,%lld\n", static_cast<long long>(b.spiralpp_unit.params),
              static_cast<long long>(b.spiralpp_unit.flops));
  std::printf("splite,%lld,%lld\n", static_cast<long long>(b.splite_unit.params),
              static_cast<long long>(b.splite_unit.flops));
  std::printf("batch,spiralconv++_ms,splite_ms,speedup,spiralconv++_layers_ms,splite_layers_ms,layer_speedup\n");
  for (std::size_t i = 0; i < b.batches.size(); ++i) {
    const auto& t = b.batches[i];
    std::printf("%zu,%.4f,%.4f,%.3f,%.4f,%.4f,%.3f\n", i, t.spiralpp_ms, t.splite_ms, t.spiralpp_ms / t.splite_ms,
                t.spiralpp_layers_ms, t.splite_layers_ms, t.spiralpp_layers_ms / t.splite_layers_ms);
  }
  std::printf("outputs_stable,%s\n", b.outputs_stable ? "true" : "false");
  return b.outputs_stable ? 0 : kExitInvalid;
}

int cmd_flops(Index width, Index length) {
  DecoderConfig lite, full;
  lite.width = full.width = width;
  lite.spiral_length = full.spiral_length = length;
  full.partial = false;
  const auto& sizes = hand_level_sizes();
  std::printf("level,vertices,spiralconv++_params,spiralconv++_flops,splite_params,splite_flops\n");
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const CostCount f = count_spiral_layer(width, full.gathered_channels(), length, sizes[l]);
    const CostCount s = count_spiral_layer(width, lite.gathered_channels(), length, sizes[l]);
    std::printf("%zu,%lld,%lld,%lld,%lld,%lld\n", l, static_cast<long long>(sizes[l]), static_cast<long long>(f.params),
                static_cast<long long>(f.flops), static_cast<long long>(s.params), static_cast<long long>(s.flops));
  }
  const CostCount ft = count_params_flops(full, sizes), st = count_params_flops(lite, sizes);
  std::printf("total,-,%lld,%lld,%lld,%lld\n", static_cast<long long>(ft.params), static_cast<long long>(ft.flops),
              static_cast<long long>(st.params), static_cast<long long>(st.flops));
  const CostCount fu = count_spiral_layer(width, full.gathered_channels(), length, 1);
  const CostCount su = count_spiral_layer(width, lite.gathered_channels(), length, 1);
  std::printf("unit,1,%lld,%lld,%lld,%lld\n", static_cast<long long>(fu.params), static_cast<long long>(fu.flops),
              static_cast<long long>(su.params), static_cast<long long>(su.flops));
  std::printf("param_ratio,%.4f\n", static_cast<double>(fu.params) / static_cast<double>(su.params));
  return 0;
}

int cmd_quantize(const std::string& in, const std::string& out, int calibrate, const std::string& topology_path,
                 std::uint64_t seed, const ExecContext& ctx) {
  const WeightStore store = read_weights_file(in);
  std::map<std::string, ActivationRange> ranges;
  if (calibrate > 0) {
    const HandModel model(store, load_or_generate_topology(topology_path));
    std::vector<FusedInput> inputs;
    for (int i = 0; i < calibrate; ++i) inputs.push_back(synth_fused_input(kInputSize, 0.9, seed + static_cast<std::uint64_t>(i)));
    ranges = calibrate_activations(model, inputs, ctx);
  }
  write_weights_file(out, quantize_store(store, ranges));
  const std::size_t a = file_size(in), b = file_size(out);
  std::printf("f32_bytes %zu\nint8_bytes %zu\nratio %.4f\n", a, b, static_cast<double>(b) / static_cast<double>(a));
  return 0;
}

struct EvalOptions {
  std::string pred, gt, intrinsics, topology;
  LossWeights weights;
};

int cmd_eval(const EvalOptions& opts) {
  opts.weights.validate();
  const auto pred = read_records(opts.pred);
  const auto gt = read_records(opts.gt);
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& r : gt) by_id[r.image_id] = &r;
  SPLITE_CHECK(!pred.empty(), "no predictions in " + opts.pred);
  const bool with_camera = !opts.intrinsics.empty();
  const CameraIntrinsics camera = with_camera ? read_intrinsics_file(opts.intrinsics) : CameraIntrinsics{};
  const MeshTopology topology = load_or_generate_topology(opts.topology);
  const MeshLevel& finest = topology.level(topology.num_levels() - 1);
  const std::vector<Edge> edges = face_edges(finest.faces);

  double total = 0;
  LossComponents sum;
  for (const auto& p : pred) {
    auto it = by_id.find(p.image_id);
    SPLITE_CHECK(it != by_id.end(), "no ground truth for image " + p.image_id);
    const PredictionRecord& g = *it->second;
    total += pa_mpjpe<double>(p.joints, g.joints);
    if (with_camera) sum.reproj += reprojection_loss(p.joints, g.uv, camera).value;
    sum.pose += pose3d_loss(p.joints, g.joints).value;
    sum.depth += depth_loss(p.joints.col(2), g.joints.col(2)).value;
    if (p.vertices.rows() == finest.num_vertices) sum.smooth += smoothness_loss(p.vertices, edges).value;
  }
  const auto n = static_cast<double>(pred.size());
  std::printf("images %zu\npa_mpjpe_mm %.6f\n", pred.size(), total / n);
  sum = {sum.reproj / n, sum.pose / n, sum.depth / n, sum.smooth / n};
  if (with_camera) {
    std::printf("loss_reproj %.9g\n", sum.reproj);
  } else {
    std::printf("loss_reproj n/a (no --intrinsics)\n");
  }
  std::printf("loss_pose %.9g\nloss_depth %.9g\nloss_smooth %.9g\nloss_total %.9g\n", sum.pose, sum.depth,
              sum.smooth, aggregate_loss(sum, opts.weights));
  return 0;
}

int cmd_init_weights(const std::string& out, const std::string& topology_path, std::uint64_t seed) {
  WeightStore store;
  init_model_weights(store, load_or_generate_topology(topology_path), ModelConfig{}, seed);
  write_weights_file(out, store);
  std::printf("parameters %zu\nbytes %zu\n", store.size(), file_size(out));
  return 0;
}

int cmd_gen_topology(const std::string& out, std::uint64_t seed) {
  const MeshTopology topo = make_hand_template_topology(seed);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << dump_topology(topo);
  if (!f) throw IoError("cannot write " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse edge-based hand mesh reconstruction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--threads", threads, "Worker threads for data-parallel kernels")->check(CLI::PositiveNumber);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { seed = v, seed_given = true; }, "Random seed (default: $SPLITE_SEED or 0)");

  std::string edge_in, edge_detector = "canny", edge_out;
  auto* edge = app.add_subcommand("edge", "Write an edge map and print its sparsity");
  edge->add_option("--input", edge_in, "Input image (PNG, PGM or PPM)")->required();
  edge->add_option("--detector", edge_detector, "sobel or canny");
  edge->add_option("--out", edge_out, "Output PGM path")->required();

  InferOptions infer_opts;
  auto* infer = app.add_subcommand("infer", "Predict joints and mesh for one image");
  infer->add_option("--weights", infer_opts.weights, "Weight file")->required();
  infer->add_option("--topology", infer_opts.topology, "Mesh topology JSON (default: built-in template)");
  infer->add_option("--image", infer_opts.image, "Input image")->required();
  infer->add_option("--intrinsics", infer_opts.intrinsics, "Camera intrinsics JSON");
  infer->add_flag("--quantized", infer_opts.quantized, "Fake-quantize activations with the stored calibration");
  infer->add_option("--reference", infer_opts.reference, "f32 weight file to report deltas against");
  infer->add_option("--out", infer_opts.out, "Prediction record output (default: stdout)");
  infer->add_option("--image-id", infer_opts.image_id, "Record id (default: image file stem)");

  ConvBenchOptions bench_opts;
  std::string sparsities = "0.80,0.85,0.90", arch = "resnet18", scope = "sparse-stages", bench_out;
  auto* bconv = app.add_subcommand("bench-conv", "Sparse vs dense encoder throughput (CSV)");
  bconv->add_option("--sparsities", sparsities, "Comma-separated input sparsities");
  bconv->add_option("--repeats", bench_opts.repeats, "Timed repetitions")->check(CLI::PositiveNumber);
  bconv->add_option("--warmup", bench_opts.warmup, "Untimed warm-up runs")->check(CLI::NonNegativeNumber);
  bconv->add_option("--trials", bench_opts.trials, "Interleaved timing rounds (best round is reported)")
      ->check(CLI::PositiveNumber);
  bconv->add_option("--arch", arch, "resnet18 or resnet50");
  bconv->add_option("--scope", scope, "sparse-stages or full");
  bconv->add_option("--out", bench_out, "CSV output (default: stdout)");

  int dec_repeats = 50, dec_batches = 5;
  auto* bdec = app.add_subcommand("bench-decoder", "Partial vs full-channel spiral decoder latency");
  bdec->add_option("--repeats", dec_repeats, "Passes per batch")->check(CLI::PositiveNumber);
  bdec->add_option("--batches", dec_batches, "Timed batches")->check(CLI::PositiveNumber);

  Index width = 48, length = 9;
  auto* flops = app.add_subcommand("flops", "Closed-form decoder parameter and FLOP counts");
  flops->add_option("--width", width, "Decoder channels")->check(CLI::PositiveNumber);
  flops->add_option("--spiral-length", length, "Spiral length")->check(CLI::PositiveNumber);

  std::string q_in, q_out, q_topology;
  int q_calibrate = 0;
  auto* quant = app.add_subcommand("quantize", "Write an int8 weight file");
  quant->add_option("--weights", q_in, "f32 weight file")->required();
  quant->add_option("--out", q_out, "Output weight file")->required();
  quant->add_option("--calibrate", q_calibrate, "Synthetic inputs for activation ranges (0: weights only)")
      ->check(CLI::NonNegativeNumber);
  quant->add_option("--topology", q_topology, "Mesh topology JSON used during calibration");

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "PA-MPJPE and training losses between prediction and ground-truth records");
  eval->add_option("--pred", eval_opts.pred, "Prediction records")->required();
  eval->add_option("--gt", eval_opts.gt, "Ground-truth records")->required();
  eval->add_option("--intrinsics", eval_opts.intrinsics, "Camera intrinsics JSON (enables the reprojection loss)");
  eval->add_option("--topology", eval_opts.topology, "Mesh topology JSON for smoothness edges");
  eval->add_option("--w-reproj", eval_opts.weights.reproj, "Reprojection loss weight")->check(CLI::NonNegativeNumber);
  eval->add_option("--w-pose", eval_opts.weights.pose, "3D pose loss weight")->check(CLI::NonNegativeNumber);
  eval->add_option("--w-depth", eval_opts.weights.depth, "Depth loss weight")->check(CLI::NonNegativeNumber);
  eval->add_option("--w-smooth", eval_opts.weights.smooth, "Smoothness loss weight")->check(CLI::NonNegativeNumber);

  std::string w_out, w_topology;
  auto* initw = app.add_subcommand("init-weights", "Write randomly initialized model weights");
  initw->add_option("--out", w_out, "Output weight file")->required();
  initw->add_option("--topology", w_topology, "Mesh topology JSON (default: built-in template)");

  std::string t_out;
  auto* gentopo = app.add_subcommand("gen-topology", "Write the built-in template mesh hierarchy as JSON");
  gentopo->add_option("--out", t_out, "Output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (!seed_given) seed = default_seed();
    const ExecContext ctx{threads};
    if (*edge) return cmd_edge(edge_in, edge_detector, edge_out);
    if (*infer) return cmd_infer(infer_opts, ctx);
    if (*bconv) {
      bench_opts.seed = seed;
      bench_opts.ctx = ctx;
      return cmd_bench_conv(bench_opts, sparsities, arch, scope, bench_out);
    }
    if (*bdec) return cmd_bench_decoder(dec_repeats, dec_batches, seed, ctx);
    if (*flops) return cmd_flops(width, length);
    if (*quant) return cmd_quantize(q_in, q_out, q_calibrate, q_topology, seed, ctx);
    if (*eval) return cmd_eval(eval_opts);
    if (*initw) return cmd_init_weights(w_out, w_topology, seed);
    if (*gentopo) return cmd_gen_topology(t_out, seed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
