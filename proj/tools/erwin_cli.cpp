// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "erwin/bench.hpp"
#include "erwin/gradcheck_battery.hpp"
#include "erwin/model.hpp"
#include "erwin/probe.hpp"
#include "erwin/train.hpp"

namespace {

using namespace erwin;

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw InputError("cannot open output file: " + path);
  return file;
}

PointCloud make_cloud(const std::string& input, const std::string& kind, i64 n, int dim, u64 seed) {
  if (!input.empty()) return load_csv(input, dim);
  SyntheticSpec spec;
  spec.kind = parse_cloud_kind(kind);
  spec.n = n;
  spec.d = dim;
  spec.seed = seed;
  return generate(spec);
}

int run(int argc, char** argv) {
  CLI::App app{"Ball-tree transformer benchmark and verification tool"};
  app.require_subcommand(1);

  // Shared knobs; each subcommand registers the ones it honors.
  std::string input, kind = "uniform-box", config_path, csv_path;
  i64 n = 1024;
  int dim = 3;
  u64 seed = 0;
  int threads = 1;

  auto add_cloud_flags = [&](CLI::App* cmd) {
    cmd->add_option("--input", input, "CSV input path ('-' for stdin)");
    cmd->add_option("--kind", kind, "synthetic cloud kind: uniform-box|gaussian-blobs|chain-polymer|annulus");
    cmd->add_option("--n", n, "synthetic cloud size");
    cmd->add_option("--dim", dim, "spatial dimension (2 or 3)");
    cmd->add_option("--seed", seed, "random seed");
  };

  // build
  auto* cmd_build = app.add_subcommand("build", "build a ball tree and dump its levels");
  add_cloud_flags(cmd_build);
  bool dump_rotated = false;
  cmd_build->add_option("--csv", csv_path, "output path (default stdout)");
  cmd_build->add_flag("--rotated", dump_rotated, "dump the tree built on rotated coordinates");

  // bench-scaling
  auto* cmd_scaling = app.add_subcommand("bench-scaling", "forward-runtime scaling and power-law fit");
  std::vector<i64> sizes;
  i64 repeats = 5, batch = 16;
  bool abstract_cost = false, measure_backward = false;
  cmd_scaling->add_option("--sizes", sizes, "point counts per cloud")->delimiter(',');
  cmd_scaling->add_option("--seed", seed, "random seed");
  cmd_scaling->add_option("--config", config_path, "model config file");
  cmd_scaling->add_option("--csv", csv_path, "output path (default stdout)");
  cmd_scaling->add_flag("--abstract-cost", abstract_cost, "count kernel operations instead of wall time");
  cmd_scaling->add_option("--threads", threads, "worker count (reported; compute is single-threaded)");
  cmd_scaling->add_option("--repeats", repeats, "timed repetitions per size (>= 5)");
  cmd_scaling->add_option("--batch", batch, "independent clouds per measurement");
  cmd_scaling->add_flag("--backward", measure_backward, "also time the backward pass");
  cmd_scaling->add_option("--dim", dim, "spatial dimension (2 or 3)");

  // bench-tree
  auto* cmd_tree = app.add_subcommand("bench-tree", "tree-construction share of total runtime");
  cmd_tree->add_option("--sizes", sizes, "point counts per cloud")->delimiter(',');
  cmd_tree->add_option("--seed", seed, "random seed");
  cmd_tree->add_option("--config", config_path, "model config file");
  cmd_tree->add_option("--csv", csv_path, "output path (default stdout)");
  cmd_tree->add_option("--threads", threads, "parallel workers for batch tree construction");
  cmd_tree->add_option("--repeats", repeats, "timed repetitions per size (>= 5)");
  cmd_tree->add_option("--batch", batch, "independent clouds per measurement");
  cmd_tree->add_option("--dim", dim, "spatial dimension (2 or 3)");

  // probe-rf
  auto* cmd_probe = app.add_subcommand("probe-rf", "gradient-based receptive field of one output node");
  std::string probe_model = "erwin";
  i64 target = 0;
  int mp_steps = 6, mp_k = 16;
  i64 ball = 16;
  i64 feat_width = 2;
  cmd_probe->add_option("--model", probe_model, "erwin|mpnn|single-ball");
  cmd_probe->add_option("--target", target, "output node index");
  cmd_probe->add_option("--config", config_path, "model config file (erwin mode)");
  cmd_probe->add_option("--csv", csv_path, "output path (default stdout)");
  cmd_probe->add_option("--steps", mp_steps, "message-passing layers (mpnn mode)");
  cmd_probe->add_option("--knn", mp_k, "neighbors per node (mpnn mode)");
  cmd_probe->add_option("--ball", ball, "window size (single-ball mode)");
  cmd_probe->add_option("--features", feat_width, "random input feature width");
  add_cloud_flags(cmd_probe);

  // train
  auto* cmd_train = app.add_subcommand("train", "synthetic-task training loop");
  std::string task = "density-regression", save_path;
  i64 steps = 1000;
  double lr = 0.0;
  cmd_train->add_option("--task", task, "density-regression|com-offset|linear");
  cmd_train->add_option("--steps", steps, "optimizer steps");
  cmd_train->add_option("--n", n, "training cloud size");
  cmd_train->add_option("--seed", seed, "random seed");
  cmd_train->add_option("--lr", lr, "learning rate (0 = task default)");
  cmd_train->add_option("--csv", csv_path, "loss-curve output path (default stdout)");
  cmd_train->add_option("--save", save_path, "write trained weights to this checkpoint file");

  // gradcheck
  auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference checks of all differentiable ops");
  cmd_grad->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0, anything invalid is 2
  }

  std::ofstream file;
  if (cmd_build->parsed()) {
    const PointCloud cloud = make_cloud(input, kind, n, dim, seed);
    std::ostream& out = open_output(csv_path, file);
    if (dump_rotated)
      build_rotated(cloud, RotationSpec::default_for(static_cast<int>(cloud.dim()))).dump(out);
    else
      build_tree(cloud).dump(out);
    return 0;
  }

  if (cmd_scaling->parsed() || cmd_tree->parsed()) {
    BenchOptions opts;
    opts.sizes = sizes.empty() ? std::vector<i64>{1024, 2048, 4096, 8192, 16384, 32768, 65536} : sizes;
    opts.batch = batch;
    opts.repeats = repeats;
    opts.seed = seed;
    opts.abstract_cost = abstract_cost;
    opts.measure_backward = measure_backward;
    opts.threads = threads;
    opts.model = config_path.empty() ? default_bench_config(dim) : load_config(config_path);
    std::ostream& out = open_output(csv_path, file);
    if (cmd_scaling->parsed()) {
      const ScalingResult result = bench_scaling(opts);
      write_scaling_csv(out, result, opts.abstract_cost);
      if (result.fit.valid)
        std::cerr << "fit: runtime = " << result.fit.coeff << " * n^" << result.fit.beta << "  (r2=" << result.fit.r2
                  << ")\n";
      else
        std::cerr << result.fit.message << "\n";
    } else {
      write_treebuild_csv(out, bench_treebuild(opts));
    }
    return 0;
  }

  if (cmd_probe->parsed()) {
    PointCloud cloud = make_cloud(input, kind, n, dim, seed);
    ErwinConfig cfg;
    if (probe_model == "erwin") {
      cfg = config_path.empty() ? default_bench_config(static_cast<int>(cloud.dim())) : load_config(config_path);
      cfg.in_features = feat_width;
    } else if (probe_model == "mpnn") {
      cfg = mpnn_probe_config(static_cast<int>(cloud.dim()), feat_width, mp_steps, mp_k);
    } else if (probe_model == "single-ball") {
      cfg = single_ball_probe_config(static_cast<int>(cloud.dim()), feat_width, ball);
    } else {
      throw ConfigError("unknown probe model: " + probe_model);
    }
    if (!cloud.features) {
      Rng rng(seed ^ 0x9defULL);
      Matrix feats(cloud.size(), cfg.in_features);
      for (double& v : feats.data) v = rng.normal();
      cloud.features = feats;
    } else {
      cfg.in_features = cloud.features->cols;
    }
    ParamStore<double> params = init_params<double>(cfg);
    const auto mask = probe_receptive_field(cfg, params, cloud, target);
    std::ostream& out = open_output(csv_path, file);
    out << "index";
    for (int c = 0; c < static_cast<int>(cloud.dim()); ++c) out << ",x" << c;
    out << ",in_field\n";
    i64 hits = 0;
    for (i64 i = 0; i < cloud.size(); ++i) {
      out << i;
      for (int c = 0; c < static_cast<int>(cloud.dim()); ++c) out << "," << cloud.positions.at(i, c);
      out << "," << static_cast<int>(mask[static_cast<size_t>(i)]) << "\n";
      hits += mask[static_cast<size_t>(i)];
    }
    std::cerr << "receptive field: " << hits << " of " << cloud.size() << " nodes\n";
    return 0;
  }

  if (cmd_train->parsed()) {
    TrainOptions opts;
    opts.task = parse_train_task(task);
    opts.steps = steps;
    opts.seed = seed;
    opts.n = n;
    opts.lr = lr;
    ParamStore<double> trained;
    if (!save_path.empty()) opts.params_out = &trained;
    const TrainResult result = train_synthetic(opts);
    std::ostream& out = open_output(csv_path, file);
    write_loss_csv(out, result);
    if (result.diverged) {
      std::cerr << "training diverged: " << result.diagnostic << "\n";
      return 1;
    }
    std::cerr << "loss " << result.initial_loss << " -> " << result.final_loss << " (ratio "
              << (result.initial_loss > 0 ? result.final_loss / result.initial_loss : 0.0) << ")\n";
    if (!save_path.empty()) trained.save(save_path);
    return 0;
  }

  if (cmd_grad->parsed()) {
    bool all_pass = true;
    for (const auto& entry : run_gradcheck_battery(seed)) {
      std::cout << (entry.pass ? "pass" : "FAIL") << "  " << entry.name << "  max_rel_err=" << entry.max_rel_err
                << " (tol " << entry.tolerance << ")\n";
      all_pass &= entry.pass;
    }
    const BatteryEntry model_entry = run_model_gradcheck(64, 20, seed);
    std::cout << (model_entry.pass ? "pass" : "FAIL") << "  " << model_entry.name
              << "  max_rel_err=" << model_entry.max_rel_err << " (tol " << model_entry.tolerance << ")\n";
    all_pass &= model_entry.pass;
    return all_pass ? 0 : 1;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const erwin::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const erwin::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const erwin::ArgError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const erwin::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
