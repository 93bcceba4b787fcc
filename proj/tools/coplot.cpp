// Command-line simulator: synthetic collaborative-perception runs, sweeps and
// micro-benchmarks with CSV/JSON reports.

#include "coplot/pipeline.hpp"
#include "coplot/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using namespace coplot;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ordering;
  std::optional<std::size_t> top_k;
  std::optional<double> pos_std;
  std::optional<double> rot_std;
  std::optional<int> threads;
  std::optional<double> grid_interval;
  std::optional<std::string> score_mode;
  std::string out_dir = ".";
  bool timings = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Scenario JSON document");
  cmd->add_option("--seed", f.seed, "Scene, weight and noise seed");
  cmd->add_option("--ordering", f.ordering, "raster, zorder, hilbert, random or semantic");
  cmd->add_option("--top-k", f.top_k, "Tokens each neighbor transmits");
  cmd->add_option("--noise-pos-std", f.pos_std, "Neighbor position noise std (m)");
  cmd->add_option("--noise-rot-std", f.rot_std, "Neighbor heading noise std (rad)");
  cmd->add_option("--threads", f.threads, "Worker threads");
  cmd->add_option("--grid-interval", f.grid_interval, "Token grid interval (m)");
  cmd->add_option("--score-mode", f.score_mode, "oracle or learned filter scores");
  cmd->add_option("--out-dir", f.out_dir, "Directory for reports");
  cmd->add_flag("--timings", f.timings, "Include wall times in JSON reports");
}

ScenarioConfig resolve(const CommonFlags& f) {
  ScenarioConfig c = f.config.empty() ? ScenarioConfig{} : load_scenario(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.ordering) c.model.encoder.ordering = parse_ordering(*f.ordering);
  if (f.top_k) c.top_k = *f.top_k;
  if (f.pos_std) c.noise.pos_std = *f.pos_std;
  if (f.rot_std) c.noise.rot_std = *f.rot_std;
  if (f.threads) c.threads = *f.threads;
  if (f.grid_interval) c.tokenizer.grid_interval = *f.grid_interval;
  if (f.score_mode) c.score_mode = parse_score_mode(*f.score_mode);
  if (f.timings) c.timings = true;
  c.validate();
  return c;
}

std::string out_path(const CommonFlags& f, const std::string& name) {
  std::filesystem::create_directories(f.out_dir);
  return (std::filesystem::path(f.out_dir) / name).string();
}

void emit(const std::string& path, const std::string& text) {
  write_text(path, text);
  std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coplot: point-level token collaborative perception simulator"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, noise_f, order_f;
  auto* run = app.add_subcommand("run", "Single end-to-end run; writes run.json");
  add_common(run, run_f);

  auto* sweep = app.add_subcommand("sweep-k", "Top-k sweep; writes sweep_k.csv and sweep_k.json");
  add_common(sweep, sweep_f);
  std::vector<std::size_t> ks{128, 256, 512, 768, 1024, 1300, 1536, 2048, 2560, 3072, 3584, 4096};
  sweep->add_option("--ks", ks, "k values");

  auto* noise = app.add_subcommand("sweep-noise",
                                   "Localization-noise sweep; writes sweep_noise.csv and .json");
  add_common(noise, noise_f);
  std::vector<double> pos_levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  double rot_per_pos = 0.0;
  noise->add_option("--pos-levels", pos_levels, "Position noise std values (m)");
  noise->add_option("--rot-per-pos", rot_per_pos,
                    "Heading std per metre of position std (rad/m)");

  auto* order = app.add_subcommand("ordering-bench", "Locality of every token ordering");
  add_common(order, order_f);
  int k_nearest = 8;
  order->add_option("--neighbors", k_nearest, "Spatial neighbours per token");

  auto* ssm = app.add_subcommand("ssm-bench", "Scan wall time vs sequence length");
  std::string ssm_out = ".";
  std::vector<std::size_t> lengths{1024, 2048, 4096, 8192, 16384, 32768, 65536};
  int ssm_d = 64, ssm_state = 16, repeats = 5;
  std::uint64_t ssm_seed = 0;
  ssm->add_option("--lengths", lengths, "Sequence lengths");
  ssm->add_option("--d", ssm_d, "Channels");
  ssm->add_option("--n-state", ssm_state, "State width");
  ssm->add_option("--repeats", repeats, "Timed repeats per length (fastest kept)");
  ssm->add_option("--seed", ssm_seed, "Input seed");
  ssm->add_option("--out-dir", ssm_out, "Directory for ssm_bench.csv");

  auto* rep = app.add_subcommand("report", "Re-emit a saved run/sweep JSON as CSV");
  std::string input, rep_out;
  rep->add_option("input", input, "run.json or sweep JSON file")->required();
  rep->add_option("--output", rep_out, "CSV destination (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      const ScenarioConfig c = resolve(run_f);
      const RunReport r = run_pipeline(c);
      emit(out_path(run_f, "run.json"), report_to_json(r));
      std::cout << "fg_recall " << format_number(r.fg_recall) << "  neighbor_bytes "
                << r.neighbor_total_bytes << "  flops " << r.flops_total << "\n";
    } else if (*sweep) {
      const ScenarioConfig c = resolve(sweep_f);
      const auto reports = sweep_k(c, ks);
      emit(out_path(sweep_f, "sweep_k.csv"), sweep_csv(reports));
      emit(out_path(sweep_f, "sweep_k.json"), sweep_json(reports));
    } else if (*noise) {
      const ScenarioConfig c = resolve(noise_f);
      std::vector<NoisePoint> points;
      for (double p : pos_levels) points.push_back({p, p * rot_per_pos});
      const auto reports = sweep_noise(c, points);
      emit(out_path(noise_f, "sweep_noise.csv"), sweep_csv(reports));
      emit(out_path(noise_f, "sweep_noise.json"), sweep_json(reports));
    } else if (*order) {
      const ScenarioConfig c = resolve(order_f);
      emit(out_path(order_f, "ordering_bench.csv"), ordering_csv(ordering_bench(c, k_nearest)));
    } else if (*ssm) {
      const auto rows = scan_bench(lengths, ssm_d, ssm_state, repeats, ssm_seed);
      std::filesystem::create_directories(ssm_out);
      emit((std::filesystem::path(ssm_out) / "ssm_bench.csv").string(), scan_csv(rows));
    } else if (*rep) {
      const std::string text = read_text(input);
      std::vector<RunReport> reports;
      const auto first = text.find_first_not_of(" \t\r\n");
      if (first != std::string::npos && text[first] == '[') {
        for (const auto& item : nlohmann::json::parse(text)) {
          reports.push_back(report_from_json(item.dump()));
        }
      } else {
        reports.push_back(report_from_json(text));
      }
      const std::string csv = sweep_csv(reports);
      if (rep_out.empty()) {
        std::cout << csv;
      } else {
        emit(rep_out, csv);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
