/******************************************************************************
 * Copyright 2026 The isac-v2x Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/


#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isac/experiment.hpp"
#include "isac/nr_frame.hpp"

namespace isac::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 1;
  int trials = 1;
  std::string snr_list = "20";
  std::string out_dir = "out";
  std::string scheme = "both";
  std::string protocol = "connected";
  std::string recovery;
  std::optional<int> subband;
  std::optional<int> slots;
  bool traces = true;
};

class SnrListError : public Error {
 public:
  using Error::Error;
};

class OutputError : public Error {
 public:
  using Error::Error;
};

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw SnrListError("invalid SNR value '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size() || !std::isfinite(v)) {
      throw SnrListError("invalid SNR value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw SnrListError("empty SNR list");
  return out;
}

std::vector<Scheme> parse_schemes(const std::string& name) {
  if (name == "both") return {Scheme::kConventional, Scheme::kIsac};
  return {parse_scheme(name)};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw OutputError("write failed for '" + path.string() + "'");
}

std::string run_tag(const RunReport& r) {
  return std::string(scheme_name(r.scheme)) + "_snr" + format_number(r.snr_db) + "_seed" +
         std::to_string(r.seed);
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) {
    if (i > 1) s += ' ';
    s += argv[i];
  }
  return s;
}

/// Angle-error CDF pooled over the seeds of each (scheme, snr) pair.
std::string theta_cdf_csv(const std::vector<RunReport>& runs) {
  std::map<std::pair<std::string, double>, std::vector<double>> pooled;
  for (const auto& r : runs) {
    if (r.error) continue;
    auto& v = pooled[{scheme_name(r.scheme), r.snr_db}];
    for (const auto& row : r.rows) {
      if (std::isfinite(row.est_theta)) v.push_back(std::abs(row.est_theta - row.true_theta));
    }
  }
  std::string out = "scheme,snr_db,probability,theta_error\n";
  for (const auto& [key, values] : pooled) {
    if (values.empty()) continue;
    const auto q = empirical_quantiles(values, 100);
    for (std::size_t k = 0; k < q.size(); ++k) {
      out += key.first + ',' + format_number(key.second) + ',' +
             format_number(static_cast<double>(k + 1) / 100.0) + ',' + format_number(q[k]) + '\n';
    }
  }
  return out;
}

/// BER and throughput per (scheme, snr), pooled over seeds.
std::string snr_curve_csv(const std::vector<RunReport>& runs) {
  struct Acc {
    std::uint64_t errors = 0, bits = 0;
    double tput = 0.0, theta = 0.0;
    int n = 0;
  };
  std::map<std::pair<std::string, double>, Acc> acc;
  for (const auto& r : runs) {
    if (r.error || !r.summary) continue;
    Acc& a = acc[{scheme_name(r.scheme), r.snr_db}];
    a.errors += r.summary->bit_errors;
    a.bits += r.summary->bits;
    a.tput += r.summary->throughput_mbps;
    a.theta += r.summary->theta_rmse;
    ++a.n;
  }
  std::string out = "scheme,snr_db,runs,ber,throughput_mbps,theta_rmse\n";
  for (const auto& [key, a] : acc) {
    const double ber = a.bits ? static_cast<double>(a.errors) / a.bits : std::nan("");
    out += key.first + ',' + format_number(key.second) + ',' + std::to_string(a.n) + ',' +
           format_number(ber) + ',' + format_number(a.tput / a.n) + ',' +
           format_number(a.theta / a.n) + '\n';
  }
  return out;
}

int run_overhead(const Options& opt, const ExperimentConfig& cfg, const fs::path& out) {
  const ProtocolConfig& pc = cfg.protocol;
  const FramePlan conv = build_frame_plan(Scheme::kConventional, pc.numerology, pc.frame);
  std::string table =
      "scheme,oh_fraction,rs_fraction,csirs_fraction,ssb_fraction,rs_reduction,"
      "training_reduction,throughput_mbps\n";
  const double ts = numerology_params(pc.numerology).avg_symbol_duration;
  for (Scheme s : parse_schemes(opt.scheme)) {
    const FramePlan plan = build_frame_plan(s, pc.numerology, pc.frame);
    const OverheadMetrics m = overhead_metrics(plan, conv);
    ThroughputInputs in;
    in.bits_per_symbol = pc.bits_per_symbol;
    in.prb_count = pc.frame.prb_count;
    in.avg_symbol_duration = ts;
    in.overhead = m.oh_fraction;
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.5f,%.5f,%.5f,%.5f,%.5f,%.5f,%.3f\n", scheme_name(s),
                  m.oh_fraction, m.rs_fraction, m.csirs_fraction, m.ssb_fraction,
                  m.rs_reduction_vs, m.training_reduction_vs, throughput(in));
    table += line;
    write_file(out / (std::string("frame_plan_") + scheme_name(s) + ".json"),
               frame_plan_json(plan));
  }
  write_file(out / "overhead.csv", table);
  std::cout << table;
  return kOk;
}

int run_batch(ProtocolKind protocol, const Options& opt, const ExperimentConfig& cfg,
              const std::vector<double>& snrs, const fs::path& out) {
  ExperimentPlan plan;
  plan.protocol = protocol;
  plan.schemes = parse_schemes(opt.scheme);
  plan.snr_db = snrs;
  plan.seeds.clear();
  for (int t = 0; t < opt.trials; ++t) plan.seeds.push_back(opt.seed + static_cast<std::uint64_t>(t));
  plan.config = cfg;

  const std::vector<RunReport> runs = run_experiment(plan);
  write_file(out / "summary.json", summary_json(runs));

  int failures = 0;
  for (const auto& r : runs) {
    if (r.error) {
      ++failures;
      std::cerr << "run " << run_tag(r) << " failed: " << *r.error << '\n';
    }
  }
  if (protocol == ProtocolKind::kInitialAccess) {
    write_file(out / "ia_table.csv", ia_table_csv(runs));
  } else {
    if (opt.traces) {
      for (const auto& r : runs) {
        if (r.error) continue;
        write_file(out / ("rows_" + run_tag(r) + ".csv"), rows_csv(r.rows));
        write_file(out / ("events_" + run_tag(r) + ".jsonl"), events_to_jsonl(r.events));
      }
    }
    write_file(out / "theta_cdf.csv", theta_cdf_csv(runs));
    write_file(out / "snr_curve.csv", snr_curve_csv(runs));
    if (protocol == ProtocolKind::kBfr) write_file(out / "bfr_table.csv", bfr_table_csv(runs));
  }
  std::cout << runs.size() << " run(s) written to " << out.string() << '\n';
  return failures == static_cast<int>(runs.size()) ? kRuntimeError : kOk;
}

ExperimentConfig effective_config(const Options& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty()) cfg = load_experiment_config(opt.config_path);
  if (opt.subband) {
    cfg.protocol.radar_subcarriers = *opt.subband;
    cfg.protocol.ia_subcarriers = *opt.subband;
  }
  if (!opt.recovery.empty()) cfg.protocol.isac_recovery = parse_strategy(opt.recovery);
  if (opt.slots) {
    if (*opt.slots < 1) throw ConfigError("--slots must be positive");
    cfg.scenario.set_slot_count(*opt.slots);
  } else if (opt.subcommand == "bfr" ||
             (opt.subcommand == "sweep" && opt.protocol == "bfr")) {
    // A BFR run only needs the blockage and a short tail after it.
    const Blockage b = cfg.scenario.blockage ? *cfg.scenario.blockage
                                             : default_blockage(cfg.protocol);
    const int needed = b.start_slot + b.duration_slots + 160;
    if (cfg.scenario.slot_count > needed) cfg.scenario.set_slot_count(needed);
  }
  cfg.protocol.validate();
  cfg.scenario.validate();
  return cfg;
}

int dispatch(const Options& opt, int argc, char** argv) {
  std::vector<double> snrs;
  try {
    snrs = parse_snr_list(opt.snr_list);
  } catch (const SnrListError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadSnrList;
  }

  ExperimentConfig cfg;
  try {
    cfg = effective_config(opt);
    (void)parse_schemes(opt.scheme);
    if (opt.subcommand == "sweep") (void)parse_protocol(opt.protocol);
    if (opt.trials < 1) throw ConfigError("--trials must be positive");
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const fs::path out(opt.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw OutputError("cannot create output directory '" + out.string() + "'");
    write_file(out / "manifest.json",
               manifest_json(cfg, command_line(argc, argv), opt.seed, snrs));

    if (opt.subcommand == "overhead") return run_overhead(opt, cfg, out);
    ProtocolKind kind = ProtocolKind::kConnected;
    if (opt.subcommand == "ia") kind = ProtocolKind::kInitialAccess;
    if (opt.subcommand == "bfr") kind = ProtocolKind::kBfr;
    if (opt.subcommand == "sweep") kind = parse_protocol(opt.protocol);
    return run_batch(kind, opt, cfg, snrs, out);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int parse_and_dispatch(int argc, char** argv) {
  CLI::App app{"Sensing-assisted V2I beam management link-level simulator", "isac_sim"};
  app.require_subcommand(1, 1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "base seed");
    sub->add_option("--trials", opt.trials, "number of consecutive seeds from --seed");
    sub->add_option("--snr", opt.snr_list, "comma-separated receive SNR list in dB");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--scheme", opt.scheme, "conventional, isac or both");
    sub->add_option("--subband", opt.subband, "radar subband subcarrier count");
    sub->add_option("--slots", opt.slots, "number of simulated slots");
    sub->add_option("--recovery", opt.recovery, "ISAC recovery: beam_training, sub6, nlos");
  };
  for (const char* name : {"ia", "connected", "bfr", "overhead"}) {
    CLI::App* sub = app.add_subcommand(name);
    add_common(sub);
    sub->callback([&opt, name] { opt.subcommand = name; });
  }
  CLI::App* sweep = app.add_subcommand("sweep", "cross-product batch over schemes, SNRs and seeds");
  add_common(sweep);
  sweep->add_option("--protocol", opt.protocol, "ia, connected or bfr");
  sweep->add_flag("!--no-traces", opt.traces, "skip the per-run CSV and event files");
  sweep->callback([&opt] { opt.subcommand = "sweep"; });
  app.get_subcommand("ia")->description("initial access latency, angle error and detection tables");
  app.get_subcommand("connected")->description("connected-mode tracking, BER and throughput");
  app.get_subcommand("bfr")->description("beam failure detection latency and recovery traces");
  app.get_subcommand("overhead")->description("frame plans and overhead reduction table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  return dispatch(opt, argc, argv);
}

}  // namespace isac::cli
