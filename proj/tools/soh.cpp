// soh: capacity-fade modelling from battery cycling logs.
//
// Exit status: 0 success, 1 I/O error, 2 usage error, 3 parse error,
// 4 data error, 5 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "soh/error.hpp"
#include "soh/features.hpp"
#include "soh/ingest.hpp"
#include "soh/metrics.hpp"
#include "soh/pipeline.hpp"
#include "soh/synth.hpp"

namespace fs = std::filesystem;
using namespace soh;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw Error(Errc::IoError, "write to '" + p.string() + "' failed");
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("soh");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SOH_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(env));
}

struct Options {
  std::vector<std::string> logs;
  std::string model;
  std::vector<std::string> tables;
  std::string out = ".";
  std::string variant = "c";
  double alpha = 0.05;
  double level = 0.90;
  double eol = metrics::kDefaultEolFraction;
  synth::SynthConfig synth;
  std::string synth_out;
};

int cmd_ingest(const Options& o) {
  for (const auto& path : o.logs) {
    const ingest::CellHistory h = ingest::load_cell(path);
    const auto refs = ingest::measure_references(h);
    const auto phases = ingest::segment_phases(h);
    std::cout << h.cell_id << ": " << h.steps.size() << " steps, " << refs.size() << " reference discharges, "
              << phases.size() << " RW phases, " << h.warnings.size() << " warnings\n";

    std::ostringstream caps;
    caps << "reference,step,t_start,raw_capacity,adjusted_capacity,correction,flags\n";
    for (std::size_t k = 0; k < refs.size(); ++k) {
      const auto& r = refs[k];
      std::string flags;
      for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
      caps << k << ',' << r.step_index << ',' << to_decimal(r.t_start) << ',' << to_decimal(r.raw) << ','
           << to_decimal(r.adjusted) << ',' << to_decimal(r.correction) << ',' << flags << '\n';
    }
    write_file(fs::path(o.out) / (h.cell_id + "_references.csv"), caps.str());

    const auto rest = features::compute_rest_variance(std::span(phases));
    std::vector<features::FeatureVector> rows;
    for (std::size_t k = 0; k < phases.size(); ++k) {
      if (phases[k].m() == 0) continue;
      auto f = features::extract_features(phases[k], refs[k].adjusted, rest);
      f.target = features::build_target(refs.front().adjusted, refs[k + 1].adjusted);
      rows.push_back(std::move(f));
    }
    std::ostringstream table;
    features::write_feature_table(table, rows);
    write_file(fs::path(o.out) / (h.cell_id + "_features.csv"), table.str());
  }
  return 0;
}

int cmd_train(const Options& o) {
  pipeline::TrainOptions opt;
  opt.variant = pipeline::parse_variant(o.variant);
  opt.alpha = o.alpha;
  const ingest::CellHistory h = ingest::load_cell(o.logs.front());
  const pipeline::TrainResult r = pipeline::train(h, opt);
  const std::string summary = pipeline::summary_table(r.model);
  write_file(fs::path(o.out) / "model.json", pipeline::save_artifact(r.model));
  write_file(fs::path(o.out) / "summary.txt", summary);
  std::cout << summary;
  return 0;
}

int cmd_predict(const Options& o) {
  const pipeline::SohModel model = pipeline::load_artifact(read_file(o.model));
  // One task per log; outputs are written afterwards in input order.
  std::vector<std::future<std::vector<pipeline::PredictionRecord>>> jobs;
  for (const auto& path : o.logs) {
    jobs.push_back(std::async(std::launch::async, [&model, path, level = o.level] {
      return pipeline::predict_cell(model, ingest::load_cell(path), level);
    }));
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto records = jobs[i].get();
    const std::string cell = records.empty() ? fs::path(o.logs[i]).stem().string() : records.front().cell_id;
    std::ostringstream table;
    pipeline::write_predictions(table, records);
    write_file(fs::path(o.out) / (cell + "_predictions.csv"), table.str());
    write_file(fs::path(o.out) / (cell + "_predictions.svg"), pipeline::render_svg(records, cell));
    std::cout << cell << ": " << records.size() << " predictions\n";
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  for (const auto& path : o.tables) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
    const auto records = pipeline::read_predictions(in);
    const auto report = pipeline::evaluate_records(records, o.eol);
    const std::string cell = records.empty() ? fs::path(path).stem().string() : records.front().cell_id;
    metrics::print_block(std::cout, report, cell);
    write_file(fs::path(o.out) / (cell + "_report.csv"),
               std::string(metrics::kReportHeader) + "\n" + metrics::to_row(report) + "\n");
  }
  return 0;
}

int cmd_synth(const Options& o) {
  const ingest::CellHistory h = synth::generate(o.synth);
  std::ostringstream text;
  ingest::write_cell(text, h);
  const fs::path out = o.synth_out.empty() ? fs::path(o.out) / (o.synth.cell_id + ".log") : fs::path(o.synth_out);
  write_file(out, text.str());
  return 0;
}

int cmd_report(const Options& o) {
  std::cout << pipeline::summary_table(pipeline::load_artifact(read_file(o.model)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  Options o;
  CLI::App app{"Capacity-fade modelling from battery cycling logs"};
  app.set_config("--config", "", "Key/value configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  auto* ingest_cmd = app.add_subcommand("ingest", "Parse logs, report reference capacities and feature tables");
  ingest_cmd->add_option("logs", o.logs, "Cell log files")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", o.out, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Fit a model on the whole history of one cell");
  train_cmd->add_option("log", o.logs, "Training cell log")->required()->expected(1)->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", o.variant, "Feature set: a, b or c")->check(CLI::IsMember({"a", "b", "c"}));
  train_cmd->add_option("--alpha", o.alpha, "Significance level of the FP degree tests");
  train_cmd->add_option("--out", o.out, "Output directory");

  auto* predict_cmd = app.add_subcommand("predict", "Predict reference capacities of other cells");
  predict_cmd->add_option("model", o.model, "Model artifact")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("logs", o.logs, "Test cell logs")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--level", o.level, "Prediction interval level");
  predict_cmd->add_option("--out", o.out, "Output directory");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score prediction tables");
  eval_cmd->add_option("tables", o.tables, "Prediction tables")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--eol", o.eol, "End-of-life fraction of the nominal capacity");
  eval_cmd->add_option("--out", o.out, "Output directory");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cell log");
  synth_cmd->add_option("--seed", o.synth.seed, "Random seed");
  synth_cmd->add_option("--group", o.synth.group, "Protocol group 1..4");
  synth_cmd->add_option("--phases", o.synth.n_phases, "Number of RW phases");
  synth_cmd->add_option("--cell-id", o.synth.cell_id, "Cell identifier");
  synth_cmd->add_option("--fade", o.synth.fade_per_phase, "Capacity fade per phase (Ah)");
  synth_cmd->add_option("--fade-acceleration", o.synth.fade_acceleration, "Growth of fade with accumulated loss");
  synth_cmd->add_option("--recovery", o.synth.recovery_amplitude, "Capacity regained after a long rest (Ah)");
  synth_cmd->add_option("--long-rests", o.synth.long_rests, "Number of long rests");
  synth_cmd->add_option("--out", o.synth_out, "Output log file");

  auto* report_cmd = app.add_subcommand("report", "Print the coefficient table of a model artifact");
  report_cmd->add_option("model", o.model, "Model artifact")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::Usage);
  }

  try {
    if (*ingest_cmd) return cmd_ingest(o);
    if (*train_cmd) return cmd_train(o);
    if (*predict_cmd) return cmd_predict(o);
    if (*eval_cmd) return cmd_evaluate(o);
    if (*synth_cmd) return cmd_synth(o);
    if (*report_cmd) return cmd_report(o);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    spdlog::error("IoError: {}", e.what());
    return exit_code(ErrorCategory::Io);
  }
  return 0;
}
