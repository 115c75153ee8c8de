#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedsvm/config.hpp"
#include "fedsvm/metrics.hpp"
#include "fedsvm/round.hpp"

namespace fedsvm {

FederatedDataset build_dataset(const RunConfig& config, std::uint64_t seed);
Model init_model(const RunConfig& config, const FederatedDataset& dataset,
                 std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundRecord> records;
  std::optional<std::string> error;
  Model final_model;
};

struct ExperimentResult {
  std::string strategy;
  std::size_t rounds = 0;
  double target_accuracy = 0.0;
  std::vector<SeedRun> runs;

  bool ok() const;
};

using RecordSink = std::function<void(const RoundRecord&)>;

/// Runs every seed sequentially. A failing seed is recorded with its error
/// and the remaining seeds still run. `sink` sees each record as produced.
ExperimentResult run_experiment(const RunConfig& config, const RecordSink& sink = {});

// CSV schema: seed,round,strategy,loss,accuracy,f1,mcc,lambda,sv_counts,ms
extern const char* const kRoundsHeader;
std::string format_record(const RoundRecord& record);
RoundRecord parse_record(const std::string& line);

struct StrategySummary {
  std::string strategy;
  std::size_t rounds = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<std::size_t>> rounds_to_target;  // per seed
  std::vector<double> accuracy, f1, mcc, loss;                // final round, per seed

  /// "mean±std" cell, or ">T" if any seed missed the target.
  std::string rounds_cell() const;
  std::optional<MeanStd> rounds_stats() const;
};

/// Successful seeds only.
StrategySummary summarize(const ExperimentResult& result, double target_accuracy);

/// rounds.csv, summary.csv and summary.txt under config.output_dir.
/// Returns false if any seed failed.
bool run_and_write(const RunConfig& config, ExperimentResult* out = nullptr);

void write_summary_csv(std::ostream& out, const StrategySummary& summary);
void write_compare_csv(std::ostream& out, const std::vector<StrategySummary>& rows);
std::string format_compare_table(const std::vector<StrategySummary>& rows,
                                 double target_accuracy);

/// Configs must agree on dataset, model, seeds, rounds, target and C.
void require_comparable(const std::vector<RunConfig>& configs);

struct CompareResult {
  std::vector<StrategySummary> rows;
  std::vector<ExperimentResult> runs;
  bool ok = true;
};

/// Runs each config and writes rounds.csv (all strategies), compare.csv and
/// summary.txt to output_dir.
CompareResult compare_strategies(const std::vector<RunConfig>& configs,
                                 const std::filesystem::path& output_dir);

struct SweepRow {
  std::size_t embedding_dim = 0;
  std::size_t clients_per_round = 0;
  std::size_t round = 0;
  double sv_count = 0.0;  // mean over seeds, class index 1
  double f1 = 0.0;        // mean final macro-F1
  std::vector<std::uint64_t> seeds;  // successful seeds
  std::vector<std::size_t> seed_sv_counts;
  std::vector<double> seed_f1;
};

/// Grid over (d, C) for a turbosvm config. The SV count is read at
/// experiment.sv_round (default min(T, 200)).
std::vector<SweepRow> sv_sweep(const RunConfig& base,
                               const std::vector<std::size_t>& embedding_dims,
                               const std::vector<std::size_t>& clients_per_round,
                               bool* ok = nullptr);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_seeds_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace fedsvm
