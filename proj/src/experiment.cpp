#include "fedsvm/experiment.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {

constexpr double kNotEvaluated = std::numeric_limits<double>::quiet_NaN();

Rng seeded(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), purpose};
  return Rng(seq);
}

std::string num(double v) { return std::isnan(v) ? std::string() : fmt::format("{}", v); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s) { return s.empty() ? kNotEvaluated : std::stod(s); }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  return out;
}

std::string mean_std_cell(const std::vector<double>& v, const char* spec) {
  if (v.empty()) return "n/a";
  const auto s = mean_std(v);
  return fmt::format(fmt::runtime(std::string(spec) + "±" + spec), s.mean, s.std);
}

}  // namespace

FederatedDataset build_dataset(const RunConfig& config, std::uint64_t seed) {
  const auto& dc = config.dataset;
  const std::uint64_t data_seed = dc.seed_from_run ? seed : dc.synthetic.seed;
  switch (dc.kind) {
    case DatasetKind::Synthetic: {
      SyntheticSpec spec = dc.synthetic;
      spec.seed = data_seed;
      return generate_synthetic(spec);
    }
    case DatasetKind::Idx:
      return partition_by_client(load_idx(dc.images, dc.labels),
                                 dc.synthetic.num_clients, dc.synthetic.dirichlet_alpha,
                                 data_seed);
    case DatasetKind::File:
      return load_dataset(dc.file);
  }
  throw Error("unknown dataset kind");
}

Model init_model(const RunConfig& config, const FederatedDataset& dataset,
                 std::uint64_t seed) {
  auto rng = seeded(seed, 4);
  return Model::initialize(dataset.feature_dim, config.model.hidden_widths,
                           config.model.embedding_dim, dataset.num_classes, rng);
}

bool ExperimentResult::ok() const {
  return std::none_of(runs.begin(), runs.end(),
                      [](const SeedRun& r) { return r.error.has_value(); });
}

ExperimentResult run_experiment(const RunConfig& config, const RecordSink& sink) {
  config.validate();
  ExperimentResult result;
  result.strategy = config.display_name();
  result.rounds = config.rounds;
  result.target_accuracy = config.target_accuracy;
  for (auto seed : config.seeds) {
    SeedRun run;
    run.seed = seed;
    try {
      const auto dataset = build_dataset(config, seed);
      if (config.clients_per_round > dataset.train_clients.size()) {
        throw ConfigError(fmt::format(
            "experiment.clients_per_round = {} exceeds the dataset's {} training clients",
            config.clients_per_round, dataset.train_clients.size()));
      }
      Model model = init_model(config, dataset, seed);
      auto state = make_server_state(config.strategy, dataset.num_clients());
      auto rng = seeded(seed, 5);
      for (std::size_t t = 0; t < config.rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        auto round = run_round(t, model, dataset, config.clients_per_round,
                               config.strategy, config.client, state, rng);
        model = std::move(round.model);
        auto& rec = round.record;
        rec.seed = seed;
        rec.strategy = config.display_name();
        rec.accuracy = rec.f1 = rec.mcc = kNotEvaluated;
        if ((t + 1) % config.eval_stride == 0 || t + 1 == config.rounds) {
          const auto cm = confusion(model, dataset);
          rec.accuracy = accuracy(cm);
          rec.f1 = macro_f1(cm);
          rec.mcc = mcc(cm);
        }
        if (config.record_wall_clock) {
          rec.ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
        }
        if (sink) sink(rec);
        run.records.push_back(std::move(rec));
      }
      run.final_model = std::move(model);
    } catch (const std::exception& e) {
      run.error = fmt::format("seed {}: {}", seed, e.what());
    }
    result.runs.push_back(std::move(run));
  }
  return result;
}

const char* const kRoundsHeader =
    "seed,round,strategy,loss,accuracy,f1,mcc,lambda,sv_counts,ms";

std::string format_record(const RoundRecord& r) {
  std::string svs;
  for (std::size_t i = 0; i < r.sv_counts.size(); ++i) {
    if (i) svs += ';';
    svs += std::to_string(r.sv_counts[i]);
  }
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", r.seed, r.round, r.strategy,
                     num(r.loss), num(r.accuracy), num(r.f1), num(r.mcc),
                     r.lambda ? num(*r.lambda) : "", svs, r.ms ? num(*r.ms) : "");
}

RoundRecord parse_record(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != 10) {
    throw FormatError(fmt::format("rounds CSV row has {} fields, expected 10", f.size()));
  }
  RoundRecord r;
  try {
    r.seed = std::stoull(f[0]);
    r.round = std::stoull(f[1]);
    r.strategy = f[2];
    r.loss = parse_num(f[3]);
    r.accuracy = parse_num(f[4]);
    r.f1 = parse_num(f[5]);
    r.mcc = parse_num(f[6]);
    if (!f[7].empty()) r.lambda = std::stod(f[7]);
    if (!f[8].empty()) {
      for (const auto& s : split(f[8], ';')) r.sv_counts.push_back(std::stoull(s));
    }
    if (!f[9].empty()) r.ms = std::stod(f[9]);
  } catch (const std::logic_error&) {
    throw FormatError("malformed rounds CSV row: " + line);
  }
  return r;
}

std::optional<MeanStd> StrategySummary::rounds_stats() const {
  std::vector<double> v;
  for (const auto& r : rounds_to_target) {
    if (!r) return std::nullopt;
    v.push_back(static_cast<double>(*r));
  }
  if (v.empty()) return std::nullopt;
  return mean_std(v);
}

std::string StrategySummary::rounds_cell() const {
  const auto s = rounds_stats();
  if (!s) return fmt::format(">{}", rounds);
  return fmt::format("{:.1f}±{:.1f}", s->mean, s->std);
}

StrategySummary summarize(const ExperimentResult& result, double target_accuracy) {
  StrategySummary s;
  s.strategy = result.strategy;
  s.rounds = result.rounds;
  for (const auto& run : result.runs) {
    if (run.error || run.records.empty()) continue;
    std::vector<double> series;
    for (const auto& r : run.records) series.push_back(r.accuracy);
    s.seeds.push_back(run.seed);
    s.rounds_to_target.push_back(rounds_to_target(series, target_accuracy));
    const auto& last = run.records.back();
    s.accuracy.push_back(last.accuracy);
    s.f1.push_back(last.f1);
    s.mcc.push_back(last.mcc);
    s.loss.push_back(last.loss);
  }
  return s;
}

void write_summary_csv(std::ostream& out, const StrategySummary& s) {
  out << "seed,rounds_to_target,accuracy,f1,mcc,loss\n";
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    out << fmt::format("{},{},{},{},{},{}\n", s.seeds[i],
                       format_rounds(s.rounds_to_target[i], s.rounds), num(s.accuracy[i]),
                       num(s.f1[i]), num(s.mcc[i]), num(s.loss[i]));
  }
  if (s.seeds.empty()) return;
  const auto rs = s.rounds_stats();
  const auto a = mean_std(s.accuracy), f = mean_std(s.f1), m = mean_std(s.mcc),
             l = mean_std(s.loss);
  out << fmt::format("mean,{},{},{},{},{}\n",
                     rs ? num(rs->mean) : fmt::format(">{}", s.rounds), num(a.mean),
                     num(f.mean), num(m.mean), num(l.mean));
  out << fmt::format("std,{},{},{},{},{}\n", rs ? num(rs->std) : "", num(a.std),
                     num(f.std), num(m.std), num(l.std));
}

void write_compare_csv(std::ostream& out, const std::vector<StrategySummary>& rows) {
  out << "strategy,rounds_to_target,rounds_to_target_std,seeds_reached,accuracy_mean,"
         "accuracy_std,f1_mean,f1_std,mcc_mean,mcc_std\n";
  for (const auto& s : rows) {
    const auto rs = s.rounds_stats();
    const auto reached = std::count_if(s.rounds_to_target.begin(), s.rounds_to_target.end(),
                                       [](const auto& r) { return r.has_value(); });
    std::string metrics;
    for (const auto* v : {&s.accuracy, &s.f1, &s.mcc}) {
      if (v->empty()) {
        metrics += ",,";
      } else {
        const auto ms = mean_std(*v);
        metrics += fmt::format(",{},{}", num(ms.mean), num(ms.std));
      }
    }
    out << fmt::format("{},{},{},{}{}\n", s.strategy,
                       rs ? num(rs->mean) : fmt::format(">{}", s.rounds),
                       rs ? num(rs->std) : "", reached, metrics);
  }
}

std::string format_compare_table(const std::vector<StrategySummary>& rows,
                                 double target_accuracy) {
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"strategy", fmt::format("rounds to {:.0f}%", target_accuracy * 100),
                   "F1", "accuracy", "MCC"});
  for (const auto& s : rows) {
    cells.push_back({s.strategy, s.rounds_cell(), mean_std_cell(s.f1, "{:.4f}"),
                     mean_std_cell(s.accuracy, "{:.4f}"), mean_std_cell(s.mcc, "{:.4f}")});
  }
  std::array<std::size_t, 5> width{};
  // "±" is two bytes but one column.
  auto columns = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], columns(row[i]));
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 5; ++i) {
      out += row[i];
      if (i + 1 < 5) out += std::string(width[i] - columns(row[i]) + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

bool run_and_write(const RunConfig& config, ExperimentResult* out) {
  std::filesystem::create_directories(config.output_dir);
  auto rounds = open_out(config.output_dir / "rounds.csv");
  rounds << kRoundsHeader << '\n' << std::flush;
  auto result = run_experiment(config, [&](const RoundRecord& r) {
    rounds << format_record(r) << '\n' << std::flush;
  });
  const auto summary = summarize(result, config.target_accuracy);
  {
    auto csv = open_out(config.output_dir / "summary.csv");
    write_summary_csv(csv, summary);
  }
  {
    auto txt = open_out(config.output_dir / "summary.txt");
    txt << format_compare_table({summary}, config.target_accuracy);
    for (const auto& run : result.runs) {
      if (run.error) txt << "FAILED " << *run.error << '\n';
    }
  }
  const bool ok = result.ok();
  if (out) *out = std::move(result);
  return ok;
}

void require_comparable(const std::vector<RunConfig>& configs) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const auto& a = configs.front();
  for (std::size_t i = 1; i < configs.size(); ++i) {
    const auto& b = configs[i];
    auto mismatch = [&](const char* what) {
      throw ConfigError(fmt::format("config {} ({}) differs from config 1 ({}) in {}",
                                    i + 1, b.display_name(), a.display_name(), what));
    };
    if (!(a.dataset == b.dataset)) mismatch("[dataset]");
    if (!(a.model == b.model)) mismatch("[model]");
    if (a.seeds != b.seeds) mismatch("experiment.seeds");
    if (a.rounds != b.rounds) mismatch("experiment.rounds");
    if (a.target_accuracy != b.target_accuracy) mismatch("experiment.target_accuracy");
    if (a.clients_per_round != b.clients_per_round) {
      mismatch("experiment.clients_per_round");
    }
  }
}

CompareResult compare_strategies(const std::vector<RunConfig>& configs,
                                 const std::filesystem::path& output_dir) {
  require_comparable(configs);
  std::filesystem::create_directories(output_dir);
  auto rounds = open_out(output_dir / "rounds.csv");
  rounds << kRoundsHeader << '\n' << std::flush;
  CompareResult result;
  for (const auto& config : configs) {
    auto run = run_experiment(config, [&](const RoundRecord& r) {
      rounds << format_record(r) << '\n' << std::flush;
    });
    result.ok = result.ok && run.ok();
    result.rows.push_back(summarize(run, config.target_accuracy));
    result.runs.push_back(std::move(run));
  }
  {
    auto csv = open_out(output_dir / "compare.csv");
    write_compare_csv(csv, result.rows);
  }
  {
    auto txt = open_out(output_dir / "summary.txt");
    txt << format_compare_table(result.rows, configs.front().target_accuracy);
    for (const auto& run : result.runs) {
      for (const auto& s : run.runs) {
        if (s.error) txt << "FAILED " << run.strategy << ' ' << *s.error << '\n';
      }
    }
  }
  return result;
}

std::vector<SweepRow> sv_sweep(const RunConfig& base,
                               const std::vector<std::size_t>& embedding_dims,
                               const std::vector<std::size_t>& clients_per_round,
                               bool* ok) {
  if (base.strategy.kind != ServerKind::TurboSvm) {
    throw ConfigError("sweep requires strategy.name = turbosvm");
  }
  if (base.dataset.synthetic.num_classes < 2) {
    throw ConfigError("sweep reports class index 1 and needs at least 2 classes");
  }
  const std::size_t at = base.sv_round.value_or(std::min<std::size_t>(base.rounds, 200));
  std::vector<SweepRow> rows;
  bool all_ok = true;
  for (auto d : embedding_dims) {
    for (auto c : clients_per_round) {
      RunConfig cfg = base;
      cfg.model.embedding_dim = d;
      cfg.clients_per_round = c;
      cfg.validate();
      const auto result = run_experiment(cfg);
      all_ok = all_ok && result.ok();
      SweepRow row{d, c, at, 0.0, 0.0, {}, {}, {}};
      for (const auto& run : result.runs) {
        if (run.error) continue;
        row.seeds.push_back(run.seed);
        row.seed_sv_counts.push_back(run.records.at(at - 1).sv_counts.at(1));
        row.seed_f1.push_back(run.records.back().f1);
      }
      if (!row.seed_f1.empty()) {
        std::vector<double> svs(row.seed_sv_counts.begin(), row.seed_sv_counts.end());
        row.sv_count = mean_std(svs).mean;
        row.f1 = mean_std(row.seed_f1).mean;
      }
      rows.push_back(std::move(row));
    }
  }
  if (ok) *ok = all_ok;
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "d,C,round,sv_count,f1\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{}\n", r.embedding_dim, r.clients_per_round, r.round,
                       num(r.sv_count), num(r.f1));
  }
}

void write_sweep_seeds_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "d,C,seed,round,sv_count,f1\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      out << fmt::format("{},{},{},{},{},{}\n", r.embedding_dim, r.clients_per_round,
                         r.seeds[i], r.round, r.seed_sv_counts[i], num(r.seed_f1[i]));
    }
  }
}

}  // namespace fedsvm
