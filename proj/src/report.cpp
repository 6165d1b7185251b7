#include <istream>
#include <ostream>

#include "cfner/error.hpp"
#include "cfner/protocol.hpp"

namespace cfner {

std::string code_version() { return std::string("cfner ") + CFNER_VERSION; }

void write_report_jsonl(std::ostream& out, const ExperimentReport& report) {
  for (const auto& seed : report.seeds) {
    for (const auto& step : seed.steps) {
      nlohmann::json record = {{"type", "step"},
                               {"method", to_string(report.config.method)},
                               {"seed", seed.seed},
                               {"step", step.step},
                               {"recognized_types", step.recognized_types},
                               {"micro_f1", step.micro_f1},
                               {"macro_f1", step.macro_f1},
                               {"per_type_f1", step.per_type_f1},
                               {"best_epoch", step.best_epoch},
                               {"validation_micro_f1", step.validation_micro_f1}};
      out << record.dump() << '\n';
    }
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& seed : report.seeds) {
    if (seed.failure) failures.push_back({{"seed", seed.seed}, {"diagnostic", *seed.failure}});
  }
  nlohmann::json aggregate = {
      {"type", "aggregate"},
      {"method", to_string(report.config.method)},
      {"micro_f1_mean", report.micro.mean},
      {"micro_f1_std", report.micro.std},
      {"macro_f1_mean", report.macro.mean},
      {"macro_f1_std", report.macro.std},
      {"steps", report.schedule.size()},
      {"schedule", report.schedule.steps},
      {"seeds", report.config.seeds},
      {"failures", failures},
      {"metric", {{"f1", "span-level exact match"}, {"macro_zero_division", 0.0}}},
      {"config", to_json(report.config)},
      {"code_version", code_version()},
  };
  out << aggregate.dump() << '\n';
}

void write_timing_jsonl(std::ostream& out, const ExperimentReport& report) {
  for (const auto& seed : report.seeds) {
    for (const auto& step : seed.steps) {
      out << nlohmann::json{{"seed", seed.seed}, {"step", step.step}, {"wall_seconds", step.wall_seconds}}
                 .dump()
          << '\n';
    }
  }
}

StepCurve step_curve(const std::vector<nlohmann::json>& step_records) {
  std::map<std::size_t, std::map<std::uint64_t, double>> by_step;
  for (const auto& r : step_records) {
    by_step[r.at("step").get<std::size_t>()][r.at("seed").get<std::uint64_t>()] =
        r.at("micro_f1").get<double>();
  }
  StepCurve curve;
  for (const auto& [step, seeds] : by_step) {
    std::vector<std::vector<double>> samples;
    for (const auto& [seed, value] : seeds) samples.push_back({value});
    curve.steps.push_back(step);
    curve.micro.push_back(aggregate(samples));
  }
  return curve;
}

Aggregate recompute_aggregate(const std::vector<nlohmann::json>& step_records,
                              const std::string& field) {
  std::map<std::uint64_t, std::map<std::size_t, double>> by_seed;
  for (const auto& r : step_records) {
    by_seed[r.at("seed").get<std::uint64_t>()][r.at("step").get<std::size_t>()] =
        r.at(field).get<double>();
  }
  std::vector<std::vector<double>> samples;
  for (const auto& [seed, steps] : by_seed) {
    samples.emplace_back();
    for (const auto& [step, value] : steps) samples.back().push_back(value);
  }
  return aggregate(samples);
}

void write_curve_csv(std::ostream& out, const ExperimentReport& report) {
  std::vector<nlohmann::json> records;
  for (const auto& seed : report.seeds) {
    if (seed.failure) continue;
    for (const auto& step : seed.steps) {
      records.push_back({{"seed", seed.seed}, {"step", step.step}, {"micro_f1", step.micro_f1}});
    }
  }
  const StepCurve curve = step_curve(records);
  out << "step,mean_micro_f1,std_micro_f1\n";
  for (std::size_t i = 0; i < curve.steps.size(); ++i) {
    out << curve.steps[i] << ',' << nlohmann::json(curve.micro[i].mean).dump() << ','
        << nlohmann::json(curve.micro[i].std).dump() << '\n';
  }
}

LoadedReport read_report_jsonl(std::istream& in) {
  LoadedReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line);
    const std::string type = record.value("type", "");
    if (type == "step") {
      report.steps.push_back(std::move(record));
    } else if (type == "aggregate") {
      report.method = record.value("method", "");
      report.aggregate = std::move(record);
    }
  }
  if (report.aggregate.is_null()) throw Error("report has no aggregate record");
  return report;
}

}  // namespace cfner
