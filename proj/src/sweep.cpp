#include <fstream>
#include <future>
#include <set>

#include "streamcl/harness.hpp"

namespace streamcl {
namespace {

SweepAxis parse_axis(const std::string& s) {
  if (s == "exemplar_budget") return SweepAxis::exemplar_budget;
  if (s == "step_size") return SweepAxis::step_size;
  if (s == "method") return SweepAxis::method;
  throw Error(ErrorCode::config,
              "sweep axis must be exemplar_budget, step_size or method, got \"" + s + "\"");
}

const char* axis_key(SweepAxis a) {
  switch (a) {
    case SweepAxis::exemplar_budget: return "exemplar_budget";
    case SweepAxis::step_size: return "step_size";
    case SweepAxis::method: return "method";
  }
  return "?";
}

nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
}

std::string value_label(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

SweepSpec SweepSpec::load(const std::filesystem::path& path) {
  const auto j = parse_file(path);
  if (!j.is_object()) throw Error(ErrorCode::config, "sweep spec must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> known = {"base", "axis", "values", "output_dir", "parallel"};
    if (!known.count(it.key())) {
      throw Error(ErrorCode::config, "unknown sweep key \"" + it.key() + "\"");
    }
  }
  SweepSpec s;
  try {
    const auto dir = path.parent_path();
    const auto& base = j.at("base");
    if (base.is_string()) {
      const auto base_path = std::filesystem::path(base.get<std::string>()).is_absolute()
                                 ? std::filesystem::path(base.get<std::string>())
                                 : dir / base.get<std::string>();
      s.base = parse_file(base_path);
      s.base_dir = base_path.parent_path();
    } else {
      s.base = base;
      s.base_dir = dir;
    }
    s.axis = parse_axis(j.at("axis").get<std::string>());
    s.values = j.at("values").get<std::vector<nlohmann::json>>();
    const auto out = std::filesystem::path(j.at("output_dir").get<std::string>());
    s.output_dir = out.is_absolute() ? out : dir / out;
    s.parallel = j.value("parallel", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("sweep spec: ") + e.what());
  }
  return s;
}

std::vector<RunConfig> SweepSpec::points() const {
  if (values.empty()) throw Error(ErrorCode::config, "sweep axis has an empty value list");
  std::set<std::string> labels;
  std::vector<RunConfig> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto label = value_label(values[i]);
    if (!labels.insert(label).second) {
      throw Error(ErrorCode::config, "duplicate sweep value " + label);
    }
    nlohmann::json j = base;
    if (!j.is_object()) throw Error(ErrorCode::config, "sweep base must be a JSON object");
    j[axis_key(axis)] = values[i];
    j.erase("output_dir");
    RunConfig c;
    try {
      c = RunConfig::from_json(j, base_dir);
    } catch (const Error& e) {
      throw Error(ErrorCode::config, "sweep point " + std::to_string(i) + " (" + axis_key(axis) +
                                         "=" + label + "): " + e.what());
    }
    c.output_dir = output_dir / (std::string(axis_key(axis)) + "_" + label);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  const auto configs = spec.points();
  auto run_one = [](const RunConfig& c) {
    const auto report = run_experiment(c);
    write_run_outputs(report, c.output_dir);
    return SweepRow{std::string(to_string(c.method)), c.step_size, c.exemplar_budget,
                    report.metrics.avg, report.metrics.last, c.output_dir};
  };

  std::vector<SweepRow> rows;
  if (spec.parallel) {
    std::vector<std::future<SweepRow>> futures;
    for (const auto& c : configs) futures.push_back(std::async(std::launch::async, run_one, c));
    for (auto& f : futures) rows.push_back(f.get());
  } else {
    for (const auto& c : configs) rows.push_back(run_one(c));
  }

  std::string csv = "method,M,Q,avg,last\n";
  for (const auto& r : rows) {
    csv += r.method + "," + std::to_string(r.step_size) + "," + std::to_string(r.exemplar_budget) +
           "," + format_number(r.avg) + "," + format_number(r.last) + "\n";
  }
  std::ofstream out(spec.output_dir / "summary.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + (spec.output_dir / "summary.csv").string());
  out << csv;
  return rows;
}

}  // namespace streamcl
