#include "symseg/report.hpp"

#include "symseg/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace symseg {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

std::string iou_rows_csv(const std::vector<IouRow>& rows) {
  std::ostringstream out;
  out << "step,branch,class,iou\n";
  for (const IouRow& row : rows) {
    out << row.step << ',' << (row.branch == 0 ? "color" : "lidar") << ',' << row.class_id << ','
        << format_double(row.iou) << '\n';
  }
  return out.str();
}

std::string loss_curves_csv(const std::vector<std::vector<double>>& curves) {
  std::ostringstream out;
  out << "step,iteration,loss\n";
  for (std::size_t step = 0; step < curves.size(); ++step) {
    for (std::size_t it = 0; it < curves[step].size(); ++it) {
      out << step << ',' << it << ',' << format_double(curves[step][it]) << '\n';
    }
  }
  return out.str();
}

std::string per_class_csv(const IouReport& report) {
  std::ostringstream out;
  out << "class,iou\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    out << (c + 1) << ',' << format_double(report.per_class[c]) << '\n';
  }
  out << "mean," << format_double(report.miou) << '\n';
  return out.str();
}

std::string modality_table_csv(const ModalityTable& table) {
  static const char* settings[3] = {"both", "color_only", "lidar_only"};
  std::ostringstream out;
  out << "setting,color_branch,lidar_branch\n";
  for (int row = 0; row < 3; ++row) {
    out << settings[row] << ',' << format_double(table.miou[row][0]) << ','
        << format_double(table.miou[row][1]) << '\n';
  }
  out << "average," << format_double(table.branch_average[0]) << ','
      << format_double(table.branch_average[1]) << '\n';
  return out.str();
}

std::string run_manifest_json(const RunConfig& cfg, const KeyValueConfig& kv) {
  nlohmann::json j;
  char digest_hex[20];
  std::snprintf(digest_hex, sizeof digest_hex, "%016llx",
                static_cast<unsigned long long>(cfg.digest));
  j["config_digest"] = digest_hex;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["schedule"]["preset"] = cfg.preset;
  j["schedule"]["total_classes"] = cfg.plan.schedule.total_classes;
  j["schedule"]["steps"] = cfg.plan.schedule.steps;
  j["plan"]["iterations"] = cfg.plan.iterations;
  j["plan"]["warmup_iterations"] = cfg.plan.warmup_iterations;
  j["plan"]["kd"] = cfg.plan.kd ? nlohmann::json(kd_variant_name(*cfg.plan.kd))
                                : nlohmann::json(nullptr);
  j["plan"]["inpainting"] = cfg.plan.inpainting;
  j["config"] = nlohmann::json::object();
  for (const auto& [key, value] : kv.entries()) j["config"][key] = value;
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace symseg
